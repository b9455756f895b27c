use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use larp_core::runtime::{run_repl, run_to_dir, Bundle, RunOptions, Scenario, Session, Store};

#[derive(Parser)]
#[command(name = "larp", version, about = "Run role-playing agent scenarios")]
struct Cli {
    /// Log filter, e.g. `info` or `larp_core=debug`. Logs go to stderr.
    #[arg(long, global = true, env = "LARP_LOG", default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play a scenario's run script and write the transcript, snapshots and a final bundle.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "larp-out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a bundle saved by an earlier run of the same scenario.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also save `turn-<N>.bundle` after turn N (repeatable).
        #[arg(long = "save-after", value_name = "N")]
        save_after: Vec<u64>,
    },
    /// Play a scenario interactively as its player character.
    Repl {
        scenario: PathBuf,
        /// Start from a saved bundle.
        #[arg(long)]
        load: Option<PathBuf>,
    },
    /// Print one store of one character from a bundle.
    Inspect {
        bundle: PathBuf,
        character: String,
        /// wm, ltm, kb or skills
        store: Store,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(io::stderr)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            scenario,
            out,
            seed,
            resume,
            save_after,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let summary = run_to_dir(
                scenario,
                &out,
                &RunOptions {
                    seed,
                    resume,
                    save_after,
                },
            )?;
            println!(
                "{} turns, transcript {}",
                summary.turns,
                summary.transcript.display()
            );
        }
        Command::Repl { scenario, load } => {
            let mut session = Session::new(Scenario::load(&scenario)?)?;
            if let Some(path) = load {
                session.load_bundle(&path)?;
            }
            run_repl(&mut session, io::stdin().lock(), &mut io::stdout().lock())?;
        }
        Command::Inspect {
            bundle,
            character,
            store,
        } => {
            print!("{}", Bundle::load(&bundle)?.inspect(&character, store)?);
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            Session::new(s.clone())?;
            println!(
                "{}: ok ({} characters, {} locations, {} scripted turns)",
                s.name,
                s.characters.len(),
                s.world.locations.len(),
                s.turns.len()
            );
        }
    }
    Ok(())
}

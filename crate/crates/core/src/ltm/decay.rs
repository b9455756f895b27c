//! Power-law forgetting.
//!
//! The forgetting probability of a record is
//!
//! ```text
//! sigma = alpha * lambda * N * (1 + beta * t)^(-psi)
//! ```
//!
//! where `lambda` is the record's importance, `N` its retrieval count and `t` the
//! ticks since it was last retrieved. `alpha` and `beta` scale importance and time,
//! `psi` is the character's forgetting rate. The raw value is clamped to `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MemoryRecord;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Drop a record iff its sigma reaches the threshold.
    DeterministicThreshold,
    /// Drop a record with probability sigma.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayParams {
    pub alpha: f64,
    pub beta: f64,
    pub psi: f64,
    pub mode: RetrievalMode,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            psi: 0.5,
            mode: RetrievalMode::DeterministicThreshold,
            threshold: 0.9,
            seed: 0,
        }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.alpha, self.beta, self.psi, self.threshold]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("decay parameters must be finite".into());
        }
        if self.alpha <= 0.0 {
            return Err(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.beta < 0.0 || self.psi < 0.0 {
            return Err("beta and psi must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            ));
        }
        Ok(())
    }
}

/// Sigma from raw inputs; `elapsed` is ticks since the last retrieval.
pub fn decay_value(
    alpha: f64,
    importance: f64,
    retrievals: u32,
    beta: f64,
    psi: f64,
    elapsed: Tick,
) -> f64 {
    if retrievals == 0 {
        return 0.0;
    }
    let raw = alpha * importance * f64::from(retrievals) * (1.0 + beta * elapsed as f64).powf(-psi);
    if raw.is_nan() {
        return 0.0;
    }
    raw.clamp(0.0, 1.0)
}

/// Forgetting probability of `record` at `now`.
pub fn decay_probability(record: &MemoryRecord, now: Tick, params: &DecayParams) -> f64 {
    let elapsed = now.saturating_sub(record.last_retrieved_at);
    decay_value(
        params.alpha,
        record.importance,
        record.retrieval_count,
        params.beta,
        params.psi,
        elapsed,
    )
}

/// Seeded source of forgetting draws whose position survives persistence.
#[derive(Debug, Clone)]
pub struct ForgetSampler {
    seed: u64,
    rng: ChaCha8Rng,
}

impl PartialEq for ForgetSampler {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.rng.get_word_pos() == other.rng.get_word_pos()
    }
}

impl ForgetSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Sampler positioned after `word_pos` words of output.
    pub fn resume(seed: u64, word_pos: u128) -> Self {
        let mut sampler = Self::new(seed);
        sampler.rng.set_word_pos(word_pos);
        sampler
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    fn forgets(&mut self, sigma: f64) -> bool {
        self.rng.gen::<f64>() < sigma
    }
}

/// Records that survive forgetting at `now`, in input order.
pub fn forget_filter<R>(
    records: Vec<R>,
    now: Tick,
    params: &DecayParams,
    sampler: &mut ForgetSampler,
) -> Vec<R>
where
    R: std::borrow::Borrow<MemoryRecord>,
{
    records
        .into_iter()
        .filter(|r| {
            let sigma = decay_probability(r.borrow(), now, params);
            match params.mode {
                RetrievalMode::DeterministicThreshold => sigma < params.threshold,
                RetrievalMode::Stochastic => !sampler.forgets(sigma),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltm::{MemoryKind, Provenance};
    use proptest::prelude::*;

    fn record(importance: f64, retrievals: u32, last: Tick) -> MemoryRecord {
        MemoryRecord {
            id: 1,
            character_id: "npc".into(),
            kind: MemoryKind::EpisodicNl,
            content: "x".into(),
            question: None,
            embedding: vec![],
            importance,
            retrieval_count: retrievals,
            created_at: 0,
            last_retrieved_at: last,
            provenance: Provenance::Observed,
            distortion_count: 0,
            parent_id: None,
        }
    }

    fn params(alpha: f64, beta: f64, psi: f64) -> DecayParams {
        DecayParams {
            alpha,
            beta,
            psi,
            ..DecayParams::default()
        }
    }

    #[test]
    fn worked_values() {
        assert_eq!(
            decay_probability(&record(0.7, 0, 0), 40, &params(3.0, 0.5, 1.0)),
            0.0
        );
        assert_eq!(
            decay_probability(&record(1.0, 1, 0), 100, &params(1.0, 0.0, 2.0)),
            1.0
        );
        let sigma = decay_probability(&record(0.5, 2, 0), 3, &params(0.1, 1.0, 1.0));
        assert!((sigma - 0.025).abs() < 1e-12);
        assert_eq!(
            decay_probability(&record(1.0, 5, 0), 0, &params(1.0, 0.0, 0.0)),
            1.0
        );
    }

    #[test]
    fn deterministic_threshold_boundary() {
        let mut sampler = ForgetSampler::new(1);
        let p = DecayParams {
            threshold: 1.0,
            ..params(1.0, 0.0, 0.0)
        };
        // sigma = 0.5 * N, so N=1 gives 0.5 (kept) and N=2 gives 1.0 (dropped)
        let kept = forget_filter(
            vec![record(0.5, 1, 0), record(0.5, 2, 0), record(0.5, 0, 0)],
            0,
            &p,
            &mut sampler,
        );
        let counts: Vec<_> = kept.iter().map(|r| r.retrieval_count).collect();
        assert_eq!(counts, [1, 0]);
    }

    #[test]
    fn unretrieved_always_kept() {
        let mut sampler = ForgetSampler::new(1);
        let p = DecayParams {
            threshold: 1e-9,
            ..params(10.0, 0.0, 0.0)
        };
        assert_eq!(
            forget_filter(vec![record(1.0, 0, 0)], 50, &p, &mut sampler).len(),
            1
        );
    }

    #[test]
    fn stochastic_rate_within_three_sigma() {
        // importance 0.3, one retrieval, no time decay: sigma = 0.3 exactly.
        // Retained count ~ Binomial(1000, 0.7): mean 700, sd ~14.5, so [650, 750] is > 3 sd.
        let p = DecayParams {
            mode: RetrievalMode::Stochastic,
            seed: 42,
            ..params(1.0, 0.0, 0.0)
        };
        let records: Vec<_> = (0..1000).map(|_| record(0.3, 1, 0)).collect();
        let mut sampler = ForgetSampler::new(p.seed);
        let kept = forget_filter(records, 0, &p, &mut sampler).len();
        assert!((650..=750).contains(&kept), "{kept}");
    }

    #[test]
    fn sampler_resumes_bit_exactly() {
        let mut a = ForgetSampler::new(9);
        for _ in 0..17 {
            a.forgets(0.5);
        }
        let mut b = ForgetSampler::resume(9, a.word_pos());
        let next_a: Vec<_> = (0..32).map(|_| a.forgets(0.5)).collect();
        let next_b: Vec<_> = (0..32).map(|_| b.forgets(0.5)).collect();
        assert_eq!(next_a, next_b);
    }

    proptest! {
        #[test]
        fn bounded_and_monotone_in_time(
            alpha in 0.001f64..10.0,
            importance in 0.0f64..=1.0,
            n in 0u32..50,
            beta in 0.001f64..5.0,
            psi in 0.001f64..5.0,
            t in 0u64..10_000,
            dt in 0u64..10_000,
        ) {
            let s1 = decay_value(alpha, importance, n, beta, psi, t);
            let s2 = decay_value(alpha, importance, n, beta, psi, t + dt);
            prop_assert!((0.0..=1.0).contains(&s1));
            prop_assert!(s2 <= s1);
        }
    }
}

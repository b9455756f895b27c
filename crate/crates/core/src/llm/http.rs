//! Chat-completion HTTP backend.
//!
//! Request body (POST, `application/json`):
//!
//! | field         | type                                  |
//! |---------------|---------------------------------------|
//! | `model`       | string, from the role routing map     |
//! | `messages`    | array of `{"role": "system"\|"user"\|"assistant", "content": string}` |
//! | `temperature` | number                                |
//! | `max_tokens`  | integer                               |
//! | `seed`        | integer, omitted when unset           |
//!
//! Response body: `choices[0].message.content` is the reply text; the optional
//! `usage.prompt_tokens` / `usage.completion_tokens` fill [`Usage`].
//!
//! Transport failures, 429 and 5xx responses are retried up to `max_retries` times
//! with exponential backoff. Other non-2xx statuses fail immediately.

use std::io;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendConfig, ChatBackend, ChatRequest, ChatResponse, LlmError, Usage};

/// Environment variable consulted for the endpoint when the scenario leaves it unset.
pub const ENDPOINT_ENV: &str = "LARP_LLM_ENDPOINT";
/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "LARP_LLM_TOKEN";

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct HttpBackend {
    id: String,
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
    timeout: Duration,
    max_retries: u32,
    backoff_base: Duration,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("max_retries", &self.max_retries)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, LlmError> {
        let endpoint = config
            .endpoint
            .clone()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| LlmError::InvalidConfig("http backend requires an endpoint".into()))?;
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(Self {
            id: format!("http:{endpoint}"),
            endpoint,
            token: config.auth_token.clone(),
            agent,
            timeout: config.timeout,
            max_retries: config.max_retries,
            backoff_base: config.backoff_base,
        })
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Result<ChatResponse, Attempt> {
        let mut call = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(token) = &self.token {
            call = call.set("Authorization", &format!("Bearer {token}"));
        }
        let payload = serde_json::to_string(body).expect("wire request serialises");
        match call.send_string(&payload) {
            Ok(response) => {
                let text = response
                    .into_string()
                    .map_err(|e| Attempt::Retry(self.io_error(e)))?;
                let parsed: WireResponse = serde_json::from_str(&text)
                    .map_err(|e| Attempt::Fatal(LlmError::MalformedResponse(e.to_string())))?;
                let first = parsed.choices.into_iter().next().ok_or_else(|| {
                    Attempt::Fatal(LlmError::MalformedResponse("no choices".into()))
                })?;
                let usage = parsed
                    .usage
                    .map(|u| Usage {
                        prompt_tokens: u.prompt_tokens,
                        response_tokens: u.completion_tokens,
                    })
                    .unwrap_or_default();
                Ok(ChatResponse {
                    text: first.message.content.unwrap_or_default(),
                    backend_id: self.id.clone(),
                    usage,
                })
            }
            Err(ureq::Error::Status(status, response)) => {
                let body = response.into_string().unwrap_or_default();
                let error = LlmError::BackendRejected { status, body };
                if status == 429 || status >= 500 {
                    Err(Attempt::Retry(error))
                } else {
                    Err(Attempt::Fatal(error))
                }
            }
            Err(ureq::Error::Transport(transport)) => {
                let timed_out = std::error::Error::source(&transport)
                    .and_then(|s| s.downcast_ref::<io::Error>())
                    .is_some_and(|e| {
                        matches!(
                            e.kind(),
                            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
                        )
                    });
                if timed_out {
                    Err(Attempt::Retry(LlmError::Timeout(self.timeout)))
                } else {
                    Err(Attempt::Retry(LlmError::BackendUnreachable(
                        transport.to_string(),
                    )))
                }
            }
        }
    }

    fn io_error(&self, error: io::Error) -> LlmError {
        if matches!(
            error.kind(),
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
        ) {
            LlmError::Timeout(self.timeout)
        } else {
            LlmError::BackendUnreachable(error.to_string())
        }
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, model: &str, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = WireRequest {
            model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.speaker.as_str(),
                    content: &m.text,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(response) => return Ok(response),
                Err(Attempt::Fatal(error)) => return Err(error),
                Err(Attempt::Retry(error)) => {
                    if attempt >= self.max_retries {
                        return Err(error);
                    }
                    let delay = self.backoff_base.saturating_mul(1u32 << attempt.min(16));
                    tracing::warn!(attempt, ?delay, %error, "retrying chat request");
                    thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmBridge, Role};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves one canned response per connection, recording request bodies.
    fn serve(responses: Vec<(u16, String, Duration)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        thread::spawn(move || {
            for (status, body, delay) in responses {
                let Ok((stream, _)) = listener.accept() else {
                    return;
                };
                let mut reader = BufReader::new(stream);
                let mut length = 0usize;
                let mut headers = Vec::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    headers.push(line);
                }
                let mut request = vec![0; length];
                reader.read_exact(&mut request).unwrap();
                log.lock().unwrap().push(format!(
                    "{}\n{}",
                    headers.concat(),
                    String::from_utf8(request).unwrap()
                ));
                thread::sleep(delay);
                let mut stream = reader.into_inner();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        (url, seen)
    }

    fn config(url: &str) -> BackendConfig {
        let mut config = BackendConfig::http(url, "npc-base");
        config.models.insert("codegen".into(), "npc-coder".into());
        config.auth_token = Some("sekrit".into());
        config.backoff_base = Duration::from_millis(1);
        config.max_retries = 2;
        config
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello there"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#;

    #[test]
    fn wire_format_and_routing() {
        let (url, seen) = serve(vec![(200, OK.into(), Duration::ZERO)]);
        let bridge = config(&url).build().unwrap();
        let mut request = ChatRequest::prompt(Role::Codegen, "you are a smith", "make a script");
        request.seed = Some(11);
        let reply = bridge.complete(&request).unwrap();
        assert_eq!(reply.text, "hello there");
        assert_eq!(
            reply.usage,
            Usage {
                prompt_tokens: 7,
                response_tokens: 2
            }
        );
        let sent = seen.lock().unwrap()[0].clone();
        assert!(sent
            .to_ascii_lowercase()
            .contains("authorization: bearer sekrit"));
        let body: serde_json::Value =
            serde_json::from_str(sent.split('\n').next_back().unwrap()).unwrap();
        assert_eq!(body["model"], "npc-coder");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "make a script");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 512);
        assert_eq!(body["seed"], 11);
    }

    #[test]
    fn retries_server_errors() {
        let (url, seen) = serve(vec![
            (503, "busy".into(), Duration::ZERO),
            (500, "oops".into(), Duration::ZERO),
            (200, OK.into(), Duration::ZERO),
        ]);
        let bridge = config(&url).build().unwrap();
        let reply = bridge
            .complete(&ChatRequest::prompt(Role::Intent, "s", "u"))
            .unwrap();
        assert_eq!(reply.text, "hello there");
        assert_eq!(seen.lock().unwrap().len(), 3);
        let body: serde_json::Value =
            serde_json::from_str(seen.lock().unwrap()[0].split('\n').next_back().unwrap()).unwrap();
        assert_eq!(body["model"], "npc-base");
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn rejected_after_retries() {
        let (url, _) = serve(vec![(502, "a".into(), Duration::ZERO); 3]);
        let err = config(&url)
            .build()
            .unwrap()
            .complete(&ChatRequest::prompt(Role::Intent, "s", "u"))
            .unwrap_err();
        assert!(
            matches!(err, LlmError::BackendRejected { status: 502, .. }),
            "{err}"
        );
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = serve(vec![
            (400, "bad".into(), Duration::ZERO),
            (200, OK.into(), Duration::ZERO),
        ]);
        let err = config(&url)
            .build()
            .unwrap()
            .complete(&ChatRequest::prompt(Role::Intent, "s", "u"))
            .unwrap_err();
        assert!(matches!(err, LlmError::BackendRejected { status: 400, .. }));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn unreachable_endpoint() {
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let mut cfg = config(&format!("http://127.0.0.1:{port}/v1"));
        cfg.max_retries = 1;
        let err = cfg
            .build()
            .unwrap()
            .complete(&ChatRequest::prompt(Role::Intent, "s", "u"))
            .unwrap_err();
        assert!(matches!(err, LlmError::BackendUnreachable(_)), "{err}");
    }

    #[test]
    fn slow_server_times_out() {
        let (url, _) = serve(vec![(200, OK.into(), Duration::from_millis(600))]);
        let mut cfg = config(&url);
        cfg.max_retries = 0;
        cfg.timeout = Duration::from_millis(150);
        let bridge: LlmBridge = cfg.build().unwrap();
        let err = bridge
            .complete(&ChatRequest::prompt(Role::Intent, "s", "u"))
            .unwrap_err();
        assert!(matches!(err, LlmError::Timeout(_)), "{err}");
    }
}

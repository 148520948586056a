//! Client for an external chat-completion inference service with
//! schema-constrained output, plus a fixture transport for deterministic
//! replay in tests. The live audit path is identical to the synthetic
//! one; only the transport differs.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, ParseFailureReason, Result, TransportFailureReason};
use crate::market::{Bundle, Traveler};
use crate::providers::PerceptionReader;
use crate::rule::PerceptionVector;

/// Environment variable naming the chat-completions endpoint URL.
pub const ENDPOINT_ENV: &str = "TOURMART_ENDPOINT";
/// Environment variable holding the bearer credential.
pub const CREDENTIAL_ENV: &str = "TOURMART_API_KEY";

/// One transport call's archived outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallLog {
    pub request_hash: String,
    pub latency_ms: u128,
    pub attempts: u32,
}

/// A chat call returning the service's structured output body.
pub trait ChatTransport {
    fn chat(
        &self,
        system: &str,
        user: &str,
        schema: &serde_json::Value,
    ) -> Result<(String, CallLog)>;

    fn fingerprint(&self) -> String;
}

pub fn request_hash(system: &str, user: &str, schema: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system.as_bytes());
    hasher.update([0u8]);
    hasher.update(user.as_bytes());
    hasher.update([0u8]);
    hasher.update(schema.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

/// Blocking HTTP client with exponential backoff. Expects an
/// OpenAI-style chat-completions dialect; the response's first choice
/// message content is the structured body.
pub struct HttpChatClient {
    endpoint: String,
    credential: String,
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub timeout: Duration,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    /// Reads endpoint and credential from the environment.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::InvalidConfig(format!("{ENDPOINT_ENV} not set")))?;
        let credential = std::env::var(CREDENTIAL_ENV)
            .map_err(|_| Error::InvalidConfig(format!("{CREDENTIAL_ENV} not set")))?;
        Ok(Self::new(endpoint, credential))
    }

    pub fn new(endpoint: String, credential: String) -> Self {
        let timeout = Duration::from_secs(60);
        HttpChatClient {
            endpoint,
            credential,
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
            timeout,
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("client builds"),
        }
    }

    fn call_once(
        &self,
        system: &str,
        user: &str,
        schema: &serde_json::Value,
    ) -> Result<String> {
        let body = serde_json::json!({
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": "output", "schema": schema},
            },
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.credential)
            .json(&body)
            .send()
            .map_err(|e| {
                let reason = if e.is_timeout() {
                    TransportFailureReason::Timeout
                } else {
                    TransportFailureReason::Connect
                };
                Error::TransportFailure { reason, detail: e.to_string() }
            })?;
        if !resp.status().is_success() {
            return Err(Error::TransportFailure {
                reason: TransportFailureReason::Status,
                detail: format!("HTTP {}", resp.status()),
            });
        }
        let value: serde_json::Value = resp.json().map_err(|e| Error::ParseFailure {
            reason: ParseFailureReason::Schema,
            detail: e.to_string(),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::ParseFailure {
                reason: ParseFailureReason::Schema,
                detail: "missing choices[0].message.content".to_string(),
            })
    }
}

impl ChatTransport for HttpChatClient {
    fn chat(
        &self,
        system: &str,
        user: &str,
        schema: &serde_json::Value,
    ) -> Result<(String, CallLog)> {
        let start = std::time::Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.call_once(system, user, schema) {
                Ok(body) => {
                    return Ok((
                        body,
                        CallLog {
                            request_hash: request_hash(system, user, schema),
                            latency_ms: start.elapsed().as_millis(),
                            attempts,
                        },
                    ));
                }
                // only transport failures are retryable
                Err(e @ Error::TransportFailure { .. }) if attempts <= self.max_retries => {
                    std::thread::sleep(self.base_backoff * 2u32.pow(attempts - 1));
                    let _ = e;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn fingerprint(&self) -> String {
        format!("http-chat/{}", self.endpoint)
    }
}

/// Test double replaying canned bodies keyed by request hash (or by a
/// wildcard body when only one response is expected).
#[derive(Debug, Default, Clone)]
pub struct FixtureTransport {
    by_hash: BTreeMap<String, String>,
    fallback: Option<String>,
}

impl FixtureTransport {
    pub fn with_fallback(body: impl Into<String>) -> Self {
        FixtureTransport { by_hash: BTreeMap::new(), fallback: Some(body.into()) }
    }

    pub fn insert(&mut self, hash: impl Into<String>, body: impl Into<String>) {
        self.by_hash.insert(hash.into(), body.into());
    }
}

impl ChatTransport for FixtureTransport {
    fn chat(
        &self,
        system: &str,
        user: &str,
        schema: &serde_json::Value,
    ) -> Result<(String, CallLog)> {
        let hash = request_hash(system, user, schema);
        let body = self
            .by_hash
            .get(&hash)
            .or(self.fallback.as_ref())
            .ok_or_else(|| Error::TransportFailure {
                reason: TransportFailureReason::Connect,
                detail: format!("no fixture for request {hash}"),
            })?;
        Ok((body.clone(), CallLog { request_hash: hash, latency_ms: 0, attempts: 1 }))
    }

    fn fingerprint(&self) -> String {
        "fixture-transport".to_string()
    }
}

/// The guided-JSON shape the reader service must emit.
#[derive(Debug, Deserialize)]
struct ReaderPayload {
    perceived_fit_delta: f64,
    perceived_risk: f64,
    trust_score: f64,
    urgency_felt: f64,
    #[serde(default)]
    reasoning: String,
}

pub fn reader_schema() -> serde_json::Value {
    serde_json::json!({
        "type": "object",
        "properties": {
            "perceived_fit_delta": {"type": "number"},
            "perceived_risk": {"type": "number"},
            "trust_score": {"type": "number"},
            "urgency_felt": {"type": "number"},
            "reasoning": {"type": "string"},
        },
        "required": [
            "perceived_fit_delta", "perceived_risk", "trust_score", "urgency_felt"
        ],
    })
}

/// Perception reader over any chat transport.
pub struct RemoteReader<T: ChatTransport> {
    pub transport: T,
}

impl<T: ChatTransport> RemoteReader<T> {
    pub fn new(transport: T) -> Self {
        RemoteReader { transport }
    }
}

impl<T: ChatTransport> PerceptionReader for RemoteReader<T> {
    fn extract(
        &self,
        traveler: &Traveler,
        bundle: &Bundle,
        message: &str,
    ) -> Result<PerceptionVector> {
        let system = "You are a traveler evaluating one recommended travel bundle. \
                      Report your perception of the message as JSON.";
        let user = format!(
            "Budget: {}. Bundle: {} at {}. Message:\n{}",
            crate::fixed::format_cents(traveler.budget_cents),
            bundle.display_name,
            crate::fixed::format_cents(bundle.price_cents),
            message
        );
        let (body, _log) = self.transport.chat(system, &user, &reader_schema())?;
        let payload: ReaderPayload =
            serde_json::from_str(&body).map_err(|e| Error::ParseFailure {
                reason: ParseFailureReason::Schema,
                detail: format!("{e}; raw body: {body}"),
            })?;
        let phi = PerceptionVector {
            fit_delta: payload.perceived_fit_delta,
            trust: payload.trust_score,
            risk: payload.perceived_risk,
            urgency: payload.urgency_felt,
            reasoning: payload.reasoning,
        };
        phi.validate().map_err(|e| Error::ParseFailure {
            reason: ParseFailureReason::OutOfRange,
            detail: e.to_string(),
        })?;
        Ok(phi)
    }

    fn fingerprint(&self) -> String {
        format!("remote-reader/{}", self.transport.fingerprint())
    }
}

//! Generation requests against LLM-as-a-service endpoints.
//!
//! A [`Gateway`] wraps one [`Provider`] implementation (chosen by name from a
//! [`ProviderRegistry`]) and adds the two behaviours every provider shares:
//! a cap on unanswered requests and retry of transient failures with
//! full-jitter exponential backoff.

pub mod extract;
pub mod http;
pub mod mock;
pub mod prompt;
mod provider;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Semaphore};

pub use extract::{extract_code, ExtractError};
pub use prompt::build_prompt;
pub use provider::{Completion, Provider, ProviderFactory, ProviderFailure, ProviderRegistry};

use crate::types::{GenerationParams, UsageRecord};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown provider `{name}` (registered: {known})")]
    UnknownProvider { name: String, known: String },
    #[error("invalid provider profile `{profile}`: {message}")]
    InvalidProfile { profile: String, message: String },
    #[error("environment variable `{0}` holding the provider secret is not set")]
    MissingSecret(String),
    #[error("http client setup failed: {0}")]
    Client(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

fn default_base_url() -> String {
    "http://127.0.0.1:11434/v1".to_string()
}

fn default_temperature_range() -> [f64; 2] {
    [0.0, 2.0]
}

fn default_request_timeout() -> u64 {
    120
}

fn default_max_retries() -> u32 {
    3
}

fn default_retry_base_delay() -> u64 {
    500
}

/// Connection settings for one chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderProfile {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_temperature_range")]
    pub temperature_range: [f64; 2],
    #[serde(default = "default_request_timeout")]
    pub request_timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_delay")]
    pub retry_base_delay_ms: u64,
    /// Extra top-level fields merged into every request body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_body: Option<serde_json::Value>,
}

impl ProviderProfile {
    /// Profile for a local endpoint with default limits.
    pub fn local(name: &str) -> Self {
        Self {
            name: name.to_string(),
            base_url: default_base_url(),
            auth_env_var: None,
            temperature_range: default_temperature_range(),
            request_timeout_s: default_request_timeout(),
            max_retries: default_max_retries(),
            retry_base_delay_ms: default_retry_base_delay(),
            extra_body: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |message: String| GatewayError::InvalidProfile {
            profile: self.name.clone(),
            message,
        };
        let [lo, hi] = self.temperature_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(format!("bad temperature range [{lo}, {hi}]")));
        }
        let url = reqwest::Url::parse(&self.base_url)
            .map_err(|e| invalid(format!("base_url `{}`: {e}", self.base_url)))?;
        if url.cannot_be_a_base() {
            return Err(invalid(format!("base_url `{}` is not absolute", self.base_url)));
        }
        if self.request_timeout_s == 0 || self.retry_base_delay_ms == 0 {
            return Err(invalid("timeouts and delays must be positive".into()));
        }
        if let Some(extra) = &self.extra_body {
            if !extra.is_object() {
                return Err(invalid("extra_body must be a table".into()));
            }
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay_ms: self.retry_base_delay_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl RetryPolicy {
    /// Upper bound of the backoff window after failed attempt `attempt` (0-based).
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor))
    }

    /// Full jitter: uniform in `[0, base * 2^attempt]`.
    pub fn delay<R: Rng + ?Sized>(&self, attempt: u32, rng: &mut R) -> Duration {
        let ceiling = self.ceiling(attempt).as_millis() as u64;
        Duration::from_millis(rng.random_range(0..=ceiling))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub request_id: String,
    pub problem_id: String,
    pub index: u32,
    pub prompt: String,
    pub params: GenerationParams,
}

impl GenerationRequest {
    pub fn new(problem_id: &str, index: u32, prompt: String, params: GenerationParams) -> Self {
        Self {
            request_id: format!("{problem_id}#{index}"),
            problem_id: problem_id.to_string(),
            index,
            prompt,
            params,
        }
    }
}

/// A request that did not produce a response after all retries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (after {attempts} attempt(s))")]
pub struct ProviderError {
    pub message: String,
    pub attempts: u32,
    pub transient: bool,
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub request_id: String,
    pub problem_id: String,
    pub index: u32,
    pub outcome: Result<String, ProviderError>,
    pub usage: UsageRecord,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// Bounded, retrying front end over a [`Provider`].
pub struct Gateway {
    provider: Arc<dyn Provider>,
    retry: RetryPolicy,
    permits: Arc<Semaphore>,
    cap: usize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, retry: RetryPolicy, in_flight_cap: usize) -> Self {
        assert!(in_flight_cap >= 1, "in_flight_cap must be at least 1");
        Self {
            provider,
            retry,
            permits: Arc::new(Semaphore::new(in_flight_cap)),
            cap: in_flight_cap,
        }
    }

    pub fn in_flight_cap(&self) -> usize {
        self.cap
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Issues one request, retrying transient failures. Never panics on provider failure.
    ///
    /// The in-flight permit is held across backoff sleeps, so a request waiting
    /// to be retried still counts as unanswered.
    pub async fn generate(&self, request: &GenerationRequest) -> GenerationResult {
        let _permit = self.permits.acquire().await.expect("gateway semaphore closed");
        let started = Instant::now();
        let mut usage = UsageRecord::default();
        let mut attempt = 0u32;
        let outcome = loop {
            match self.provider.complete(request).await {
                Ok(c) => {
                    usage = usage + c.usage;
                    break Ok(c.text);
                }
                Err(f) => {
                    usage = usage + f.usage;
                    if f.transient && attempt < self.retry.max_retries {
                        let delay = self.retry.delay(attempt, &mut rand::rng());
                        log::debug!(
                            "{}: transient failure ({}), retry {} in {:?}",
                            request.request_id,
                            f.message,
                            attempt + 1,
                            delay
                        );
                        attempt += 1;
                        tokio::time::sleep(delay).await;
                        continue;
                    }
                    break Err(ProviderError {
                        message: f.message,
                        attempts: attempt + 1,
                        transient: f.transient,
                    });
                }
            }
        };
        GenerationResult {
            request_id: request.request_id.clone(),
            problem_id: request.problem_id.clone(),
            index: request.index,
            outcome,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
            attempts: attempt + 1,
        }
    }

    /// Issues every request concurrently (bounded by the in-flight cap).
    ///
    /// Exactly one result per request arrives on the returned channel, in
    /// completion order.
    pub fn generate_batch(
        self: &Arc<Self>,
        requests: Vec<GenerationRequest>,
    ) -> mpsc::UnboundedReceiver<GenerationResult> {
        let (tx, rx) = mpsc::unbounded_channel();
        for req in requests {
            let gw = Arc::clone(self);
            let tx = tx.clone();
            tokio::spawn(async move {
                let result = gw.generate(&req).await;
                let _ = tx.send(result);
            });
        }
        rx
    }
}

/// Convenience wrapper: builds a [`Gateway`] from a profile and runs a batch.
pub fn generate_batch(
    requests: Vec<GenerationRequest>,
    provider: Arc<dyn Provider>,
    profile: &ProviderProfile,
    in_flight_cap: usize,
) -> mpsc::UnboundedReceiver<GenerationResult> {
    Arc::new(Gateway::new(provider, profile.retry_policy(), in_flight_cap)).generate_batch(requests)
}

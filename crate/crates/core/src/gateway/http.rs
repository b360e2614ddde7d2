//! Chat-completions client.
//!
//! `POST {base_url}/chat/completions` with a single user message and `n = 1`.
//! HTTP 408, 429 and 5xx as well as transport errors are transient; any other
//! non-success status is permanent.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{Completion, GatewayError, GenerationRequest, Provider, ProviderFailure, ProviderProfile};
use crate::types::UsageRecord;

pub struct ChatCompletionsProvider {
    client: reqwest::Client,
    endpoint: String,
    secret: Option<String>,
    extra_body: Option<Value>,
}

impl ChatCompletionsProvider {
    pub fn new(profile: &ProviderProfile) -> Result<Self, GatewayError> {
        profile.validate()?;
        let secret = match &profile.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingSecret(var.clone()))?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(profile.request_timeout_s))
            .build()
            .map_err(|e| GatewayError::Client(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", profile.base_url.trim_end_matches('/')),
            secret,
            extra_body: profile.extra_body.clone(),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// Request body for one generation.
pub fn request_body(request: &GenerationRequest, extra: Option<&Value>) -> Value {
    let p = &request.params;
    let mut body = json!({
        "model": p.model_id,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": p.temperature,
        "top_p": p.top_p,
        "max_tokens": p.max_output_tokens,
        "n": 1,
    });
    if let (Some(Value::Object(extra)), Value::Object(obj)) = (extra, &mut body) {
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
    }
    body
}

pub fn is_transient_status(status: StatusCode) -> bool {
    status == StatusCode::REQUEST_TIMEOUT
        || status == StatusCode::TOO_MANY_REQUESTS
        || status.is_server_error()
}

/// Pulls the message text and token usage out of a response document.
pub fn parse_response(body: &Value) -> Result<Completion, ProviderFailure> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderFailure::permanent("response lacks choices[0].message.content"))?;
    let tokens = |ptr: &str| body.pointer(ptr).and_then(Value::as_u64).unwrap_or(0);
    Ok(Completion {
        text: text.to_string(),
        usage: UsageRecord::new(tokens("/usage/prompt_tokens"), tokens("/usage/completion_tokens")),
    })
}

#[async_trait]
impl Provider for ChatCompletionsProvider {
    fn name(&self) -> &str {
        "chat-completions"
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<Completion, ProviderFailure> {
        let mut builder = self
            .client
            .post(&self.endpoint)
            .json(&request_body(request, self.extra_body.as_ref()));
        if let Some(secret) = &self.secret {
            builder = builder.bearer_auth(secret);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| ProviderFailure::transient(format!("transport error: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            let snippet: String = response.text().await.unwrap_or_default().chars().take(512).collect();
            let message = format!("HTTP {status}: {snippet}");
            return Err(if is_transient_status(status) {
                ProviderFailure::transient(message)
            } else {
                ProviderFailure::permanent(message)
            });
        }
        let body: Value = response.json().await.map_err(|e| {
            if e.is_timeout() {
                ProviderFailure::transient(format!("timeout reading body: {e}"))
            } else {
                ProviderFailure::permanent(format!("malformed response body: {e}"))
            }
        })?;
        parse_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GenerationParams;

    #[test]
    fn body_shape() {
        let req = GenerationRequest::new("p", 2, "hi".into(), GenerationParams::default());
        let extra = json!({"seed": 5});
        let body = request_body(&req, Some(&extra));
        assert_eq!(body["model"], "mock-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["n"], 1);
        assert_eq!(body["max_tokens"], 4096);
        assert_eq!(body["seed"], 5);
    }

    #[test]
    fn status_classes() {
        for s in [408u16, 429, 500, 502, 503] {
            assert!(is_transient_status(StatusCode::from_u16(s).unwrap()), "{s}");
        }
        for s in [400u16, 401, 403, 404, 422] {
            assert!(!is_transient_status(StatusCode::from_u16(s).unwrap()), "{s}");
        }
    }

    #[test]
    fn usage_defaults_to_zero() {
        let c = parse_response(&json!({"choices": [{"message": {"content": "x"}}]})).unwrap();
        assert_eq!(c.usage, UsageRecord::default());
        let c = parse_response(&json!({
            "choices": [{"message": {"content": "x"}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7}
        }))
        .unwrap();
        assert_eq!(c.usage, UsageRecord::new(11, 7));
        assert!(parse_response(&json!({"choices": []})).is_err());
    }

    #[test]
    fn missing_secret_is_reported() {
        let mut p = ProviderProfile::local("x");
        p.auth_env_var = Some("HDLSCALE_TEST_SECRET_THAT_IS_NOT_SET".into());
        assert!(matches!(
            ChatCompletionsProvider::new(&p),
            Err(GatewayError::MissingSecret(_))
        ));
    }
}

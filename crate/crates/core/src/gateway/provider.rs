use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;

use super::{GatewayError, GenerationRequest};
use crate::config::CampaignConfig;
use crate::types::UsageRecord;

/// A successful completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: UsageRecord,
}

/// One failed attempt. `transient` failures are eligible for retry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderFailure {
    pub transient: bool,
    pub message: String,
    pub usage: UsageRecord,
}

impl ProviderFailure {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            transient: true,
            message: message.into(),
            usage: UsageRecord::default(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            transient: false,
            message: message.into(),
            usage: UsageRecord::default(),
        }
    }
}

/// A text-generation backend. One call produces one response.
#[async_trait]
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, request: &GenerationRequest) -> Result<Completion, ProviderFailure>;
}

pub type ProviderFactory =
    Box<dyn Fn(&CampaignConfig) -> Result<Arc<dyn Provider>, GatewayError> + Send + Sync>;

/// Provider implementations by name, as referenced by `CampaignConfig::provider`.
pub struct ProviderRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `chat-completions` (HTTP) and `mock`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(
            "chat-completions",
            Box::new(|config| {
                let profile = config.provider_profile()?;
                Ok(Arc::new(super::http::ChatCompletionsProvider::new(&profile)?) as Arc<dyn Provider>)
            }),
        );
        r.register(
            "mock",
            Box::new(|config| {
                Ok(Arc::new(super::mock::MockProvider::new(
                    config.mock.clone(),
                    config.seed,
                )) as Arc<dyn Provider>)
            }),
        );
        r
    }

    pub fn register(&mut self, name: impl Into<String>, factory: ProviderFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, config: &CampaignConfig) -> Result<Arc<dyn Provider>, GatewayError> {
        let factory =
            self.factories
                .get(&config.provider)
                .ok_or_else(|| GatewayError::UnknownProvider {
                    name: config.provider.clone(),
                    known: self.names().join(", "),
                })?;
        factory(config)
    }
}

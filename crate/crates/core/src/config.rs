//! Campaign configuration: file parsing, CLI overrides and validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::mock::MockSettings;
use crate::gateway::ProviderProfile;
use crate::sim::SimProfile;
use crate::types::{GenerationParams, PricingTable, StopMode};

pub const DEFAULT_MAX_SAMPLES: u32 = 512;
pub const DEFAULT_GEN_CONCURRENCY: u32 = 16;
pub const DEFAULT_QUEUE_CAPACITY: u32 = 64;
pub const DEFAULT_SIM_TIMEOUT_S: u64 = 60;

/// Prompt preamble revision used when the config does not pin one.
pub const DEFAULT_PROMPT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("temperature {value} outside the range [{lo}, {hi}] declared by provider profile `{profile}`")]
    TemperatureOutOfRange {
        value: f64,
        lo: f64,
        hi: f64,
        profile: String,
    },
    #[error("no pricing entry for model `{0}`")]
    UnknownModelForPricing(String),
    #[error("invalid price for model `{0}`: prices must be finite and non-negative")]
    InvalidPricing(String),
    #[error("unknown provider profile `{0}`")]
    UnknownProviderProfile(String),
    #[error("unknown simulator profile `{0}`")]
    UnknownSimProfile(String),
    #[error("invalid value for `{field}`: {message}")]
    InvalidValue { field: &'static str, message: String },
}

fn default_provider() -> String {
    "chat-completions".to_string()
}

fn default_sim_profile() -> String {
    "icarus".to_string()
}

fn default_prompt_version() -> String {
    DEFAULT_PROMPT_VERSION.to_string()
}

fn default_progress_interval() -> u64 {
    2000
}

/// A complete run definition.
///
/// Fields left as `None` are filled by [`validate_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub suite_path: PathBuf,
    #[serde(default)]
    pub output_dir: PathBuf,
    /// Provider implementation, looked up in the provider registry.
    #[serde(default = "default_provider")]
    pub provider: String,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default)]
    pub max_samples: Option<u32>,
    #[serde(default)]
    pub stop_mode: Option<StopMode>,
    #[serde(default)]
    pub gen_concurrency: Option<u32>,
    #[serde(default)]
    pub sim_workers: Option<u32>,
    #[serde(default)]
    pub queue_capacity: Option<u32>,
    #[serde(default = "default_sim_profile")]
    pub sim_profile: String,
    #[serde(default)]
    pub sim_timeout_s: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prompt_version")]
    pub prompt_version: String,
    /// Retain scratch directories of failed simulations under the output dir.
    #[serde(default)]
    pub keep_failed: bool,
    #[serde(default = "default_progress_interval")]
    pub progress_interval_ms: u64,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderProfile>,
    #[serde(default)]
    pub simulators: BTreeMap<String, SimProfile>,
    #[serde(default)]
    pub pricing: PricingTable,
    #[serde(default)]
    pub mock: MockSettings,
}

impl CampaignConfig {
    /// A config wired to the mock provider and mock simulator.
    pub fn mock(suite_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            suite_path: suite_path.into(),
            output_dir: output_dir.into(),
            provider: "mock".into(),
            params: GenerationParams::default(),
            max_samples: None,
            stop_mode: None,
            gen_concurrency: None,
            sim_workers: None,
            queue_capacity: None,
            sim_profile: "mock".into(),
            sim_timeout_s: None,
            seed: 0,
            prompt_version: default_prompt_version(),
            keep_failed: false,
            progress_interval_ms: default_progress_interval(),
            providers: BTreeMap::new(),
            simulators: BTreeMap::new(),
            pricing: PricingTable::default(),
            mock: MockSettings::default(),
        }
    }

    pub fn max_samples(&self) -> u32 {
        self.max_samples.unwrap_or(DEFAULT_MAX_SAMPLES)
    }

    pub fn stop_mode(&self) -> StopMode {
        self.stop_mode.unwrap_or_default()
    }

    pub fn gen_concurrency(&self) -> usize {
        self.gen_concurrency.unwrap_or(DEFAULT_GEN_CONCURRENCY) as usize
    }

    pub fn sim_workers(&self) -> usize {
        self.sim_workers
            .map(|w| w as usize)
            .unwrap_or_else(default_sim_workers)
    }

    pub fn queue_capacity(&self) -> usize {
        self.queue_capacity.unwrap_or(DEFAULT_QUEUE_CAPACITY) as usize
    }

    /// Resolves the provider profile named in `params.provider_profile`.
    ///
    /// The mock provider falls back to a local default profile.
    pub fn provider_profile(&self) -> Result<ProviderProfile, ConfigError> {
        let name = &self.params.provider_profile;
        if let Some(p) = self.providers.get(name) {
            let mut p = p.clone();
            p.name = name.clone();
            return Ok(p);
        }
        if self.provider == "mock" {
            return Ok(ProviderProfile::local(name));
        }
        Err(ConfigError::UnknownProviderProfile(name.clone()))
    }

    /// Resolves `sim_profile`; `None` selects the built-in mock simulator.
    pub fn resolve_sim_profile(&self) -> Result<Option<SimProfile>, ConfigError> {
        if self.sim_profile == "mock" {
            return Ok(None);
        }
        let mut profile = match self.simulators.get(&self.sim_profile) {
            Some(p) => {
                let mut p = p.clone();
                p.name = self.sim_profile.clone();
                p
            }
            None if self.sim_profile == "icarus" => SimProfile::icarus(),
            None => return Err(ConfigError::UnknownSimProfile(self.sim_profile.clone())),
        };
        if let Some(t) = self.sim_timeout_s {
            profile.timeout_s = t;
        }
        Ok(Some(profile))
    }

    pub fn sim_timeout_s(&self) -> u64 {
        self.sim_timeout_s.unwrap_or(DEFAULT_SIM_TIMEOUT_S)
    }
}

fn default_sim_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub max_samples: Option<u32>,
    pub stop_mode: Option<StopMode>,
    pub temperature: Option<f64>,
    pub gen_concurrency: Option<u32>,
    pub sim_workers: Option<u32>,
    pub queue_capacity: Option<u32>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub suite_path: Option<PathBuf>,
    /// Route generation and simulation through the built-in mocks.
    pub mock: bool,
}

impl ConfigOverrides {
    pub fn apply(&self, config: &mut CampaignConfig) {
        if let Some(v) = self.max_samples {
            config.max_samples = Some(v);
        }
        if let Some(v) = self.stop_mode {
            config.stop_mode = Some(v);
        }
        if let Some(v) = self.temperature {
            config.params.temperature = v;
        }
        if let Some(v) = self.gen_concurrency {
            config.gen_concurrency = Some(v);
        }
        if let Some(v) = self.sim_workers {
            config.sim_workers = Some(v);
        }
        if let Some(v) = self.queue_capacity {
            config.queue_capacity = Some(v);
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.output_dir {
            config.output_dir = v.clone();
        }
        if let Some(v) = &self.suite_path {
            config.suite_path = v.clone();
        }
        if self.mock {
            config.provider = "mock".into();
            config.sim_profile = "mock".into();
        }
    }
}

/// Parses a TOML config file. Relative paths resolve against the file's directory.
pub fn load_config(path: &Path) -> Result<CampaignConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config: CampaignConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.suite_path = resolve(base, &config.suite_path);
    if config.output_dir.as_os_str().is_empty() {
        config.output_dir = PathBuf::from("out");
    }
    config.output_dir = resolve(base, &config.output_dir);
    Ok(config)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn positive<T: PartialOrd + Default + Copy + std::fmt::Display>(
    field: &'static str,
    v: Option<T>,
) -> Result<(), ConfigError> {
    match v {
        Some(v) if v <= T::default() => Err(ConfigError::InvalidValue {
            field,
            message: format!("must be positive, got {v}"),
        }),
        _ => Ok(()),
    }
}

/// Checks a config and fills defaults. Out-of-range values are errors, never clamped.
///
/// A non-empty pricing table that lacks the campaign's model is an error; with an
/// empty table cost reporting is disabled and the gap is only logged.
pub fn validate_config(
    config: &CampaignConfig,
    pricing: &PricingTable,
) -> Result<CampaignConfig, ConfigError> {
    let mut c = config.clone();

    positive("max_samples", c.max_samples)?;
    positive("gen_concurrency", c.gen_concurrency)?;
    positive("sim_workers", c.sim_workers)?;
    positive("queue_capacity", c.queue_capacity)?;
    positive("sim_timeout_s", c.sim_timeout_s)?;
    if c.params.max_output_tokens == 0 {
        return Err(ConfigError::InvalidValue {
            field: "params.max_output_tokens",
            message: "must be positive".into(),
        });
    }
    if c.params.model_id.trim().is_empty() {
        return Err(ConfigError::InvalidValue {
            field: "params.model_id",
            message: "must not be empty".into(),
        });
    }
    let top_p = c.params.top_p;
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(ConfigError::InvalidValue {
            field: "params.top_p",
            message: format!("must lie in (0, 1], got {top_p}"),
        });
    }

    let profile = c.provider_profile()?;
    let [lo, hi] = profile.temperature_range;
    let t = c.params.temperature;
    if !(t.is_finite() && t >= lo && t <= hi) {
        return Err(ConfigError::TemperatureOutOfRange {
            value: t,
            lo,
            hi,
            profile: profile.name,
        });
    }
    c.resolve_sim_profile()?;
    if crate::gateway::prompt::preamble(&c.prompt_version).is_none() {
        return Err(ConfigError::InvalidValue {
            field: "prompt_version",
            message: format!("unknown prompt version {:?}", c.prompt_version),
        });
    }

    if let Some(model) = pricing.invalid_entry() {
        return Err(ConfigError::InvalidPricing(model.to_string()));
    }
    if pricing.get(&c.params.model_id).is_none() {
        if pricing.is_empty() {
            log::warn!(
                "no pricing configured; cost reporting disabled for model `{}`",
                c.params.model_id
            );
        } else {
            return Err(ConfigError::UnknownModelForPricing(c.params.model_id.clone()));
        }
    }

    c.max_samples = Some(c.max_samples());
    c.stop_mode = Some(c.stop_mode());
    c.gen_concurrency = Some(c.gen_concurrency() as u32);
    c.sim_workers = Some(c.sim_workers() as u32);
    c.queue_capacity = Some(c.queue_capacity() as u32);
    c.sim_timeout_s = Some(c.sim_timeout_s());
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ModelPrice;

    fn base() -> CampaignConfig {
        CampaignConfig::mock("suite", "out")
    }

    #[test]
    fn fills_max_samples_default() {
        let c = validate_config(&base(), &PricingTable::default()).unwrap();
        assert_eq!(c.max_samples, Some(512));
        assert_eq!(c.stop_mode, Some(StopMode::EarlyStop));
    }

    #[test]
    fn temperature_above_default_range() {
        let mut c = base();
        c.params.temperature = 2.5;
        let err = validate_config(&c, &PricingTable::default()).unwrap_err();
        assert!(matches!(err, ConfigError::TemperatureOutOfRange { value, hi, .. } if value == 2.5 && hi == 2.0));
    }

    #[test]
    fn complete_config_unchanged() {
        let c = validate_config(&base(), &PricingTable::default()).unwrap();
        let again = validate_config(&c, &PricingTable::default()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn pricing_rules() {
        let mut pricing = PricingTable::default();
        pricing.insert(
            "other",
            ModelPrice {
                usd_per_1m_input: 1.0,
                usd_per_1m_output: 1.0,
            },
        );
        assert!(matches!(
            validate_config(&base(), &pricing),
            Err(ConfigError::UnknownModelForPricing(_))
        ));
        pricing.insert(
            "mock-model",
            ModelPrice {
                usd_per_1m_input: 1.0,
                usd_per_1m_output: 1.0,
            },
        );
        assert!(validate_config(&base(), &pricing).is_ok());
    }

    #[test]
    fn zero_values_are_errors() {
        let mut c = base();
        c.max_samples = Some(0);
        assert!(matches!(
            validate_config(&c, &PricingTable::default()),
            Err(ConfigError::InvalidValue { field: "max_samples", .. })
        ));
        let mut c = base();
        c.queue_capacity = Some(0);
        assert!(validate_config(&c, &PricingTable::default()).is_err());
        let mut c = base();
        c.params.top_p = 0.0;
        assert!(validate_config(&c, &PricingTable::default()).is_err());
    }

    #[test]
    fn unknown_profiles() {
        let mut c = base();
        c.provider = "chat-completions".into();
        assert!(matches!(
            validate_config(&c, &PricingTable::default()),
            Err(ConfigError::UnknownProviderProfile(_))
        ));
        let mut c = base();
        c.sim_profile = "vcs".into();
        assert!(matches!(
            validate_config(&c, &PricingTable::default()),
            Err(ConfigError::UnknownSimProfile(_))
        ));
    }

    #[test]
    fn toml_round_trip_and_relative_paths() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("camp.toml");
        std::fs::write(
            &path,
            r#"
suite_path = "suite"
output_dir = "runs/a"
provider = "chat-completions"
max_samples = 16
stop_mode = "fixed-n"
sim_profile = "icarus"

[params]
model_id = "gpt-4o-mini"
temperature = 0.7
provider_profile = "openai"

[providers.openai]
base_url = "https://api.openai.com/v1"
auth_env_var = "OPENAI_API_KEY"

[pricing."gpt-4o-mini"]
usd_per_1m_input = 0.15
usd_per_1m_output = 0.6
"#,
        )
        .unwrap();
        let c = load_config(&path).unwrap();
        assert_eq!(c.suite_path, tmp.path().join("suite"));
        assert_eq!(c.output_dir, tmp.path().join("runs/a"));
        assert_eq!(c.stop_mode, Some(StopMode::FixedN));
        assert_eq!(c.provider_profile().unwrap().temperature_range, [0.0, 2.0]);
        let v = validate_config(&c, &c.pricing).unwrap();
        assert_eq!(v.max_samples, Some(16));
        let s = toml::to_string(&v).unwrap();
        let back: CampaignConfig = toml::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn overrides_apply() {
        let mut c = base();
        c.provider = "chat-completions".into();
        ConfigOverrides {
            stop_mode: Some(StopMode::FixedN),
            max_samples: Some(16),
            mock: true,
            ..Default::default()
        }
        .apply(&mut c);
        assert_eq!(c.stop_mode, Some(StopMode::FixedN));
        assert_eq!(c.max_samples, Some(16));
        assert_eq!(c.provider, "mock");
        assert_eq!(c.sim_profile, "mock");
    }
}

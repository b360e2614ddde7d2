//! Domain records shared by every stage of the harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Schema version written into every persisted sample line.
pub const SAMPLE_SCHEMA_VERSION: u32 = 1;

/// One benchmark task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub spec_text: String,
    pub testbench_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_code: Option<String>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub suite: String,
    /// Per-problem override of the simulator profile's pass sentinel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_regex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_regex: Option<String>,
}

impl Problem {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_provider_profile")]
    pub provider_profile: String,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_top_p() -> f64 {
    1.0
}

fn default_max_output_tokens() -> u32 {
    4096
}

fn default_provider_profile() -> String {
    "default".to_string()
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_id: "mock-model".to_string(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_output_tokens: default_max_output_tokens(),
            provider_profile: default_provider_profile(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Pass,
    CompileError,
    SimFail,
    SimTimeout,
    ExtractError,
    ProviderError,
}

impl VerdictKind {
    pub const ALL: [VerdictKind; 6] = [
        VerdictKind::Pass,
        VerdictKind::CompileError,
        VerdictKind::SimFail,
        VerdictKind::SimTimeout,
        VerdictKind::ExtractError,
        VerdictKind::ProviderError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Pass => "Pass",
            VerdictKind::CompileError => "CompileError",
            VerdictKind::SimFail => "SimFail",
            VerdictKind::SimTimeout => "SimTimeout",
            VerdictKind::ExtractError => "ExtractError",
            VerdictKind::ProviderError => "ProviderError",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    #[serde(default)]
    pub detail: String,
}

impl Verdict {
    pub fn new(kind: VerdictKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn pass() -> Self {
        Self::new(VerdictKind::Pass, "")
    }

    pub fn is_pass(&self) -> bool {
        self.kind == VerdictKind::Pass
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl UsageRecord {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }
}

impl std::ops::Add for UsageRecord {
    type Output = UsageRecord;

    fn add(self, rhs: UsageRecord) -> UsageRecord {
        UsageRecord {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

/// One generation attempt together with its simulation verdict.
///
/// `index` is 0-based; the n-th attempt for a problem has `index == n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(default = "sample_schema_version")]
    pub schema_version: u32,
    pub problem_id: String,
    pub index: u32,
    pub raw_response: String,
    pub extracted_code: Option<String>,
    pub verdict: Verdict,
    pub usage: UsageRecord,
    pub latency_ms: u64,
    pub params: GenerationParams,
    pub created_at: DateTime<Utc>,
}

fn sample_schema_version() -> u32 {
    SAMPLE_SCHEMA_VERSION
}

impl Sample {
    pub fn is_pass(&self) -> bool {
        self.verdict.is_pass()
    }

    /// 1-based attempt number.
    pub fn attempt(&self) -> u32 {
        self.index + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StopMode {
    /// Stop sampling a problem at its first passing attempt.
    #[default]
    EarlyStop,
    /// Always draw exactly `max_samples` attempts.
    FixedN,
}

impl std::str::FromStr for StopMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "earlystop" => Ok(StopMode::EarlyStop),
            "fixedn" => Ok(StopMode::FixedN),
            other => Err(format!("unknown stop mode `{other}` (expected early-stop or fixed-n)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub usd_per_1m_input: f64,
    pub usd_per_1m_output: f64,
}

/// USD prices per million tokens, keyed by model id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PricingTable {
    pub models: BTreeMap<String, ModelPrice>,
}

impl PricingTable {
    pub fn get(&self, model_id: &str) -> Option<&ModelPrice> {
        self.models.get(model_id)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn insert(&mut self, model_id: impl Into<String>, price: ModelPrice) {
        self.models.insert(model_id.into(), price);
    }

    /// Returns the offending model id if any price is negative or non-finite.
    pub fn invalid_entry(&self) -> Option<&str> {
        self.models
            .iter()
            .find(|(_, p)| {
                !(p.usd_per_1m_input.is_finite()
                    && p.usd_per_1m_output.is_finite()
                    && p.usd_per_1m_input >= 0.0
                    && p.usd_per_1m_output >= 0.0)
            })
            .map(|(k, _)| k.as_str())
    }
}

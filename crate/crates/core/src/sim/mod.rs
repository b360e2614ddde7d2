//! Compile-and-simulate verification of candidate code.
//!
//! A [`Simulator`] turns `(code, problem)` into a [`Verdict`]. The command
//! simulator drives external EDA tools through argv templates; the mock
//! simulator is an in-process oracle for desk-scale runs. Implementations are
//! selected by name through a [`SimulatorRegistry`].

mod classify;
mod command;
pub mod mock;
mod pool;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify, StepOutcome};
pub use command::{CommandSimulator, OUTPUT_CAP_BYTES};
pub use mock::MockSimulator;
pub use pool::{run_pool, SimJob, SimResult};

use crate::config::CampaignConfig;
use crate::types::{Problem, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("simulator tool `{0}` not found on PATH")]
    ToolNotFound(String),
    #[error("invalid simulator profile `{profile}`: {message}")]
    InvalidProfile { profile: String, message: String },
    #[error("simulation io error: {0}")]
    Io(String),
    #[error("simulation skipped: pool aborted after an earlier failure")]
    Aborted,
}

fn default_timeout() -> u64 {
    60
}

/// Command templates and verdict rules for one simulator toolchain.
///
/// Placeholders: `{code}`, `{tb}` and `{out}` in `compile_cmd`; `{out}` in
/// `run_cmd`. Templates are argv arrays and never pass through a shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimProfile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub compile_cmd: Vec<String>,
    pub run_cmd: Vec<String>,
    pub default_pass_regex: String,
    pub default_fail_regex: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

impl SimProfile {
    /// Icarus Verilog: `iverilog -g2012` then `vvp`.
    pub fn icarus() -> Self {
        Self {
            name: "icarus".into(),
            compile_cmd: ["iverilog", "-g2012", "-o", "{out}", "{code}", "{tb}"]
                .map(String::from)
                .to_vec(),
            run_cmd: ["vvp", "{out}"].map(String::from).to_vec(),
            default_pass_regex: r"(?i)all\s+tests?\s+passed|Mismatches: 0".into(),
            // A bare `mismatch` would also match the passing "Mismatches: 0" summary.
            default_fail_regex: r"(?i)mismatches:\s*[1-9]|assertion failed|\berror\b".into(),
            timeout_s: default_timeout(),
        }
    }
}

/// Verifies one candidate against a problem's testbench.
#[async_trait]
pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;

    /// `retain`: when set and the verdict is not a pass, the scratch files are
    /// copied there for debugging.
    async fn simulate(
        &self,
        code: &str,
        problem: &Problem,
        retain: Option<&Path>,
    ) -> Result<Verdict, SimError>;
}

/// Runs one simulation with a command profile.
pub async fn run_simulation(code: &str, problem: &Problem, profile: &SimProfile) -> Result<Verdict, SimError> {
    CommandSimulator::new(profile.clone())?
        .simulate(code, problem, None)
        .await
}

pub type SimulatorFactory =
    Box<dyn Fn(&CampaignConfig) -> Result<Arc<dyn Simulator>, SimError> + Send + Sync>;

/// Named simulator factories. Names not registered here resolve to command
/// profiles from the config (`[simulators.<name>]` or the built-in `icarus`).
pub struct SimulatorRegistry {
    factories: BTreeMap<String, SimulatorFactory>,
}

impl Default for SimulatorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SimulatorRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(
            "mock",
            Box::new(|config| {
                Ok(Arc::new(MockSimulator::new(std::time::Duration::from_millis(
                    config.mock.sim_delay_ms,
                ))) as Arc<dyn Simulator>)
            }),
        );
        r
    }

    pub fn register(&mut self, name: impl Into<String>, factory: SimulatorFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn create(&self, config: &CampaignConfig) -> Result<Arc<dyn Simulator>, SimError> {
        if let Some(f) = self.factories.get(&config.sim_profile) {
            return f(config);
        }
        let profile = config
            .resolve_sim_profile()
            .map_err(|e| SimError::InvalidProfile {
                profile: config.sim_profile.clone(),
                message: e.to_string(),
            })?
            .ok_or_else(|| SimError::InvalidProfile {
                profile: config.sim_profile.clone(),
                message: "no simulator registered under this name".into(),
            })?;
        Ok(Arc::new(CommandSimulator::new(profile)?))
    }
}

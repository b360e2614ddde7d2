//! Temperature sweeps: one campaign per temperature over a shared suite,
//! combined into hit-rate and dispersion summaries.
//!
//! Each temperature runs in `<out>/temp_<T>/`; a directory that already
//! holds a matching campaign is continued, so an interrupted sweep resumes
//! where it stopped.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::config::{load_config, validate_config, CampaignConfig, ConfigError, ConfigOverrides};
use crate::dispersion::analysis::{extracted_codes, SampleFilter};
use crate::dispersion::{mcd, vectorize, DEFAULT_NGRAM};
use crate::fmt::sig6;
use crate::metrics::{hit_at_k, write_report, MetricsError, ReportOptions, Tallies, DEFAULT_CHECKPOINTS};
use crate::orchestrator::{Campaign, CampaignStore, Engines, OrchestratorError};
use crate::suite::{load_suite, SuiteError};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Campaign config every temperature starts from.
    pub base_config: PathBuf,
    pub temperatures: Vec<f64>,
    /// Campaigns allowed to run at once.
    #[serde(default = "one")]
    pub parallel: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<u32>,
    #[serde(default = "default_ngram")]
    pub ngram: usize,
    /// Defaults to the base config's output directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_checkpoints() -> Vec<u32> {
    DEFAULT_CHECKPOINTS.to_vec()
}

fn default_ngram() -> usize {
    DEFAULT_NGRAM
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("reading sweep plan {path}: {message}")]
    Plan { path: PathBuf, message: String },
    #[error("invalid sweep plan: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("temperature {temperature}: {source}")]
    Campaign {
        temperature: f64,
        #[source]
        source: OrchestratorError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a plan; relative paths resolve against the plan file's directory.
pub fn load_plan(path: &Path) -> Result<SweepPlan, SweepError> {
    let err = |message: String| SweepError::Plan { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut plan: SweepPlan = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if plan.base_config.is_relative() {
        plan.base_config = base.join(&plan.base_config);
    }
    if let Some(o) = &plan.output_dir {
        if o.is_relative() {
            plan.output_dir = Some(base.join(o));
        }
    }
    Ok(plan)
}

/// Distribution summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Quartiles {
            count: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureResult {
    pub temperature: f64,
    pub dir: PathBuf,
    /// `hit_rate` at k = 1..=max_samples.
    pub hit_curve: Vec<f64>,
    /// Per-problem MCD over every extracted sample.
    pub mcd: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub results: Vec<TemperatureResult>,
}

pub fn temperature_dir(root: &Path, t: f64) -> PathBuf {
    root.join(format!("temp_{}", sig6(t)))
}

fn check_plan(plan: &SweepPlan, base: &CampaignConfig) -> Result<(), SweepError> {
    if plan.temperatures.is_empty() {
        return Err(SweepError::Invalid("no temperatures".into()));
    }
    if plan.parallel == 0 {
        return Err(SweepError::Invalid("parallel must be at least 1".into()));
    }
    if !(1..=4).contains(&plan.ngram) {
        return Err(SweepError::Invalid(format!("ngram must be 1..=4, got {}", plan.ngram)));
    }
    let mut seen = BTreeSet::new();
    for &t in &plan.temperatures {
        if !seen.insert(sig6(t)) {
            return Err(SweepError::Invalid(format!("temperature {t} listed twice")));
        }
        let mut c = base.clone();
        c.params.temperature = t;
        validate_config(&c, &c.pricing)?;
    }
    Ok(())
}

fn summarize(store: &CampaignStore, t: f64, ngram: usize) -> Result<TemperatureResult, SweepError> {
    let tallies = Tallies::from_store(store);
    let hit_curve = (1..=tallies.max_samples)
        .map(|k| hit_at_k(&tallies, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mcds: Vec<f64> = store
        .problems()
        .iter()
        .filter_map(|p| {
            let codes = extracted_codes(store.samples(&p.id), SampleFilter::All);
            let texts: Vec<&str> = codes.iter().map(|c| c.1).collect();
            mcd(&vectorize(&texts, ngram)).ok()
        })
        .collect();
    Ok(TemperatureResult { temperature: t, dir: store.root().to_path_buf(), hit_curve, mcd: Quartiles::of(&mcds) })
}

/// Runs a sweep with the built-in provider and simulator registries.
pub async fn run_sweep(plan: &SweepPlan, overrides: &ConfigOverrides) -> Result<SweepOutcome, SweepError> {
    run_sweep_with(plan, overrides, Engines::builtin).await
}

pub async fn run_sweep_with<F>(plan: &SweepPlan, overrides: &ConfigOverrides, engines: F) -> Result<SweepOutcome, SweepError>
where
    F: Fn(&CampaignConfig) -> Result<Engines, OrchestratorError>,
{
    let mut base = load_config(&plan.base_config)?;
    overrides.apply(&mut base);
    let root = plan.output_dir.clone().unwrap_or_else(|| base.output_dir.clone());
    check_plan(plan, &base)?;
    let suite = load_suite(&base.suite_path)?;

    let gate = Arc::new(Semaphore::new(plan.parallel));
    let mut handles = Vec::new();
    for &t in &plan.temperatures {
        let mut config = base.clone();
        config.params.temperature = t;
        config.output_dir = temperature_dir(&root, t);
        let engines = engines(&config).map_err(|source| SweepError::Campaign { temperature: t, source })?;
        let campaign = Campaign::new(suite.clone(), config, engines);
        let gate = Arc::clone(&gate);
        handles.push((
            t,
            tokio::spawn(async move {
                let _permit = gate.acquire_owned().await.expect("sweep gate closed");
                log::info!("sweep: temperature {t} in {}", campaign.root().display());
                campaign.run().await
            }),
        ));
    }

    let mut results = Vec::new();
    let mut first_err = None;
    for (t, h) in handles {
        match h.await.expect("sweep campaign task panicked") {
            Ok(outcome) => {
                let opts = ReportOptions { checkpoints: plan.checkpoints.clone(), ..Default::default() };
                write_report(&outcome.store, &opts)?;
                results.push(summarize(&outcome.store, t, plan.ngram)?);
            }
            Err(source) => {
                first_err.get_or_insert(SweepError::Campaign { temperature: t, source });
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    results.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    write_combined(&root, &results)?;
    Ok(SweepOutcome { dir: root, results })
}

fn write_combined(root: &Path, results: &[TemperatureResult]) -> Result<(), SweepError> {
    let mut hit = String::from("schema_version,temperature,k,hit_rate\n");
    let mut disp = String::from("schema_version,temperature,count,min,q1,median,q3,max,mean\n");
    for r in results {
        let t = sig6(r.temperature);
        for (i, h) in r.hit_curve.iter().enumerate() {
            let _ = writeln!(hit, "{SWEEP_SCHEMA_VERSION},{t},{},{}", i + 1, sig6(*h));
        }
        match &r.mcd {
            Some(q) => {
                let _ = writeln!(
                    disp,
                    "{SWEEP_SCHEMA_VERSION},{t},{},{},{},{},{},{},{}",
                    q.count,
                    sig6(q.min),
                    sig6(q.q1),
                    sig6(q.median),
                    sig6(q.q3),
                    sig6(q.max),
                    sig6(q.mean)
                );
            }
            None => {
                let _ = writeln!(disp, "{SWEEP_SCHEMA_VERSION},{t},0,,,,,,");
            }
        }
    }
    for (name, body) in [("sweep_hit.csv", hit), ("sweep_mcd.csv", disp)] {
        let path = root.join(name);
        std::fs::write(&path, body).map_err(|source| SweepError::Io { path, source })?;
    }
    Ok(())
}

//! Report files written under `<store>/report/`.
//!
//! | file | columns / fields |
//! |------|------------------|
//! | `hit_curve.csv` | `schema_version,k,hit_rate` for every k up to max_samples |
//! | `first_pass.csv` | `schema_version,k,success_rate`, one row per distinct first-pass attempt |
//! | `checkpoints.csv` | `schema_version,k,hit_rate,pass_at_k` (pass@k blank unless fixed-n) |
//! | `tags.csv` | `schema_version,tag,subset,problems,k,hit_rate` |
//! | `fit.json` | `a`, `b`, `rmse`, `points`, or `error` |
//! | `cost.csv` | `schema_version,problem_id,samples,usd[,usd_at_<n>]`, only with pricing |
//! | `summary.json` | everything above in aggregate |
//!
//! Rates use 6 significant digits, USD 6 decimals. No timestamps, so two
//! reports of one store are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{
    cost_report, first_pass_curve, fit_loglog, hit_at_k, pass_at_k_suite, success_by_tag, CostReport, CurvePoint,
    LogLogFit, MetricsError, Tallies, TagSplit,
};
use crate::dispersion::analysis::DEFAULT_TAG;
use crate::fmt::{round6, sig6};
use crate::orchestrator::CampaignStore;
use crate::types::StopMode;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CHECKPOINTS: [u32; 3] = [1, 10, 512];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub checkpoints: Vec<u32>,
    pub tag: String,
    pub discount_factor: f64,
    /// Also project costs to this many requests per problem.
    pub cost_samples: Option<u64>,
    /// Defaults to `<store>/report`.
    pub out_dir: Option<PathBuf>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            tag: DEFAULT_TAG.to_string(),
            discount_factor: 1.0,
            cost_samples: None,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub k: u32,
    pub hit_rate: f64,
    pub pass_at_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub dir: PathBuf,
    pub problems: usize,
    pub stop_mode: StopMode,
    pub max_samples: u32,
    pub samples_committed: usize,
    pub overshoot_samples: usize,
    pub checkpoints: Vec<CheckpointRow>,
    pub curve: Vec<CurvePoint>,
    pub fit: Result<LogLogFit, String>,
    pub tags: TagSplit,
    pub cost: Option<CostReport>,
    pub cost_scaled: Option<CostReport>,
    pub notices: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

impl ReportSummary {
    /// Human-readable summary for terminals.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "problems {}  mode {}  max_samples {}  samples {}  speculative {}",
            self.problems,
            match self.stop_mode {
                StopMode::EarlyStop => "early-stop",
                StopMode::FixedN => "fixed-n",
            },
            self.max_samples,
            self.samples_committed,
            self.overshoot_samples
        );
        let _ = writeln!(s, "{:>6}  {:>10}  {:>10}", "k", "hit@k", "pass@k");
        for c in &self.checkpoints {
            let pass = c.pass_at_k.map(sig6).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{:>6}  {:>10}  {:>10}", c.k, sig6(c.hit_rate), pass);
        }
        match &self.fit {
            Ok(f) => {
                let _ = writeln!(s, "fit: rate = {} + {} * ln(ln k)  rmse {}", sig6(f.a), sig6(f.b), sig6(f.rmse));
            }
            Err(e) => {
                let _ = writeln!(s, "fit: {e}");
            }
        }
        let _ = writeln!(
            s,
            "tag {:?}: {} tagged, {} untagged problems",
            self.tags.tag, self.tags.tagged_problems, self.tags.untagged_problems
        );
        if let Some(c) = &self.cost {
            let _ = writeln!(s, "cost: mean {:.6} USD per problem ({}, discount {})", c.mean_usd, c.model_id, c.discount_factor);
        }
        if let Some(c) = &self.cost_scaled {
            let n = c.per_problem_samples.values().next().copied().unwrap_or(0);
            let _ = writeln!(s, "cost projected to {n} requests: mean {:.6} USD per problem", c.mean_usd);
        }
        for n in &self.notices {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), MetricsError> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
}

fn curve_json(c: &[CurvePoint]) -> Value {
    Value::Array(c.iter().map(|p| json!({"k": p.k, "success_rate": round6(p.success_rate)})).collect())
}

/// Computes every metric for `store` and writes the report files.
pub fn write_report(store: &CampaignStore, options: &ReportOptions) -> Result<ReportSummary, MetricsError> {
    let t = Tallies::from_store(store);
    if t.problems.is_empty() {
        return Err(MetricsError::EmptyStore);
    }
    let dir = options.out_dir.clone().unwrap_or_else(|| store.root().join("report"));
    std::fs::create_dir_all(&dir).map_err(|source| MetricsError::Io { path: dir.display().to_string(), source })?;
    let mut notices = Vec::new();
    let mut checkpoints = options.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let mut csv = String::from("schema_version,k,hit_rate\n");
    for k in 1..=t.max_samples {
        let _ = writeln!(csv, "{REPORT_SCHEMA_VERSION},{k},{}", sig6(hit_at_k(&t, k)?));
    }
    write(&dir, "hit_curve.csv", &csv)?;

    let curve = first_pass_curve(&t)?;
    let mut csv = String::from("schema_version,k,success_rate\n");
    for p in &curve {
        let _ = writeln!(csv, "{REPORT_SCHEMA_VERSION},{},{}", p.k, sig6(p.success_rate));
    }
    write(&dir, "first_pass.csv", &csv)?;

    if t.stop_mode == StopMode::EarlyStop {
        notices.push("pass@k omitted: early-stop campaigns only support hit@k".into());
    }
    let rows: Vec<CheckpointRow> = checkpoints
        .iter()
        .map(|&k| {
            Ok(CheckpointRow {
                k,
                hit_rate: hit_at_k(&t, k)?,
                pass_at_k: match t.stop_mode {
                    StopMode::FixedN => pass_at_k_suite(&t, k).ok(),
                    StopMode::EarlyStop => None,
                },
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    let mut csv = String::from("schema_version,k,hit_rate,pass_at_k\n");
    for r in &rows {
        let _ = writeln!(csv, "{REPORT_SCHEMA_VERSION},{},{},{}", r.k, sig6(r.hit_rate), opt(r.pass_at_k));
    }
    write(&dir, "checkpoints.csv", &csv)?;

    let tags = success_by_tag(&t, &options.tag, &checkpoints)?;
    let mut csv = String::from("schema_version,tag,subset,problems,k,hit_rate\n");
    for (subset, n, curve) in [
        ("tagged", tags.tagged_problems, &tags.tagged),
        ("untagged", tags.untagged_problems, &tags.untagged),
    ] {
        for (k, rate) in curve {
            let _ = writeln!(csv, "{REPORT_SCHEMA_VERSION},{},{subset},{n},{k},{}", tags.tag, opt(*rate));
        }
    }
    write(&dir, "tags.csv", &csv)?;

    let fit = fit_loglog(&curve).map_err(|e| e.to_string());
    let fit_json = match &fit {
        Ok(f) => json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "model": "success_rate = a + b * ln(ln k), k >= 3",
            "a": round6(f.a), "b": round6(f.b), "rmse": round6(f.rmse), "points": f.points,
        }),
        Err(e) => json!({"schema_version": REPORT_SCHEMA_VERSION, "error": e}),
    };
    write(&dir, "fit.json", &(serde_json::to_string_pretty(&fit_json).expect("json") + "\n"))?;

    let pricing = &store.config().pricing;
    let (cost, cost_scaled) = if pricing.is_empty() {
        notices.push("cost omitted: no pricing configured".into());
        (None, None)
    } else {
        match cost_report(store, pricing, options.discount_factor) {
            Ok(c) => {
                let scaled = options.cost_samples.map(|n| c.scaled_to(n));
                let mut csv = String::from("schema_version,problem_id,samples,usd");
                if let Some(n) = options.cost_samples {
                    let _ = write!(csv, ",usd_at_{n}");
                }
                csv.push('\n');
                for (id, usd) in &c.per_problem_usd {
                    let _ = write!(csv, "{REPORT_SCHEMA_VERSION},{id},{},{usd:.6}", c.per_problem_samples[id]);
                    if let Some(s) = &scaled {
                        let _ = write!(csv, ",{:.6}", s.per_problem_usd[id]);
                    }
                    csv.push('\n');
                }
                write(&dir, "cost.csv", &csv)?;
                (Some(c), scaled)
            }
            Err(MetricsError::UnknownModelForPricing(m)) => {
                notices.push(format!("cost omitted: no price for model {m}"));
                (None, None)
            }
            Err(e) => return Err(e),
        }
    };

    let summary = ReportSummary {
        dir: dir.clone(),
        problems: t.problems.len(),
        stop_mode: t.stop_mode,
        max_samples: t.max_samples,
        samples_committed: store.total_samples(),
        overshoot_samples: store.problems().iter().map(|p| store.overshoot(&p.id).len()).sum(),
        checkpoints: rows,
        curve,
        fit,
        tags,
        cost,
        cost_scaled,
        notices,
    };
    let doc = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "problems": summary.problems,
        "stop_mode": summary.stop_mode,
        "max_samples": summary.max_samples,
        "samples_committed": summary.samples_committed,
        "speculative_samples": summary.overshoot_samples,
        "checkpoints": summary.checkpoints.iter().map(|r| json!({
            "k": r.k, "hit_rate": round6(r.hit_rate), "pass_at_k": r.pass_at_k.map(round6),
        })).collect::<Vec<_>>(),
        "first_pass_curve": curve_json(&summary.curve),
        "fit": fit_json,
        "tag": {
            "name": summary.tags.tag,
            "tagged_problems": summary.tags.tagged_problems,
            "untagged_problems": summary.tags.untagged_problems,
        },
        "cost": summary.cost.as_ref().map(|c| json!({
            "model_id": c.model_id,
            "discount_factor": c.discount_factor,
            "mean_usd": format!("{:.6}", c.mean_usd),
            "projected_samples": options.cost_samples,
            "projected_mean_usd": summary.cost_scaled.as_ref().map(|s| format!("{:.6}", s.mean_usd)),
        })),
        "notices": summary.notices,
    });
    write(&dir, "summary.json", &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    Ok(summary)
}

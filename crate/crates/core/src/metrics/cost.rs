//! API cost accounting and the model × suite cost table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::orchestrator::CampaignStore;
use crate::types::{PricingTable, UsageRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model_id: String,
    pub discount_factor: f64,
    pub per_problem_usd: BTreeMap<String, f64>,
    /// Requests behind each per-problem figure.
    pub per_problem_samples: BTreeMap<String, u64>,
    pub mean_usd: f64,
}

impl CostReport {
    /// Projects every problem to `n` requests at its observed mean cost per
    /// request. Problems without requests stay at zero.
    pub fn scaled_to(&self, n: u64) -> CostReport {
        let per_problem_usd: BTreeMap<String, f64> = self
            .per_problem_usd
            .iter()
            .map(|(id, usd)| {
                let count = self.per_problem_samples.get(id).copied().unwrap_or(0);
                let v = if count == 0 { 0.0 } else { usd / count as f64 * n as f64 };
                (id.clone(), v)
            })
            .collect();
        CostReport {
            model_id: self.model_id.clone(),
            discount_factor: self.discount_factor,
            mean_usd: mean(per_problem_usd.values()),
            per_problem_samples: self.per_problem_usd.keys().map(|id| (id.clone(), n)).collect(),
            per_problem_usd,
        }
    }
}

fn mean<'a>(values: impl ExactSizeIterator<Item = &'a f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// `discount × Σ (in·p_in + out·p_out) / 1e6` per problem.
pub fn cost_report_from_usage(
    model_id: &str,
    usage: &BTreeMap<String, Vec<UsageRecord>>,
    pricing: &PricingTable,
    discount_factor: f64,
) -> Result<CostReport, MetricsError> {
    if !(discount_factor > 0.0 && discount_factor <= 1.0) {
        return Err(MetricsError::InvalidDiscount(discount_factor));
    }
    let price = pricing
        .get(model_id)
        .ok_or_else(|| MetricsError::UnknownModelForPricing(model_id.to_string()))?;
    let mut per_problem_usd = BTreeMap::new();
    let mut per_problem_samples = BTreeMap::new();
    for (id, records) in usage {
        let tin: u128 = records.iter().map(|u| u.input_tokens as u128).sum();
        let tout: u128 = records.iter().map(|u| u.output_tokens as u128).sum();
        let usd = discount_factor
            * (tin as f64 * price.usd_per_1m_input + tout as f64 * price.usd_per_1m_output)
            / 1e6;
        per_problem_usd.insert(id.clone(), usd);
        per_problem_samples.insert(id.clone(), records.len() as u64);
    }
    Ok(CostReport {
        model_id: model_id.to_string(),
        discount_factor,
        mean_usd: mean(per_problem_usd.values()),
        per_problem_usd,
        per_problem_samples,
    })
}

/// Cost of every request a campaign made, committed and speculative alike,
/// priced from the campaign's own pricing table.
pub fn cost_report(store: &CampaignStore, pricing: &PricingTable, discount_factor: f64) -> Result<CostReport, MetricsError> {
    let usage: BTreeMap<String, Vec<UsageRecord>> = store
        .problems()
        .iter()
        .map(|p| {
            let u = store
                .samples(&p.id)
                .iter()
                .chain(store.overshoot(&p.id))
                .map(|s| s.usage)
                .collect();
            (p.id.clone(), u)
        })
        .collect();
    cost_report_from_usage(&store.config().params.model_id, &usage, pricing, discount_factor)
}

/// Mean per-problem cost laid out with one row per model and one column per
/// suite, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostTable {
    suites: Vec<String>,
    rows: Vec<(String, BTreeMap<String, f64>)>,
}

impl CostTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: &str, suite: &str, usd: f64) {
        if !self.suites.iter().any(|s| s == suite) {
            self.suites.push(suite.to_string());
        }
        match self.rows.iter_mut().find(|r| r.0 == model) {
            Some(row) => {
                row.1.insert(suite.to_string(), usd);
            }
            None => self.rows.push((model.to_string(), BTreeMap::from([(suite.to_string(), usd)]))),
        }
    }

    pub fn suites(&self) -> &[String] {
        &self.suites
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.0.as_str())
    }

    pub fn get(&self, model: &str, suite: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == model).and_then(|r| r.1.get(suite).copied())
    }

    fn cell(&self, row: &BTreeMap<String, f64>, suite: &str) -> String {
        row.get(suite).map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
    }

    /// Aligned plain-text table, cells in USD with two decimals.
    pub fn render_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once(String::new()).chain(self.suites.iter().cloned()).collect()];
        for (model, row) in &self.rows {
            grid.push(
                std::iter::once(model.clone())
                    .chain(self.suites.iter().map(|s| self.cell(row, s)))
                    .collect(),
            );
        }
        let cols = self.suites.len() + 1;
        let widths: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in grid.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
                out.push('\n');
            }
        }
        out
    }

    /// `schema_version,model,<suite...>` with two-decimal cells.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("schema_version,model");
        for s in &self.suites {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for (model, row) in &self.rows {
            let _ = write!(out, "{},{model}", super::report::REPORT_SCHEMA_VERSION);
            for s in &self.suites {
                let _ = write!(out, ",{}", row.get(s).map(|v| format!("{v:.2}")).unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }
}

//! Success-rate, scaling-trend and cost statistics over a campaign store.

pub mod cost;
pub mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use cost::{cost_report, cost_report_from_usage, CostReport, CostTable};
pub use report::{write_report, ReportOptions, ReportSummary, DEFAULT_CHECKPOINTS};

use crate::orchestrator::CampaignStore;
use crate::types::StopMode;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("store has no problems")]
    EmptyStore,
    #[error("invalid counts: N={n}, c={c}, k={k}")]
    InvalidCounts { n: u64, c: u64, k: u64 },
    #[error("pass@k needs a fixed-n campaign; this store stops early")]
    EarlyStopStore,
    #[error("need at least 3 points with k >= 3, found {found}")]
    InsufficientPoints { found: usize },
    #[error("no price for model {0}")]
    UnknownModelForPricing(String),
    #[error("discount factor must lie in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: u32,
    pub success_rate: f64,
}

/// Per-problem outcome counts, the only input the success metrics need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub problem_id: String,
    pub samples_done: u32,
    /// 1-based attempt of the first pass.
    pub first_pass_index: Option<u32>,
    /// Passing samples among the committed ones.
    pub passes: u32,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tallies {
    pub stop_mode: StopMode,
    pub max_samples: u32,
    pub problems: Vec<Tally>,
}

impl Tallies {
    pub fn from_store(store: &CampaignStore) -> Self {
        let config = store.config();
        let problems = store
            .problems()
            .iter()
            .map(|p| {
                let samples = store.samples(&p.id);
                Tally {
                    problem_id: p.id.clone(),
                    samples_done: samples.len() as u32,
                    first_pass_index: samples.iter().position(|s| s.is_pass()).map(|i| i as u32 + 1),
                    passes: samples.iter().filter(|s| s.is_pass()).count() as u32,
                    tags: p.tags.clone(),
                }
            })
            .collect();
        Self { stop_mode: config.stop_mode(), max_samples: config.max_samples(), problems }
    }

    fn subset(&self, keep: impl Fn(&Tally) -> bool) -> Tallies {
        Tallies {
            stop_mode: self.stop_mode,
            max_samples: self.max_samples,
            problems: self.problems.iter().filter(|t| keep(t)).cloned().collect(),
        }
    }
}

/// Fraction of problems with a pass within their first `k` attempts.
/// Problems without samples count as misses.
pub fn hit_at_k(t: &Tallies, k: u32) -> Result<f64, MetricsError> {
    if t.problems.is_empty() {
        return Err(MetricsError::EmptyStore);
    }
    let hits = t.problems.iter().filter(|p| p.first_pass_index.is_some_and(|f| f <= k)).count();
    Ok(hits as f64 / t.problems.len() as f64)
}

/// Unbiased estimate of solving within `k` draws from `n` samples of which
/// `c` pass: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if n == 0 || k == 0 || c > n || k > n {
        return Err(MetricsError::InvalidCounts { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    if c == 0 {
        return Ok(0.0);
    }
    // Exact rational path: num/den = prod (n-c-i)/(n-i).
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    let mut exact = true;
    for i in 0..k {
        match (num.checked_mul((n - c - i) as u128), den.checked_mul((n - i) as u128)) {
            (Some(a), Some(b)) if b < (1u128 << 53) => {
                num = a;
                den = b;
            }
            _ => {
                exact = false;
                break;
            }
        }
    }
    if exact {
        return Ok((den - num) as f64 / den as f64);
    }
    // log(prod) = sum ln(1 - c/(n-i)), Neumaier-compensated.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for i in 0..k {
        let term = (-(c as f64) / (n - i) as f64).ln_1p();
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    Ok(-(sum + comp).exp_m1())
}

/// Mean per-problem [`pass_at_k`] with `N` = samples committed and `c` =
/// passes among them.
pub fn pass_at_k_suite(t: &Tallies, k: u32) -> Result<f64, MetricsError> {
    if t.stop_mode == StopMode::EarlyStop {
        return Err(MetricsError::EarlyStopStore);
    }
    if t.problems.is_empty() {
        return Err(MetricsError::EmptyStore);
    }
    let mut sum = 0.0;
    for p in &t.problems {
        sum += pass_at_k(p.samples_done as u64, p.passes as u64, k as u64)?;
    }
    Ok(sum / t.problems.len() as f64)
}

/// One point per distinct first-pass attempt, sorted by `k`.
pub fn first_pass_curve(t: &Tallies) -> Result<Vec<CurvePoint>, MetricsError> {
    if t.problems.is_empty() {
        return Err(MetricsError::EmptyStore);
    }
    let ks: BTreeSet<u32> = t.problems.iter().filter_map(|p| p.first_pass_index).collect();
    ks.into_iter()
        .map(|k| Ok(CurvePoint { k, success_rate: hit_at_k(t, k)? }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub a: f64,
    pub b: f64,
    pub rmse: f64,
    pub points: usize,
}

/// Least-squares fit of `success_rate = a + b * ln(ln k)` over points with `k >= 3`.
pub fn fit_loglog(curve: &[CurvePoint]) -> Result<LogLogFit, MetricsError> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|p| p.k >= 3)
        .map(|p| ((p.k as f64).ln().ln(), p.success_rate))
        .collect();
    let m = pts.len();
    if m < 3 {
        return Err(MetricsError::InsufficientPoints { found: m });
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(MetricsError::InsufficientPoints { found: 1 });
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    Ok(LogLogFit { a, b, rmse: (sse / m as f64).sqrt(), points: m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSplit {
    pub tag: String,
    pub tagged_problems: usize,
    pub untagged_problems: usize,
    /// `(k, rate)`; `None` when the subset is empty.
    pub tagged: Vec<(u32, Option<f64>)>,
    pub untagged: Vec<(u32, Option<f64>)>,
}

/// Hit rates at each checkpoint, separately for problems with and without `tag`.
pub fn success_by_tag(t: &Tallies, tag: &str, checkpoints: &[u32]) -> Result<TagSplit, MetricsError> {
    if t.problems.is_empty() {
        return Err(MetricsError::EmptyStore);
    }
    let with = t.subset(|p| p.tags.contains(tag));
    let without = t.subset(|p| !p.tags.contains(tag));
    let curve = |s: &Tallies| -> Vec<(u32, Option<f64>)> {
        checkpoints.iter().map(|&k| (k, hit_at_k(s, k).ok())).collect()
    };
    Ok(TagSplit {
        tag: tag.to_string(),
        tagged_problems: with.problems.len(),
        untagged_problems: without.problems.len(),
        tagged: curve(&with),
        untagged: curve(&without),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn tallies(mode: StopMode, fps: &[Option<u32>], max: u32) -> Tallies {
        Tallies {
            stop_mode: mode,
            max_samples: max,
            problems: fps
                .iter()
                .enumerate()
                .map(|(i, fp)| Tally {
                    problem_id: format!("p{i}"),
                    samples_done: fp.unwrap_or(max),
                    first_pass_index: *fp,
                    passes: fp.is_some() as u32,
                    tags: BTreeSet::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn hit_examples() {
        let t = tallies(StopMode::EarlyStop, &[Some(1), Some(3), None], 5);
        assert_eq!(hit_at_k(&t, 2).unwrap(), 1.0 / 3.0);
        assert_eq!(hit_at_k(&t, 3).unwrap(), 2.0 / 3.0);
        let empty = tallies(StopMode::EarlyStop, &[], 5);
        assert!(matches!(hit_at_k(&empty, 1), Err(MetricsError::EmptyStore)));
    }

    #[test]
    fn pass_examples() {
        assert_eq!(pass_at_k(1, 1, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(2, 1, 1).unwrap(), 0.5);
        assert_eq!(pass_at_k(5, 2, 3).unwrap(), 0.9);
        assert!(matches!(pass_at_k(3, 4, 1), Err(MetricsError::InvalidCounts { .. })));
        assert!(matches!(pass_at_k(3, 1, 4), Err(MetricsError::InvalidCounts { .. })));
        assert_eq!(pass_at_k(10, 0, 4).unwrap(), 0.0);
    }

    #[test]
    fn suite_gating() {
        let t = tallies(StopMode::EarlyStop, &[Some(1)], 2);
        assert!(matches!(pass_at_k_suite(&t, 1), Err(MetricsError::EarlyStopStore)));
        let mut t = tallies(StopMode::FixedN, &[Some(1), None], 2);
        t.problems[0].samples_done = 2;
        t.problems[0].passes = 2;
        assert_eq!(pass_at_k_suite(&t, 1).unwrap(), 0.5);
    }

    #[test]
    fn curve_examples() {
        let t = tallies(StopMode::EarlyStop, &[Some(1), Some(1), Some(3)], 5);
        let c = first_pass_curve(&t).unwrap();
        assert_eq!(c, vec![CurvePoint { k: 1, success_rate: 2.0 / 3.0 }, CurvePoint { k: 3, success_rate: 1.0 }]);
        assert!(first_pass_curve(&tallies(StopMode::EarlyStop, &[None], 5)).unwrap().is_empty());
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<CurvePoint> =
            [3u32, 8, 64].iter().map(|&k| CurvePoint { k, success_rate: 0.4 }).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!(f.b.abs() < 1e-12 && (f.a - 0.4).abs() < 1e-12);
        let two = [CurvePoint { k: 1, success_rate: 0.1 }, CurvePoint { k: 3, success_rate: 0.2 }, CurvePoint { k: 4, success_rate: 0.3 }];
        assert!(matches!(fit_loglog(&two), Err(MetricsError::InsufficientPoints { found: 2 })));
    }

    #[test]
    fn tag_split() {
        let mut t = tallies(StopMode::EarlyStop, &[Some(1), Some(1), None, None], 4);
        t.problems[0].tags.insert("math-related".into());
        t.problems[1].tags.insert("math-related".into());
        let s = success_by_tag(&t, "math-related", &[1]).unwrap();
        assert_eq!(s.tagged, vec![(1, Some(1.0))]);
        assert_eq!(s.untagged, vec![(1, Some(0.0))]);
        let none = success_by_tag(&t, "absent", &[1]).unwrap();
        assert_eq!(none.tagged, vec![(1, None)]);
        assert_eq!(none.untagged[0].1, hit_at_k(&t, 1).ok());
    }

    proptest! {
        #[test]
        fn hit_monotone(fps in proptest::collection::vec(proptest::option::of(1u32..20), 1..12), k1 in 1u32..25, k2 in 1u32..25) {
            let t = tallies(StopMode::EarlyStop, &fps, 20);
            let (lo, hi) = (k1.min(k2), k1.max(k2));
            prop_assert!(hit_at_k(&t, lo).unwrap() <= hit_at_k(&t, hi).unwrap());
        }

        #[test]
        fn estimator_consistency(n in 1u64..200, c in 0u64..200, k in 1u64..200) {
            prop_assume!(c <= n && k <= n);
            let full = pass_at_k(n, c, n).unwrap();
            prop_assert_eq!(full == 1.0, c >= 1);
            prop_assert_eq!(pass_at_k(n, 0, k).unwrap(), 0.0);
            let v = pass_at_k(n, c, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

//! Per-problem and suite-level dispersion analyses built on the pure math.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kmeans::{cluster_order, default_k, ClusterOrder};
use super::lexer::lex;
use super::tfidf::{mcd, similarity_matrix, vectorize, SimilarityMatrix};
use super::DispersionError;
use crate::fmt::{round6, sig6};
use crate::types::{Problem, Sample, VerdictKind};

pub const ANALYSIS_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BIN_SIZE: usize = 15;
pub const DEFAULT_TAG: &str = "math-related";

/// Which samples feed a dispersion computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFilter {
    #[default]
    All,
    FailedOnly,
}

impl SampleFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleFilter::All => "all",
            SampleFilter::FailedOnly => "failed-only",
        }
    }

    pub fn admits(self, sample: &Sample) -> bool {
        match self {
            SampleFilter::All => true,
            SampleFilter::FailedOnly => sample.verdict.kind != VerdictKind::Pass,
        }
    }
}

impl FromStr for SampleFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(SampleFilter::All),
            "failed-only" | "failed" | "failedonly" => Ok(SampleFilter::FailedOnly),
            other => Err(format!("unknown sample filter {other:?} (expected all or failed-only)")),
        }
    }
}

/// `(sample index, extracted code)` for samples that have code and pass the filter.
pub fn extracted_codes(samples: &[Sample], filter: SampleFilter) -> Vec<(u32, &str)> {
    samples
        .iter()
        .filter(|s| filter.admits(s))
        .filter_map(|s| s.extracted_code.as_deref().map(|c| (s.index, c)))
        .collect()
}

pub fn spec_word_count(problem: &Problem) -> usize {
    problem.spec_text.split_whitespace().count()
}

pub fn ref_token_count(problem: &Problem) -> Option<usize> {
    problem.ref_code.as_deref().map(|c| lex(c).len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBar {
    pub bin: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub problems: Vec<String>,
    /// `(k, problems in the bin with a pass within the first k attempts)`.
    pub successes: Vec<(u32, usize)>,
}

/// Sorts problems by reference-code token count (ties by id) and cuts them
/// into consecutive groups of `bin_size`; the last group may be smaller.
/// `first_pass` maps problem id to its 1-based first passing attempt.
pub fn bin_by_length(
    problems: &[Problem],
    first_pass: &BTreeMap<String, Option<u32>>,
    bin_size: usize,
    checkpoints: &[u32],
) -> Result<Vec<LengthBar>, DispersionError> {
    if bin_size == 0 {
        return Err(DispersionError::InvalidParameter("bin_size must be at least 1".into()));
    }
    let missing: Vec<String> = problems
        .iter()
        .filter(|p| p.ref_code.is_none())
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DispersionError::MissingRefCode { ids: missing });
    }
    let mut sized: Vec<(usize, &str)> = problems
        .iter()
        .map(|p| (ref_token_count(p).unwrap_or(0), p.id.as_str()))
        .collect();
    sized.sort();
    Ok(sized
        .chunks(bin_size)
        .enumerate()
        .map(|(bin, chunk)| {
            let successes = checkpoints
                .iter()
                .map(|&k| {
                    let hits = chunk
                        .iter()
                        .filter(|(_, id)| matches!(first_pass.get(*id), Some(Some(f)) if *f <= k))
                        .count();
                    (k, hits)
                })
                .collect();
            LengthBar {
                bin,
                min_tokens: chunk.first().map(|c| c.0).unwrap_or(0),
                max_tokens: chunk.last().map(|c| c.0).unwrap_or(0),
                problems: chunk.iter().map(|c| c.1.to_string()).collect(),
                successes,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub problem_id: String,
    pub ref_token_count: Option<usize>,
    /// Whitespace-separated word count of the specification.
    pub spec_words: usize,
    pub samples: usize,
    pub mcd: f64,
    pub tagged: bool,
}

/// One row per problem with at least two admitted extracted codes.
pub fn scatter_mcd(
    problems: &[Problem],
    samples: &BTreeMap<String, Vec<Sample>>,
    n: usize,
    filter: SampleFilter,
    tag: &str,
) -> Vec<ScatterRow> {
    let empty = Vec::new();
    problems
        .iter()
        .filter_map(|p| {
            let codes = extracted_codes(samples.get(&p.id).unwrap_or(&empty), filter);
            if codes.len() < 2 {
                log::warn!("{}: {} extracted code(s) under filter {}, skipping", p.id, codes.len(), filter.as_str());
                return None;
            }
            let texts: Vec<&str> = codes.iter().map(|c| c.1).collect();
            let m = mcd(&vectorize(&texts, n)).ok()?;
            Some(ScatterRow {
                problem_id: p.id.clone(),
                ref_token_count: ref_token_count(p),
                spec_words: spec_word_count(p),
                samples: codes.len(),
                mcd: m,
                tagged: p.has_tag(tag),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub problem_id: String,
    /// Sample index of each input position, before permutation.
    pub sample_indices: Vec<u32>,
    pub order: ClusterOrder,
    /// Similarity matrix with rows and columns in `order.permutation` order.
    pub matrix: SimilarityMatrix,
    pub mcd: f64,
    pub n: usize,
    pub seed: u64,
    pub filter: SampleFilter,
}

/// Cluster-ordered similarity matrix over `codes`. `k = None` picks
/// [`default_k`].
pub fn heatmap(
    problem_id: &str,
    codes: &[(u32, &str)],
    n: usize,
    k: Option<usize>,
    seed: u64,
    filter: SampleFilter,
) -> Result<Heatmap, DispersionError> {
    if codes.len() < 2 {
        return Err(DispersionError::TooFewSamples { found: codes.len() });
    }
    let texts: Vec<&str> = codes.iter().map(|c| c.1).collect();
    let set = vectorize(&texts, n).with_problem_id(problem_id);
    let order = cluster_order(&set, k.unwrap_or_else(|| default_k(set.len())), seed);
    let matrix = similarity_matrix(&set).permuted(&order.permutation);
    Ok(Heatmap {
        problem_id: problem_id.to_string(),
        sample_indices: codes.iter().map(|c| c.0).collect(),
        mcd: mcd(&set)?,
        order,
        matrix,
        n,
        seed,
        filter,
    })
}

/// File-name-safe rendering of a problem id.
pub fn file_stem(problem_id: &str) -> String {
    problem_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<(), DispersionError> {
    std::fs::write(path, body).map_err(|source| DispersionError::Io { path: path.display().to_string(), source })
}

#[derive(Serialize)]
struct HeatmapMeta<'a> {
    schema_version: u32,
    problem_id: &'a str,
    n: usize,
    k: usize,
    seed: u64,
    filter: &'static str,
    samples: usize,
    mcd: f64,
    permutation: &'a [usize],
    row_samples: Vec<u32>,
    labels: &'a [usize],
    iterations: usize,
}

/// Writes `heatmap_<id>.csv` and `heatmap_<id>.json` into `dir`.
pub fn write_heatmap(dir: &Path, h: &Heatmap) -> Result<(PathBuf, PathBuf), DispersionError> {
    let stem = file_stem(&h.problem_id);
    let row_samples: Vec<u32> = h.order.permutation.iter().map(|&p| h.sample_indices[p]).collect();

    let mut csv = String::from("schema_version,sample");
    for s in &row_samples {
        let _ = write!(csv, ",s{s}");
    }
    csv.push('\n');
    for (r, s) in row_samples.iter().enumerate() {
        let _ = write!(csv, "{ANALYSIS_SCHEMA_VERSION},{s}");
        for v in h.matrix.row(r) {
            let _ = write!(csv, ",{}", sig6(*v));
        }
        csv.push('\n');
    }
    let csv_path = dir.join(format!("heatmap_{stem}.csv"));
    write_file(&csv_path, &csv)?;

    let meta = HeatmapMeta {
        schema_version: ANALYSIS_SCHEMA_VERSION,
        problem_id: &h.problem_id,
        n: h.n,
        k: h.order.k,
        seed: h.seed,
        filter: h.filter.as_str(),
        samples: h.sample_indices.len(),
        mcd: round6(h.mcd),
        permutation: &h.order.permutation,
        row_samples,
        labels: &h.order.labels,
        iterations: h.order.iterations,
    };
    let json_path = dir.join(format!("heatmap_{stem}.json"));
    let body = serde_json::to_string_pretty(&meta).expect("heatmap metadata serializes");
    write_file(&json_path, &(body + "\n"))?;
    Ok((csv_path, json_path))
}

pub fn write_scatter_csv(path: &Path, rows: &[ScatterRow], filter: SampleFilter) -> Result<(), DispersionError> {
    let mut csv = String::from("schema_version,problem_id,ref_token_count,spec_words,samples,mcd,tagged,filter\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{ANALYSIS_SCHEMA_VERSION},{},{},{},{},{},{},{}",
            r.problem_id,
            r.ref_token_count.map(|c| c.to_string()).unwrap_or_default(),
            r.spec_words,
            r.samples,
            sig6(r.mcd),
            r.tagged,
            filter.as_str()
        );
    }
    write_file(path, &csv)
}

pub fn write_bins_csv(path: &Path, bars: &[LengthBar], checkpoints: &[u32]) -> Result<(), DispersionError> {
    let mut csv = String::from("schema_version,bin,problems,min_tokens,max_tokens");
    for k in checkpoints {
        let _ = write!(csv, ",hits_at_{k}");
    }
    csv.push('\n');
    for b in bars {
        let _ = write!(
            csv,
            "{ANALYSIS_SCHEMA_VERSION},{},{},{},{}",
            b.bin,
            b.problems.len(),
            b.min_tokens,
            b.max_tokens
        );
        for (_, hits) in &b.successes {
            let _ = write!(csv, ",{hits}");
        }
        csv.push('\n');
    }
    write_file(path, &csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{GenerationParams, UsageRecord, Verdict};

    fn problem(id: &str, ref_code: Option<&str>) -> Problem {
        Problem {
            id: id.into(),
            spec_text: "add two numbers".into(),
            testbench_source: "tb".into(),
            ref_code: ref_code.map(Into::into),
            tags: Default::default(),
            suite: "t".into(),
            pass_regex: None,
            fail_regex: None,
        }
    }

    fn sample(pid: &str, index: u32, code: Option<&str>, kind: VerdictKind) -> Sample {
        Sample {
            schema_version: 1,
            problem_id: pid.into(),
            index,
            raw_response: String::new(),
            extracted_code: code.map(Into::into),
            verdict: Verdict::new(kind, ""),
            usage: UsageRecord::default(),
            latency_ms: 0,
            params: GenerationParams::default(),
            created_at: chrono::DateTime::UNIX_EPOCH,
        }
    }

    #[test]
    fn bins_hand_fixture() {
        let problems = vec![
            problem("a", Some("a b c d")),
            problem("b", Some("a")),
            problem("c", Some("a b c")),
            problem("d", Some("a b")),
        ];
        let fp: BTreeMap<String, Option<u32>> = [
            ("a".to_string(), Some(1)),
            ("b".to_string(), None),
            ("c".to_string(), Some(5)),
            ("d".to_string(), Some(12)),
        ]
        .into();
        let bars = bin_by_length(&problems, &fp, 2, &[1, 10]).unwrap();
        assert_eq!(bars.len(), 2);
        assert_eq!((bars[0].min_tokens, bars[0].max_tokens), (1, 2));
        assert_eq!(bars[0].problems, ["b", "d"]);
        assert_eq!(bars[0].successes, vec![(1, 0), (10, 0)]);
        assert_eq!((bars[1].min_tokens, bars[1].max_tokens), (3, 4));
        assert_eq!(bars[1].successes, vec![(1, 1), (10, 2)]);
    }

    #[test]
    fn bins_require_ref_code() {
        let problems = vec![problem("a", Some("x")), problem("b", None)];
        match bin_by_length(&problems, &BTreeMap::new(), 15, &[1]) {
            Err(DispersionError::MissingRefCode { ids }) => assert_eq!(ids, ["b"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scatter_skips_thin_problems_and_filters() {
        let problems = vec![problem("a", Some("x y")), problem("b", None)];
        let samples: BTreeMap<String, Vec<Sample>> = [
            (
                "a".to_string(),
                vec![
                    sample("a", 0, Some("module m; endmodule"), VerdictKind::SimFail),
                    sample("a", 1, Some("module m; endmodule"), VerdictKind::Pass),
                    sample("a", 2, None, VerdictKind::ExtractError),
                ],
            ),
            ("b".to_string(), vec![sample("b", 0, Some("module q; endmodule"), VerdictKind::SimFail)]),
        ]
        .into();
        let rows = scatter_mcd(&problems, &samples, 2, SampleFilter::All, DEFAULT_TAG);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].samples, 2);
        assert_eq!(rows[0].ref_token_count, Some(2));
        assert!(rows[0].mcd.abs() < 1e-12);
        assert!(scatter_mcd(&problems, &samples, 2, SampleFilter::FailedOnly, DEFAULT_TAG).is_empty());
    }

    #[test]
    fn identical_heatmap_is_all_ones() {
        let codes: Vec<(u32, &str)> = (0..4).map(|i| (i, "module m(input a); endmodule")).collect();
        let h = heatmap("p", &codes, 2, None, 3, SampleFilter::All).unwrap();
        assert!(h.matrix.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(h.mcd.abs() < 1e-12);
    }

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("Prob001_zero"), "Prob001_zero");
        assert_eq!(file_stem("a/b c"), "a_b_c");
    }
}

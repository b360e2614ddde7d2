//! Store-level dispersion analysis written under `<store>/analysis/`.

use std::path::PathBuf;

use super::analysis::{
    bin_by_length, extracted_codes, heatmap, scatter_mcd, write_bins_csv, write_heatmap, write_scatter_csv,
    SampleFilter, ScatterRow, DEFAULT_BIN_SIZE, DEFAULT_TAG,
};
use super::{DispersionError, DEFAULT_NGRAM};
use crate::metrics::DEFAULT_CHECKPOINTS;
use crate::orchestrator::CampaignStore;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    /// Problem ids to draw heatmaps for; empty selects every problem.
    pub problems: Vec<String>,
    pub ngram: usize,
    /// `None` picks the default cluster count per problem.
    pub k_clusters: Option<usize>,
    pub seed: u64,
    /// Population of the MCD scatter.
    pub filter: SampleFilter,
    /// Population of the heatmaps; failed attempts show where wrong answers cluster.
    pub heatmap_filter: SampleFilter,
    pub bin_size: usize,
    pub checkpoints: Vec<u32>,
    pub tag: String,
    /// Defaults to `<store>/analysis`.
    pub out_dir: Option<PathBuf>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            problems: Vec::new(),
            ngram: DEFAULT_NGRAM,
            k_clusters: None,
            seed: 0,
            filter: SampleFilter::All,
            heatmap_filter: SampleFilter::FailedOnly,
            bin_size: DEFAULT_BIN_SIZE,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            tag: DEFAULT_TAG.to_string(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapEntry {
    pub problem_id: String,
    pub samples: usize,
    pub k: usize,
    pub mcd: f64,
    pub csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub dir: PathBuf,
    pub heatmaps: Vec<HeatmapEntry>,
    pub scatter: Vec<ScatterRow>,
    pub bins_written: bool,
    pub notices: Vec<String>,
}

pub fn analyze_store(store: &CampaignStore, opts: &AnalyzeOptions) -> Result<AnalyzeSummary, DispersionError> {
    if !(1..=4).contains(&opts.ngram) {
        return Err(DispersionError::InvalidParameter(format!("n-gram order must be 1..=4, got {}", opts.ngram)));
    }
    if opts.k_clusters == Some(0) {
        return Err(DispersionError::InvalidParameter("k_clusters must be at least 1".into()));
    }
    for id in &opts.problems {
        if !store.problems().iter().any(|p| &p.id == id) {
            return Err(DispersionError::InvalidParameter(format!("unknown problem {id:?}")));
        }
    }
    let dir = opts.out_dir.clone().unwrap_or_else(|| store.root().join("analysis"));
    std::fs::create_dir_all(&dir).map_err(|source| DispersionError::Io { path: dir.display().to_string(), source })?;
    let mut notices = Vec::new();

    let mut heatmaps = Vec::new();
    for p in store.problems() {
        if !opts.problems.is_empty() && !opts.problems.contains(&p.id) {
            continue;
        }
        let codes = extracted_codes(store.samples(&p.id), opts.heatmap_filter);
        match heatmap(&p.id, &codes, opts.ngram, opts.k_clusters, opts.seed, opts.heatmap_filter) {
            Ok(h) => {
                let (csv, _) = write_heatmap(&dir, &h)?;
                heatmaps.push(HeatmapEntry {
                    problem_id: p.id.clone(),
                    samples: codes.len(),
                    k: h.order.k,
                    mcd: h.mcd,
                    csv,
                });
            }
            Err(DispersionError::TooFewSamples { found }) => {
                log::warn!("{}: {found} extracted code(s), heatmap skipped", p.id);
                notices.push(format!(
                    "{}: heatmap skipped, {found} {} extracted code(s)",
                    p.id,
                    opts.heatmap_filter.as_str()
                ));
            }
            Err(e) => return Err(e),
        }
    }

    let scatter = scatter_mcd(store.problems(), store.all_samples(), opts.ngram, opts.filter, &opts.tag);
    write_scatter_csv(&dir.join("scatter.csv"), &scatter, opts.filter)?;

    let bins_written = match bin_by_length(store.problems(), &store.first_pass_map(), opts.bin_size, &opts.checkpoints) {
        Ok(bars) => {
            write_bins_csv(&dir.join("bins.csv"), &bars, &opts.checkpoints)?;
            true
        }
        Err(DispersionError::MissingRefCode { ids }) => {
            notices.push(format!("length bins skipped: {} problem(s) lack reference code", ids.len()));
            false
        }
        Err(e) => return Err(e),
    };

    Ok(AnalyzeSummary { dir, heatmaps, scatter, bins_written, notices })
}

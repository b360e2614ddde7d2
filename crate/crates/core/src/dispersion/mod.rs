//! Lexing, TF-IDF vectors, cosine dispersion, cluster ordering and length
//! binning of sampled code.

pub mod analysis;
pub mod kmeans;
pub mod lexer;
pub mod report;
pub mod tfidf;

pub use analysis::{
    bin_by_length, heatmap, scatter_mcd, write_bins_csv, write_heatmap, write_scatter_csv, Heatmap, LengthBar,
    SampleFilter, ScatterRow,
};
pub use kmeans::{cluster_order, default_k, ClusterOrder};
pub use lexer::{tokenize, tokenize_bytes, TokenStream};
pub use report::{analyze_store, AnalyzeOptions, AnalyzeSummary, HeatmapEntry};
pub use tfidf::{
    cosine, mcd, similarity_matrix, vectorize, vectorize_tokens, CodeVectorSet, SimilarityMatrix, SparseVector,
    DEFAULT_NGRAM,
};

#[derive(Debug, thiserror::Error)]
pub enum DispersionError {
    #[error("need at least 2 samples, found {found}")]
    TooFewSamples { found: usize },
    #[error("problems without reference code: {}", ids.join(", "))]
    MissingRefCode { ids: Vec<String> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

//! Representational self-similarity and mutual-kNN alignment of embedding
//! sets, stratified by per-item scores.

pub mod alignkit;
pub mod cli;
pub mod embedding_store;
pub mod error;
pub mod simkit;
pub mod stats;
pub mod strata;
pub mod synth;

pub use alignkit::{
    knn_table, layer_alignment_curve, mutual_knn_alignment, stratified_alignment, AlignmentResult,
    LayerCurve, LayerPoint, NeighborTable,
};
pub use embedding_store::{
    load_container, load_csv, save_container, EmbeddingSet, ItemMeta, LayerStack,
};
pub use error::{Error, ErrorClass, Result};
pub use simkit::{
    cosine_similarity, euclidean_distance, mean_within_similarity, pairwise_matrix, stratum_delta,
    MetricKind, SimilaritySummary, Subsample,
};
pub use stats::{bootstrap_ci, expected_null_alignment, permutation_test_diff, RngSeed, TestReport};
pub use strata::{bucketize, Stratum, StratumLabels, Thresholds};
pub use synth::{generate, SynthKind, SynthOutput, SynthSpec};

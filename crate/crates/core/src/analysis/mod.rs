//! Offline analyses over the permission-risk cache.

mod distribution;
mod matrix;
mod ngram;
pub mod report;
mod stats;

pub use distribution::{distribution_report, DistributionReport};
pub use matrix::{agreement_matrix, transition_matrix, AgreementMatrix, ScoreGrid, TransitionMatrix};
pub use ngram::{
    model_similarity_matrix, ngram_set, ngram_similarity, tokenize, SimilarityMatrix, STOPWORD_LIST_VERSION,
};
pub use stats::{per_permission_stats, stats_for, PermissionStats};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("no permissions shared between {left} and {right}")]
    EmptyIntersection { left: String, right: String },
    #[error("score {score} for {permission} is outside 1..=5")]
    ScoreOutOfRange { permission: String, score: u8 },
}

/// Round half-up to `decimals` places. The nudge keeps values such as 2.675,
/// stored as 2.67499..., on the side their decimal spelling implies.
pub fn round_half_up(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = value * scale;
    let nudged = scaled + scaled.abs().max(1.0) * 1e-12;
    nudged.round() / scale
}

//! Application-level risk aggregation.
//!
//! Everything in here is pure: permission scores go in, a [`RiskAssessment`]
//! or a [`SpikeDecision`] comes out. Persistence of spike state belongs to
//! [`crate::statestore`].

pub(crate) mod aggregate;
mod mean;
mod rules;
mod spike;
mod tier;

pub use aggregate::{
    aggregate, apply_cap_tempering, apply_synergy, base_score, Modifier, RiskAssessment,
    RiskParams, ScoredPermission, SYNERGY_MIN_SCORE, SYNERGY_SCOPE,
};
pub use mean::{median, power_mean};
pub use rules::{classify_structural, Classification, RuleKind, RuleSet, StructuralRule};
pub use spike::{evaluate_spikes, spike_signature, SpikeAlert, SpikeConfig, SpikeDecision, SpikeState};
pub use tier::{map_tier, Tier, TierRepresentatives, TierThresholds};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskMathError {
    #[error("empty input: {0} needs at least one value")]
    EmptyInput(&'static str),
    #[error("value {0} is outside the domain of the power mean (must be > 0)")]
    NonPositive(f64),
    #[error("invalid tier thresholds: {0}")]
    Thresholds(String),
    #[error("invalid structural rule `{pattern}`: {reason}")]
    Rule { pattern: String, reason: String },
    #[error("invalid spike configuration: {0}")]
    Spike(String),
}

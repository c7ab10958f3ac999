//! Differential privacy primitives used by the matchmaker.
//!
//! Everything here is pure given its inputs and the state of the random
//! stream handed in. Noise and subsampling draw from separate streams so a
//! test can stub one while keeping the other live.

mod audit;
mod dataset;
mod ledger;
mod mechanism;
mod noise;
mod params;
mod subsample;

use thiserror::Error;

pub use audit::{
    audit_slack, epsilon_audit, epsilon_audit_pair, neighboring_datasets, AuditOptions, AuditReport, MIN_AUDIT_TRIALS,
};
pub use dataset::{ContributionRecord, Dataset};
pub use ledger::{BudgetLedger, LedgerEntry};
pub use mechanism::{
    derive_mean, dp_count, dp_sum, CountMechanism, Mechanism, MechanismDescriptor, SumMechanism,
};
pub use noise::{sample_noise, NoiseSource, ZeroNoise};
pub use params::{gaussian_sigma, laplace_scale, NoiseKind, NoiseParams, PrivacyParams};
pub use subsample::{
    amplify_by_subsampling, sample_size, subsample, subsample_indices, AmplifiedBudget,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid privacy parameter: {0}")]
    Parameter(String),
    #[error("invalid dataset: {0}")]
    Data(String),
    #[error("audit error: {0}")]
    Audit(String),
    #[error("privacy budget exhausted: requested epsilon {requested}, remaining {remaining}")]
    BudgetExhausted { requested: f64, remaining: f64 },
}

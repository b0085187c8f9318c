//! Simulation: covariate laws, Parzen and random-intercept generators, the
//! quadrature truth oracle, and the replicate harness.

mod config;
mod generate;
pub mod quadrature;
mod replicate;
mod truth;

pub use config::{Coefficients, CovariateLaw, GenerationConfig, Mechanism, Method};
pub use generate::{
    generate_binary, generate_covariates, generate_dataset, parzen_bounds, parzen_generate,
    parzen_shapes, random_intercept_generate,
};
pub use replicate::{
    correct_psm, misspecified_psm, outcome_model, run_replicates, EstimatorSummary,
    ReplicateEstimator, ReplicateRecord, ReplicateSummary, TM_PARAMETERS,
};
pub use truth::{marginal_truth, TruthValues, QUADRATURE_NODES, QUADRATURE_TARGET};

//! Estimating equations and deterministic solvers for the missingness,
//! outcome, and treatment stages.

mod conditional;
mod equation;
mod fit;
mod pipeline;
pub(crate) mod scoring;
mod treatment;
mod weights;

pub use conditional::ConditionalEquation;
pub use equation::{Draw, EstimatingEquation};
pub use fit::{fit_complete_case, fit_dr_gee2, fit_equation, fit_ipw_gee2, fit_omee, fit_psee};
pub use pipeline::{
    run_pipeline, run_pipeline_cached, solve_stage, ChainSummary, EstimatorChoice, EstimatorKind,
    FailureCategory, NuisanceCache, PipelineFailure, PipelineFit, PipelineOptions, PipelineSpecs,
    SolverKind, StageFit,
};
pub use scoring::{fisher_scoring, FitResult, Score, ScoringControls};
pub use treatment::{augmentation_term, OmPredictions, TreatmentEquation, Weighting, ZetaParts};
pub use weights::{
    build_ipw_matrix, joint_observation_prob, IpwMode, PsmPredictions, POSITIVITY_FLOOR,
};

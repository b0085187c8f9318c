//! Clustered data, model designs, and the second-order residual structure.

mod data;
mod predict;
mod spec;

pub use data::{ClusterData, Dataset};
pub(crate) use predict::{checked_corr, checked_mean, dot};
pub use predict::{
    jacobian, predict_corr, predict_corr_at, predict_mean, predict_mean_at, rho_dagger,
    standardized_residuals, working_covariance, Jacobian, WorkingCovariance,
};
pub use spec::{Covariate, ModelSpec, ParameterVector, Target};

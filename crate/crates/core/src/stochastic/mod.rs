//! Subsampled Fisher scoring: per-iteration simple random subsamples within
//! clusters, inflated to keep scores and information unbiased.

mod chain;
mod rate;
mod sampling;
mod zeta;

pub(crate) use chain::median;
pub use chain::{par_sgee2, run_chain, ChainResult, ParallelResult, SamplingPlan};
pub use rate::LearningRate;
pub use sampling::{
    first_inflation, induced_weights, pair_inflation, srswor, stream, subsample_size, Order,
};
pub use zeta::{stochastic_zeta, ZetaVariant};

use crate::error::Result;
use crate::estimators::{
    ConditionalEquation, IpwMode, OmPredictions, PsmPredictions, TreatmentEquation,
    POSITIVITY_FLOOR,
};
use crate::model::{Dataset, ModelSpec, ParameterVector};

/// Stochastic fit of a propensity or outcome model, chain 0.
pub fn s_fit_conditional(
    data: &Dataset,
    spec: &ModelSpec,
    plan: &SamplingPlan,
) -> Result<ChainResult> {
    plan.validate()?;
    let eq = ConditionalEquation::new(data, spec)?;
    eq.check_variation()?;
    Ok(run_chain(
        &eq,
        ParameterVector::zeros(spec),
        plan,
        plan.omega_nuisance,
        0,
    ))
}

/// Stochastic inverse-probability weighted fit of the treatment model, chain 0.
pub fn s_ipw_gee2(
    data: &Dataset,
    psm_spec: &ModelSpec,
    psm_theta: &ParameterVector,
    mode: IpwMode,
    plan: &SamplingPlan,
) -> Result<ChainResult> {
    plan.validate()?;
    let psm = PsmPredictions::new(data, psm_spec, psm_theta, POSITIVITY_FLOOR)?;
    let eq = TreatmentEquation::ipw(data, mode, psm)?;
    Ok(run_chain(
        &eq,
        ParameterVector::zeros(&ModelSpec::canonical_tm()),
        plan,
        plan.omega_tm,
        0,
    ))
}

/// Stochastic doubly robust fit of the treatment model, chain 0.
pub fn s_dr_gee2(
    data: &Dataset,
    psm_spec: &ModelSpec,
    psm_theta: &ParameterVector,
    om_spec: &ModelSpec,
    om_theta: &ParameterVector,
    plan: &SamplingPlan,
) -> Result<ChainResult> {
    plan.validate()?;
    let psm = PsmPredictions::new(data, psm_spec, psm_theta, POSITIVITY_FLOOR)?;
    let om = OmPredictions::new(data, om_spec, om_theta)?;
    let eq = TreatmentEquation::doubly_robust(data, IpwMode::G2, psm, om)?;
    Ok(run_chain(
        &eq,
        ParameterVector::zeros(&ModelSpec::canonical_tm()),
        plan,
        plan.omega_tm,
        0,
    ))
}

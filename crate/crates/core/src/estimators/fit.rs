//! Deterministic fits of each stage.

use super::conditional::ConditionalEquation;
use super::equation::EstimatingEquation;
use super::scoring::{fisher_scoring, FitResult, ScoringControls};
use super::treatment::{OmPredictions, TreatmentEquation};
use super::weights::{IpwMode, PsmPredictions, POSITIVITY_FLOOR};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, ParameterVector, Target};

/// Fisher scoring on any stage equation from `theta0`.
pub fn fit_equation<E: EstimatingEquation + ?Sized>(
    eq: &E,
    theta0: ParameterVector,
    controls: &ScoringControls,
) -> Result<FitResult> {
    fisher_scoring(eq.stage(), |t| eq.total_score(t), theta0, controls)
}

fn fit_conditional(
    data: &Dataset,
    spec: &ModelSpec,
    target: Target,
    controls: &ScoringControls,
) -> Result<FitResult> {
    if spec.target() != target {
        return Err(Error::Config(format!(
            "expected a {target:?} spec, got {:?}",
            spec.target()
        )));
    }
    let eq = ConditionalEquation::new(data, spec)?;
    eq.check_variation()?;
    fit_equation(&eq, ParameterVector::zeros(spec), controls)
}

/// Missingness model fitted to the indicators of every subject.
pub fn fit_psee(
    data: &Dataset,
    psm_spec: &ModelSpec,
    controls: &ScoringControls,
) -> Result<FitResult> {
    fit_conditional(data, psm_spec, Target::Propensity, controls)
}

/// Outcome model fitted to the observed subjects.
pub fn fit_omee(
    data: &Dataset,
    om_spec: &ModelSpec,
    controls: &ScoringControls,
) -> Result<FitResult> {
    fit_conditional(data, om_spec, Target::Outcome, controls)
}

/// Canonical treatment model on the observed subjects, unweighted.
pub fn fit_complete_case(data: &Dataset, controls: &ScoringControls) -> Result<FitResult> {
    let eq = TreatmentEquation::complete_case(data)?;
    fit_equation(
        &eq,
        ParameterVector::zeros(&ModelSpec::canonical_tm()),
        controls,
    )
}

/// Inverse-probability weighted treatment model.
pub fn fit_ipw_gee2(
    data: &Dataset,
    psm_spec: &ModelSpec,
    psm_theta: &ParameterVector,
    mode: IpwMode,
    controls: &ScoringControls,
) -> Result<FitResult> {
    let psm = PsmPredictions::new(data, psm_spec, psm_theta, POSITIVITY_FLOOR)?;
    let eq = TreatmentEquation::ipw(data, mode, psm)?;
    fit_equation(
        &eq,
        ParameterVector::zeros(&ModelSpec::canonical_tm()),
        controls,
    )
}

/// Doubly robust treatment model with `G2` pair weights.
pub fn fit_dr_gee2(
    data: &Dataset,
    psm_spec: &ModelSpec,
    psm_theta: &ParameterVector,
    om_spec: &ModelSpec,
    om_theta: &ParameterVector,
    controls: &ScoringControls,
) -> Result<FitResult> {
    let psm = PsmPredictions::new(data, psm_spec, psm_theta, POSITIVITY_FLOOR)?;
    let om = OmPredictions::new(data, om_spec, om_theta)?;
    let eq = TreatmentEquation::doubly_robust(data, IpwMode::G2, psm, om)?;
    fit_equation(
        &eq,
        ParameterVector::zeros(&ModelSpec::canonical_tm()),
        controls,
    )
}

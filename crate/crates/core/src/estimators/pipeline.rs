//! Full analysis: missingness and outcome models, then the treatment model,
//! with a choice of deterministic or subsampled solvers.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::conditional::ConditionalEquation;
use super::equation::EstimatingEquation;
use super::fit::fit_equation;
use super::scoring::{FitResult, ScoringControls};
use super::treatment::{OmPredictions, TreatmentEquation};
use super::weights::{IpwMode, PsmPredictions, POSITIVITY_FLOOR};
use crate::error::{Error, Result, Stage};
use crate::inference::{sandwich_variance, NuisanceHandling, SandwichResult, StackedEstimate};
use crate::model::{Dataset, ModelSpec, ParameterVector, Target};
use crate::stochastic::{par_sgee2, run_chain, ChainResult, SamplingPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    CompleteCase,
    IpwG1,
    IpwG2,
    DoublyRobust,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        Self::CompleteCase,
        Self::IpwG1,
        Self::IpwG2,
        Self::DoublyRobust,
    ];

    pub fn needs_psm(self) -> bool {
        self != Self::CompleteCase
    }

    pub fn needs_om(self) -> bool {
        self == Self::DoublyRobust
    }

    pub fn ipw_mode(self) -> Option<IpwMode> {
        match self {
            Self::CompleteCase => None,
            Self::IpwG1 => Some(IpwMode::G1),
            Self::IpwG2 | Self::DoublyRobust => Some(IpwMode::G2),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::CompleteCase => "CC-GEE2",
            Self::IpwG1 => "G1-IPW-GEE2",
            Self::IpwG2 => "G2-IPW-GEE2",
            Self::DoublyRobust => "DR-GEE2",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Deterministic,
    /// One subsampled chain.
    Stochastic,
    /// Averaged independent subsampled chains.
    ParallelStochastic,
}

impl SolverKind {
    pub fn prefix(self) -> &'static str {
        match self {
            Self::Deterministic => "",
            Self::Stochastic => "S-",
            Self::ParallelStochastic => "Par-S-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorChoice {
    pub kind: EstimatorKind,
    pub solver: SolverKind,
}

impl EstimatorChoice {
    pub fn new(kind: EstimatorKind, solver: SolverKind) -> Self {
        Self { kind, solver }
    }

    /// e.g. `S-DR-GEE2`.
    pub fn label(&self) -> String {
        format!("{}{}", self.solver.prefix(), self.kind.label())
    }
}

/// Model specifications of the three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpecs {
    pub tm: ModelSpec,
    pub psm: Option<ModelSpec>,
    pub om: Option<ModelSpec>,
}

impl PipelineSpecs {
    /// Saturated missingness and outcome models on all covariates.
    pub fn saturated(n_z: usize, n_x: usize) -> Result<Self> {
        Ok(Self {
            tm: ModelSpec::canonical_tm(),
            psm: Some(ModelSpec::saturated(Target::Propensity, n_z, n_x)?),
            om: Some(ModelSpec::saturated(Target::Outcome, n_z, n_x)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub controls: ScoringControls,
    pub plan: SamplingPlan,
    pub positivity_floor: f64,
    /// Compute the stacked sandwich covariance after fitting.
    pub sandwich: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            controls: ScoringControls::default(),
            plan: SamplingPlan::default(),
            positivity_floor: POSITIVITY_FLOOR,
            sandwich: false,
        }
    }
}

/// Summary of averaged chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chains: usize,
    pub converged: usize,
    pub median_runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFit {
    pub fit: FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<ChainSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub choice: EstimatorChoice,
    pub p_a: f64,
    pub psm: Option<StageFit>,
    pub om: Option<StageFit>,
    pub tm: StageFit,
    pub sandwich: Option<SandwichResult>,
    /// Why the sandwich could not be computed, if requested and it failed.
    pub sandwich_error: Option<String>,
}

impl PipelineFit {
    /// `(beta0*, betaA*, alpha0*, alphaA*)`.
    pub fn tm_estimate(&self) -> [f64; 4] {
        let t = &self.tm.fit.theta;
        [t.beta[0], t.beta[1], t.alpha[0], t.alpha[1]]
    }

    /// Total runtime of all stages.
    pub fn runtime_secs(&self) -> f64 {
        [self.psm.as_ref(), self.om.as_ref(), Some(&self.tm)]
            .into_iter()
            .flatten()
            .map(|s| s.fit.runtime_secs)
            .sum()
    }
}

/// Failure of one or more stages. Both nuisance stages are attempted even when
/// one fails; the treatment stage only runs when they succeed.
#[derive(Debug)]
pub struct PipelineFailure {
    pub psm: Option<Error>,
    pub om: Option<Error>,
    pub tm: Option<Error>,
}

/// Which stages failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureCategory {
    PsmOnly,
    OmOnly,
    PsmAndOm,
    Tm,
}

impl PipelineFailure {
    pub fn category(&self) -> FailureCategory {
        match (&self.psm, &self.om) {
            (Some(_), Some(_)) => FailureCategory::PsmAndOm,
            (Some(_), None) => FailureCategory::PsmOnly,
            (None, Some(_)) => FailureCategory::OmOnly,
            (None, None) => FailureCategory::Tm,
        }
    }

    /// First error in stage order.
    pub fn into_error(self) -> Error {
        self.psm
            .or(self.om)
            .or(self.tm)
            .unwrap_or_else(|| Error::Config("empty pipeline failure".into()))
    }

    /// The first error, by reference.
    pub fn first(&self) -> Option<&Error> {
        self.psm.as_ref().or(self.om.as_ref()).or(self.tm.as_ref())
    }
}

impl fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, err) in [("PSM", &self.psm), ("OM", &self.om), ("TM", &self.tm)] {
            if let Some(e) = err {
                if !first {
                    f.write_str("; ")?;
                }
                write!(f, "{name}: {e}")?;
                first = false;
            }
        }
        Ok(())
    }
}

impl std::error::Error for PipelineFailure {}

impl From<Error> for PipelineFailure {
    fn from(e: Error) -> Self {
        Self {
            psm: None,
            om: None,
            tm: Some(e),
        }
    }
}

fn chain_fit(stage: Stage, chain: ChainResult) -> Result<FitResult> {
    if !chain.converged {
        return Err(Error::Divergence {
            stage,
            reason: chain
                .divergence_reason
                .unwrap_or_else(|| "chain did not converge".into()),
        });
    }
    Ok(FitResult {
        stage,
        theta: chain.theta,
        converged: true,
        iterations: chain.iterations,
        max_update: chain.last_update,
        condition: chain.final_condition,
        runtime_secs: chain.runtime_secs,
        trace: chain.trace.unwrap_or_default(),
    })
}

/// Solves one stage equation from zero with the chosen solver.
pub fn solve_stage<E: EstimatingEquation + ?Sized>(
    eq: &E,
    theta0: ParameterVector,
    solver: SolverKind,
    options: &PipelineOptions,
) -> Result<StageFit> {
    let stage = eq.stage();
    let omega = options.plan.omega(stage);
    match solver {
        SolverKind::Deterministic => {
            let fit = fit_equation(eq, theta0, &options.controls)?;
            if !fit.converged {
                return Err(Error::Divergence {
                    stage,
                    reason: format!("no convergence within {} iterations", fit.iterations),
                });
            }
            Ok(StageFit { fit, chains: None })
        }
        SolverKind::Stochastic => {
            options.plan.validate()?;
            let fit = chain_fit(stage, run_chain(eq, theta0, &options.plan, omega, 0))?;
            Ok(StageFit { fit, chains: None })
        }
        SolverKind::ParallelStochastic => {
            let start = Instant::now();
            let par = par_sgee2(eq, &theta0, &options.plan, omega)?;
            let last = par
                .chains
                .iter()
                .find(|c| c.converged)
                .expect("at least one converged chain");
            let fit = FitResult {
                stage,
                theta: par.theta.clone(),
                converged: true,
                iterations: last.iterations,
                max_update: last.last_update,
                condition: last.final_condition,
                runtime_secs: start.elapsed().as_secs_f64(),
                trace: Vec::new(),
            };
            Ok(StageFit {
                fit,
                chains: Some(ChainSummary {
                    chains: par.chains.len(),
                    converged: par.n_converged,
                    median_runtime_secs: par.median_runtime_secs,
                }),
            })
        }
    }
}

fn nuisance_stage(
    data: &Dataset,
    spec: &ModelSpec,
    solver: SolverKind,
    options: &PipelineOptions,
) -> Result<StageFit> {
    let start = Instant::now();
    let eq = ConditionalEquation::new(data, spec)?;
    eq.check_variation()?;
    let mut out = solve_stage(&eq, ParameterVector::zeros(spec), solver, options)?;
    out.fit.runtime_secs = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Nuisance fits shared between estimators run on the same dataset.
#[derive(Debug, Default)]
pub struct NuisanceCache {
    entries: Vec<(ModelSpec, SolverKind, Result<StageFit>)>,
}

impl NuisanceCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(
        &mut self,
        data: &Dataset,
        spec: &ModelSpec,
        solver: SolverKind,
        options: &PipelineOptions,
    ) -> Result<StageFit> {
        if let Some((_, _, r)) = self
            .entries
            .iter()
            .find(|(s, k, _)| s == spec && *k == solver)
        {
            return r.clone();
        }
        let r = nuisance_stage(data, spec, solver, options);
        self.entries.push((spec.clone(), solver, r.clone()));
        r
    }
}

fn require<'a>(spec: &'a Option<ModelSpec>, target: Target) -> Result<&'a ModelSpec> {
    let spec = spec
        .as_ref()
        .ok_or_else(|| Error::Config(format!("estimator needs a {target:?} model")))?;
    if spec.target() != target {
        return Err(Error::Config(format!(
            "expected a {target:?} spec, got {:?}",
            spec.target()
        )));
    }
    Ok(spec)
}

/// Fits the nuisance models the estimator needs, then the treatment model.
pub fn run_pipeline(
    data: &Dataset,
    specs: &PipelineSpecs,
    choice: EstimatorChoice,
    options: &PipelineOptions,
) -> std::result::Result<PipelineFit, PipelineFailure> {
    run_pipeline_cached(data, specs, choice, options, &mut NuisanceCache::new())
}

/// As [`run_pipeline`], reusing nuisance fits already in `cache`.
pub fn run_pipeline_cached(
    data: &Dataset,
    specs: &PipelineSpecs,
    choice: EstimatorChoice,
    options: &PipelineOptions,
    cache: &mut NuisanceCache,
) -> std::result::Result<PipelineFit, PipelineFailure> {
    if specs.tm != ModelSpec::canonical_tm() {
        return Err(Error::Config("only the canonical treatment model is supported".into()).into());
    }
    let kind = choice.kind;
    let psm = kind.needs_psm().then(|| {
        require(&specs.psm, Target::Propensity)
            .and_then(|s| cache.fit(data, s, choice.solver, options))
    });
    let om = kind.needs_om().then(|| {
        require(&specs.om, Target::Outcome).and_then(|s| cache.fit(data, s, choice.solver, options))
    });
    let (psm, om) = match (psm.transpose(), om.transpose()) {
        (Ok(p), Ok(o)) => (p, o),
        (p, o) => {
            return Err(PipelineFailure {
                psm: p.err(),
                om: o.err(),
                tm: None,
            })
        }
    };

    let tm = (|| -> Result<StageFit> {
        let start = Instant::now();
        let eq = match kind.ipw_mode() {
            None => TreatmentEquation::complete_case(data)?,
            Some(mode) => {
                let psm_fit = psm.as_ref().expect("fitted");
                let pred = PsmPredictions::new(
                    data,
                    specs.psm.as_ref().expect("checked"),
                    &psm_fit.fit.theta,
                    options.positivity_floor,
                )?;
                match &om {
                    Some(om_fit) => {
                        let om_pred = OmPredictions::new(
                            data,
                            specs.om.as_ref().expect("checked"),
                            &om_fit.fit.theta,
                        )?;
                        TreatmentEquation::doubly_robust(data, mode, pred, om_pred)?
                    }
                    None => TreatmentEquation::ipw(data, mode, pred)?,
                }
            }
        };
        let mut out = solve_stage(
            &eq,
            ParameterVector::zeros(&specs.tm),
            choice.solver,
            options,
        )?;
        out.fit.runtime_secs = start.elapsed().as_secs_f64();
        Ok(out)
    })()?;

    let mut fit = PipelineFit {
        choice,
        p_a: data.p_a(),
        psm,
        om,
        tm,
        sandwich: None,
        sandwich_error: None,
    };
    if options.sandwich {
        let estimate = StackedEstimate {
            tm: fit.tm.fit.theta.clone(),
            psm: fit.psm.as_ref().map(|s| s.fit.theta.clone()),
            om: fit.om.as_ref().map(|s| s.fit.theta.clone()),
        };
        match sandwich_variance(
            data,
            specs,
            kind,
            &estimate,
            options.positivity_floor,
            NuisanceHandling::Correct,
        ) {
            Ok(s) => fit.sandwich = Some(s),
            Err(e) => fit.sandwich_error = Some(e.to_string()),
        }
    }
    Ok(fit)
}

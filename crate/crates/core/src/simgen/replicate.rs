//! Replicate simulations: regenerate, fit every estimator, and tabulate bias,
//! standard errors, coverage, failures, and runtimes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::GenerationConfig;
use super::generate::generate_dataset;
use crate::error::Result;
use crate::estimators::{
    run_pipeline_cached, EstimatorChoice, EstimatorKind, FailureCategory, NuisanceCache,
    PipelineOptions, PipelineSpecs, SolverKind,
};
use crate::model::{ModelSpec, Target};
use crate::stochastic::median;

/// Labels of the four treatment-model parameters.
pub const TM_PARAMETERS: [&str; 4] = ["beta0", "betaA", "alpha0", "alphaA"];

/// Standard normal 0.975 quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// Missingness model with every treatment interaction.
pub fn correct_psm(config: &GenerationConfig) -> Result<ModelSpec> {
    ModelSpec::saturated(Target::Propensity, config.z_laws.len(), config.x_laws.len())
}

/// Missingness model without treatment interactions.
pub fn misspecified_psm(config: &GenerationConfig) -> Result<ModelSpec> {
    ModelSpec::main_effects(Target::Propensity, config.z_laws.len(), config.x_laws.len())
}

pub fn outcome_model(config: &GenerationConfig) -> Result<ModelSpec> {
    ModelSpec::saturated(Target::Outcome, config.z_laws.len(), config.x_laws.len())
}

/// One row of a replicate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimator {
    pub name: String,
    pub choice: EstimatorChoice,
    pub specs: PipelineSpecs,
    /// Compute sandwich standard errors for this row.
    pub sandwich: bool,
}

impl ReplicateEstimator {
    /// Estimator with the correct missingness model and the saturated outcome model.
    pub fn new(config: &GenerationConfig, kind: EstimatorKind, solver: SolverKind) -> Result<Self> {
        let choice = EstimatorChoice::new(kind, solver);
        Ok(Self {
            name: choice.label(),
            choice,
            specs: PipelineSpecs {
                tm: ModelSpec::canonical_tm(),
                psm: kind.needs_psm().then(|| correct_psm(config)).transpose()?,
                om: kind.needs_om().then(|| outcome_model(config)).transpose()?,
            },
            sandwich: false,
        })
    }

    /// Same estimator with the interaction-free missingness model.
    pub fn with_misspecified_psm(mut self, config: &GenerationConfig) -> Result<Self> {
        if self.specs.psm.is_some() {
            self.specs.psm = Some(misspecified_psm(config)?);
            self.name.push_str(" (PSM misspecified)");
        }
        Ok(self)
    }

    pub fn with_sandwich(mut self, on: bool) -> Self {
        self.sandwich = on;
        self
    }

    /// Complete case, both IPW variants, and DR under correct and
    /// misspecified missingness models.
    pub fn standard_set(config: &GenerationConfig, solver: SolverKind) -> Result<Vec<Self>> {
        let mut out = EstimatorKind::ALL
            .iter()
            .map(|&k| Self::new(config, k, solver))
            .collect::<Result<Vec<_>>>()?;
        out.push(
            Self::new(config, EstimatorKind::DoublyRobust, solver)?
                .with_misspecified_psm(config)?,
        );
        Ok(out)
    }
}

/// Outcome of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub estimate: Option<[f64; 4]>,
    pub sandwich_se: Option<[f64; 4]>,
    pub failure: Option<FailureCategory>,
    pub message: Option<String>,
    /// PSM, OM, TM wall time of converged runs.
    pub runtimes: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub replicates: usize,
    pub converged: usize,
    pub bias: [f64; 4],
    pub replicate_se: [f64; 4],
    /// Mean sandwich SE over converged runs with a sandwich.
    pub sandwich_se: Option<[f64; 4]>,
    /// `sqrt(R) * bias / replicate SE`.
    pub wald: [f64; 4],
    /// Fraction of 95% Wald intervals containing the truth.
    pub coverage: Option<[f64; 4]>,
    pub pct_psm_error_only: f64,
    pub pct_om_error_only: f64,
    pub pct_psm_and_om_error: f64,
    /// TM failures among replicates whose nuisance fits converged.
    pub pct_conditional_tm_error: f64,
    /// Mean PSM, OM, TM runtime over converged runs.
    pub mean_runtime_secs: [Option<f64>; 3],
    pub median_tm_runtime_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub truth: [f64; 4],
    pub replicates: usize,
    pub rows: Vec<EstimatorSummary>,
    /// Per estimator, per replicate.
    pub records: Vec<Vec<ReplicateRecord>>,
}

impl ReplicateSummary {
    pub fn row(&self, name: &str) -> Option<&EstimatorSummary> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Converged estimates of one estimator.
    pub fn estimates(&self, index: usize) -> Vec<[f64; 4]> {
        self.records[index]
            .iter()
            .filter_map(|r| r.estimate)
            .collect()
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(name: &str, truth: &[f64; 4], records: &[ReplicateRecord]) -> EstimatorSummary {
    let reps = records.len();
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.estimate.is_some()).collect();
    let mut bias = [f64::NAN; 4];
    let mut replicate_se = [f64::NAN; 4];
    let mut wald = [f64::NAN; 4];
    for p in 0..4 {
        let vals: Vec<f64> = ok.iter().map(|r| r.estimate.unwrap()[p]).collect();
        let (m, sd) = mean_sd(&vals);
        bias[p] = m - truth[p];
        replicate_se[p] = sd;
        wald[p] = (vals.len() as f64).sqrt() * bias[p] / sd;
    }
    let with_se: Vec<(&[f64; 4], &[f64; 4])> = ok
        .iter()
        .filter_map(|r| Some((r.estimate.as_ref()?, r.sandwich_se.as_ref()?)))
        .collect();
    let (sandwich_se, coverage) = if with_se.is_empty() {
        (None, None)
    } else {
        let k = with_se.len() as f64;
        let mut se = [0.0; 4];
        let mut cov = [0.0; 4];
        for (est, s) in &with_se {
            for p in 0..4 {
                se[p] += s[p] / k;
                if (est[p] - truth[p]).abs() <= Z_975 * s[p] {
                    cov[p] += 1.0 / k;
                }
            }
        }
        (Some(se), Some(cov))
    };
    let count = |c: FailureCategory| records.iter().filter(|r| r.failure == Some(c)).count();
    let pct = |k: usize, n: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * k as f64 / n as f64
        }
    };
    let nuisance_failures = count(FailureCategory::PsmOnly)
        + count(FailureCategory::OmOnly)
        + count(FailureCategory::PsmAndOm);
    let mut tm_times: Vec<f64> = ok.iter().filter_map(|r| r.runtimes[2]).collect();
    EstimatorSummary {
        name: name.to_string(),
        replicates: reps,
        converged: ok.len(),
        bias,
        replicate_se,
        sandwich_se,
        wald,
        coverage,
        pct_psm_error_only: pct(count(FailureCategory::PsmOnly), reps),
        pct_om_error_only: pct(count(FailureCategory::OmOnly), reps),
        pct_psm_and_om_error: pct(count(FailureCategory::PsmAndOm), reps),
        pct_conditional_tm_error: pct(count(FailureCategory::Tm), reps - nuisance_failures),
        mean_runtime_secs: [0, 1, 2].map(|s| mean_of(ok.iter().filter_map(|r| r.runtimes[s]))),
        median_tm_runtime_secs: (!tm_times.is_empty()).then(|| median(&mut tm_times)),
    }
}

fn run_one(
    config: &GenerationConfig,
    estimators: &[ReplicateEstimator],
    options: &PipelineOptions,
    replicate: u64,
) -> Result<Vec<ReplicateRecord>> {
    let data = generate_dataset(config, replicate)?;
    let mut cache = NuisanceCache::new();
    Ok(estimators
        .iter()
        .map(|est| {
            let mut opts = options.clone();
            opts.sandwich = est.sandwich;
            match run_pipeline_cached(&data, &est.specs, est.choice, &opts, &mut cache) {
                Ok(fit) => ReplicateRecord {
                    replicate,
                    estimate: Some(fit.tm_estimate()),
                    sandwich_se: fit.sandwich.as_ref().map(|s| s.tm_se()),
                    failure: None,
                    message: fit.sandwich_error.clone(),
                    runtimes: [
                        fit.psm.as_ref().map(|s| s.fit.runtime_secs),
                        fit.om.as_ref().map(|s| s.fit.runtime_secs),
                        Some(fit.tm.fit.runtime_secs),
                    ],
                },
                Err(failure) => ReplicateRecord {
                    replicate,
                    estimate: None,
                    sandwich_se: None,
                    failure: Some(failure.category()),
                    message: Some(failure.to_string()),
                    runtimes: [None; 3],
                },
            }
        })
        .collect())
}

/// Runs `reps` replicates (concurrently) of every estimator against `truth`.
pub fn run_replicates(
    config: &GenerationConfig,
    truth: [f64; 4],
    estimators: &[ReplicateEstimator],
    reps: usize,
    options: &PipelineOptions,
) -> Result<ReplicateSummary> {
    config.validate()?;
    let per_rep = (0..reps as u64)
        .into_par_iter()
        .map(|r| run_one(config, estimators, options, r))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<Vec<ReplicateRecord>> = (0..estimators.len())
        .map(|e| per_rep.iter().map(|rep| rep[e].clone()).collect())
        .collect();
    let rows = estimators
        .iter()
        .zip(&records)
        .map(|(est, recs)| summarize(&est.name, &truth, recs))
        .collect();
    Ok(ReplicateSummary {
        truth,
        replicates: reps,
        rows,
        records,
    })
}

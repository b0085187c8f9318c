//! Report schemas and writers. Field names are part of the interface.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bench::BenchReport;
use crate::error::{Error, Result};
use crate::estimators::{PipelineFit, PipelineSpecs, StageFit};
use crate::inference::wald;
use crate::math::expit;
use crate::model::{Dataset, ModelSpec};
use crate::simgen::{ReplicateSummary, TruthValues, TM_PARAMETERS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// The effective configuration after defaults and overrides.
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub wald: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chains: usize,
    pub converged: usize,
    /// Median over converged chains.
    pub median_runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub converged: bool,
    pub iterations: usize,
    pub max_update: f64,
    pub condition: f64,
    pub runtime_secs: f64,
    pub chains: Option<ChainReport>,
    pub parameters: Vec<ParameterRow>,
}

/// Treatment-specific values on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPair {
    pub control: f64,
    pub treatment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub clusters: usize,
    pub subjects: usize,
    pub observed: usize,
    pub p_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: String,
    pub data: DataSummary,
    pub psm: Option<StageReport>,
    pub om: Option<StageReport>,
    pub tm: StageReport,
    /// `expit(beta0*)`, `expit(beta0* + betaA*)`.
    pub mean: ArmPair,
    /// `tanh(alpha0*)`, `tanh(alpha0* + alphaA*)`.
    pub icc: ArmPair,
    pub sandwich_error: Option<String>,
    pub provenance: Provenance,
}

fn names(prefix: &str, spec: &ModelSpec) -> Vec<String> {
    spec.beta_names()
        .iter()
        .map(|n| format!("{prefix}.beta.{n}"))
        .chain(
            spec.alpha_names()
                .iter()
                .map(|n| format!("{prefix}.alpha.{n}")),
        )
        .collect()
}

fn stage_report(
    prefix: &str,
    spec: &ModelSpec,
    stage: &StageFit,
    fit: &PipelineFit,
) -> StageReport {
    let theta = &stage.fit.theta;
    let estimates: Vec<f64> = theta.beta.iter().chain(&theta.alpha).copied().collect();
    let parameters = names(prefix, spec)
        .into_iter()
        .zip(estimates)
        .map(|(name, estimate)| {
            let se = fit
                .sandwich
                .as_ref()
                .and_then(|s| s.names.iter().position(|n| *n == name).map(|k| s.se[k]));
            let w = se.and_then(|se| wald(estimate, se, None).ok());
            ParameterRow {
                name,
                estimate,
                se,
                wald: w.as_ref().map(|w| w.statistic),
                p_value: w.map(|w| w.p_value),
            }
        })
        .collect();
    StageReport {
        converged: stage.fit.converged,
        iterations: stage.fit.iterations,
        max_update: stage.fit.max_update,
        condition: stage.fit.condition,
        runtime_secs: stage.fit.runtime_secs,
        chains: stage.chains.as_ref().map(|c| ChainReport {
            chains: c.chains,
            converged: c.converged,
            median_runtime_secs: c.median_runtime_secs,
        }),
        parameters,
    }
}

pub fn icc_pair(alpha0: f64, alpha_a: f64) -> ArmPair {
    ArmPair {
        control: alpha0.tanh(),
        treatment: (alpha0 + alpha_a).tanh(),
    }
}

pub fn fit_report(
    data: &Dataset,
    specs: &PipelineSpecs,
    fit: &PipelineFit,
    provenance: Provenance,
) -> FitReport {
    let [b0, ba, a0, aa] = fit.tm_estimate();
    let stage = |prefix: &str, spec: &Option<ModelSpec>, s: &Option<StageFit>| match (spec, s) {
        (Some(spec), Some(s)) => Some(stage_report(prefix, spec, s, fit)),
        _ => None,
    };
    FitReport {
        estimator: fit.choice.label(),
        data: DataSummary {
            clusters: data.len(),
            subjects: data.n_subjects(),
            observed: data.clusters().iter().map(|c| c.n_observed()).sum(),
            p_a: fit.p_a,
        },
        psm: stage("PSM", &specs.psm, &fit.psm),
        om: stage("OM", &specs.om, &fit.om),
        tm: stage_report("TM", &specs.tm, &fit.tm, fit),
        mean: ArmPair {
            control: expit(b0),
            treatment: expit(b0 + ba),
        },
        icc: icc_pair(a0, aa),
        sandwich_error: fit.sandwich_error.clone(),
        provenance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub method: String,
    pub beta0: f64,
    pub beta_a: f64,
    pub alpha0: f64,
    pub alpha_a: f64,
    pub mean: ArmPair,
    pub icc: ArmPair,
    pub quadrature_accuracy: f64,
    pub provenance: Provenance,
}

pub fn truth_report(method: &str, t: &TruthValues, provenance: Provenance) -> TruthReport {
    let (m0, m1) = t.means();
    TruthReport {
        method: method.to_string(),
        beta0: t.beta0,
        beta_a: t.beta_a,
        alpha0: t.alpha0,
        alpha_a: t.alpha_a,
        mean: ArmPair {
            control: m0,
            treatment: m1,
        },
        icc: icc_pair(t.alpha0, t.alpha_a),
        quadrature_accuracy: t.accuracy,
        provenance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub truth: [f64; 4],
    pub replicates: usize,
    pub rows: Vec<crate::simgen::EstimatorSummary>,
    pub provenance: Provenance,
}

pub fn summary_report(summary: &ReplicateSummary, provenance: Provenance) -> SummaryReport {
    SummaryReport {
        truth: summary.truth,
        replicates: summary.replicates,
        rows: summary.rows.clone(),
        provenance,
    }
}

pub const SUMMARY_COLUMNS: [&str; 16] = [
    "estimator",
    "parameter",
    "truth",
    "bias",
    "replicate_se",
    "sandwich_se",
    "wald",
    "coverage",
    "replicates",
    "converged",
    "pct_psm_error_only",
    "pct_om_error_only",
    "pct_psm_and_om_error",
    "pct_conditional_tm_error",
    "mean_tm_runtime_secs",
    "median_tm_runtime_secs",
];

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::sync::Arc::new(std::io::Error::other(e)))
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// One row per estimator and treatment-model parameter.
pub fn write_summary_csv<W: Write>(summary: &ReplicateSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_COLUMNS).map_err(csv_error)?;
    for row in &summary.rows {
        for (p, name) in TM_PARAMETERS.iter().enumerate() {
            w.write_record([
                row.name.clone(),
                name.to_string(),
                summary.truth[p].to_string(),
                row.bias[p].to_string(),
                row.replicate_se[p].to_string(),
                cell(row.sandwich_se.map(|s| s[p])),
                row.wald[p].to_string(),
                cell(row.coverage.map(|c| c[p])),
                row.replicates.to_string(),
                row.converged.to_string(),
                row.pct_psm_error_only.to_string(),
                row.pct_om_error_only.to_string(),
                row.pct_psm_and_om_error.to_string(),
                row.pct_conditional_tm_error.to_string(),
                cell(row.mean_runtime_secs[2]),
                cell(row.median_tm_runtime_secs),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const BENCH_COLUMNS: [&str; 7] = [
    "structure",
    "solver",
    "portion",
    "n",
    "dim",
    "pi_s",
    "median_seconds",
];

pub const SLOPE_COLUMNS: [&str; 5] = ["structure", "solver", "portion", "points", "slope"];

pub fn write_bench_csv<W: Write>(report: &BenchReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BENCH_COLUMNS).map_err(csv_error)?;
    for r in &report.rows {
        w.write_record([
            r.structure.clone(),
            r.solver.to_string(),
            r.portion.to_string(),
            r.n.to_string(),
            r.dim.to_string(),
            r.pi_s.to_string(),
            r.median_seconds.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_slopes_csv<W: Write>(report: &BenchReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SLOPE_COLUMNS).map_err(csv_error)?;
    for s in &report.slopes {
        w.write_record([
            s.structure.clone(),
            s.solver.to_string(),
            s.portion.to_string(),
            s.points.to_string(),
            s.slope.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(value: &impl Serialize, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, value)
        .map_err(|e| Error::Io(std::sync::Arc::new(e.into())))
}

//! Stacked sandwich variance for the treatment, missingness, and outcome
//! parameters, and Wald statistics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{
    ConditionalEquation, Draw, EstimatingEquation, EstimatorKind, IpwMode, OmPredictions,
    PipelineSpecs, PsmPredictions, Score, TreatmentEquation,
};
use crate::math::dense::{condition_number, symmetrize};
use crate::model::{Dataset, ParameterVector};

/// Largest tolerated condition estimate of the bread matrix.
pub const MAX_BREAD_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    /// Stacked parameter labels, e.g. `TM.beta.A`.
    pub names: Vec<String>,
    pub covariance: DMatrix<f64>,
    /// Standard errors of the stacked parameters.
    pub se: Vec<f64>,
    /// Condition estimate of the bread matrix.
    pub condition: f64,
}

impl SandwichResult {
    /// Leading `(beta0*, betaA*, alpha0*, alphaA*)` block.
    pub fn tm_covariance(&self) -> DMatrix<f64> {
        self.covariance.view((0, 0), (4, 4)).into_owned()
    }

    pub fn tm_se(&self) -> [f64; 4] {
        [self.se[0], self.se[1], self.se[2], self.se[3]]
    }
}

/// Whether the bread accounts for estimated nuisance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuisanceHandling {
    Correct,
    /// Treat the missingness and outcome parameters as known.
    Ignore,
}

/// `Gamma^{-1} Delta Gamma^{-T} / I` from averaged bread and meat, symmetrized.
pub fn sandwich_from_components(
    gamma: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    n_clusters: usize,
) -> Result<DMatrix<f64>> {
    if gamma.nrows() != gamma.ncols() || delta.shape() != gamma.shape() {
        return Err(Error::Shape(format!(
            "bread {:?} and meat {:?}",
            gamma.shape(),
            delta.shape()
        )));
    }
    let condition = condition_number(gamma);
    if !(condition <= MAX_BREAD_CONDITION) {
        return Err(Error::Inference { condition });
    }
    let inv = gamma
        .clone()
        .try_inverse()
        .ok_or(Error::Inference { condition })?;
    let cov = &inv * delta * inv.transpose() / n_clusters as f64;
    Ok(symmetrize(&cov))
}

/// Fitted parameters of each stage, as consumed by the sandwich.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEstimate {
    pub tm: ParameterVector,
    pub psm: Option<ParameterVector>,
    pub om: Option<ParameterVector>,
}

struct Stacked<'a> {
    data: &'a Dataset,
    kind: EstimatorKind,
    specs: &'a PipelineSpecs,
    floor: f64,
}

impl Stacked<'_> {
    fn tm_equation(
        &self,
        psm: Option<&ParameterVector>,
        om: Option<&ParameterVector>,
    ) -> Result<TreatmentEquation<'_>> {
        let mode = match self.kind {
            EstimatorKind::CompleteCase => return TreatmentEquation::complete_case(self.data),
            EstimatorKind::IpwG1 => IpwMode::G1,
            _ => IpwMode::G2,
        };
        let psm_spec = self
            .specs
            .psm
            .as_ref()
            .ok_or_else(|| Error::Config("missing PSM spec".into()))?;
        let psm_theta = psm.ok_or_else(|| Error::Config("missing PSM estimate".into()))?;
        let pred = PsmPredictions::new(self.data, psm_spec, psm_theta, self.floor)?;
        if self.kind == EstimatorKind::DoublyRobust {
            let om_spec = self
                .specs
                .om
                .as_ref()
                .ok_or_else(|| Error::Config("missing OM spec".into()))?;
            let om_theta = om.ok_or_else(|| Error::Config("missing OM estimate".into()))?;
            let om_pred = OmPredictions::new(self.data, om_spec, om_theta)?;
            TreatmentEquation::doubly_robust(self.data, mode, pred, om_pred)
        } else {
            TreatmentEquation::ipw(self.data, mode, pred)
        }
    }
}

fn per_cluster<E: EstimatingEquation + ?Sized>(
    eq: &E,
    theta: &ParameterVector,
) -> Result<Vec<Score>> {
    (0..eq.n_clusters())
        .map(|i| eq.cluster_score(i, theta, &Draw::full(eq.universe(i), eq.all_indices(i))))
        .collect()
}

fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

fn perturbed(theta: &ParameterVector, k: usize, delta: f64) -> ParameterVector {
    let mut flat = theta.stacked();
    flat[k] += delta;
    ParameterVector::from_stacked(&flat, theta.beta.len())
}

/// Bread block of one equation w.r.t. its own parameters: `-H` on the
/// diagonal blocks, central differences across the beta/alpha blocks.
fn own_block<F>(theta: &ParameterVector, total: &Score, mut eval: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&ParameterVector) -> Result<DVector<f64>>,
{
    let pb = theta.beta.len();
    let dim = theta.len();
    let mut block = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let h = fd_step(theta.stacked()[k]);
        let up = eval(&perturbed(theta, k, h))?;
        let dn = eval(&perturbed(theta, k, -h))?;
        let col = (up - dn) / (2.0 * h);
        block.set_column(k, &col);
    }
    block
        .view_mut((0, 0), (pb, pb))
        .copy_from(&(-&total.h_beta));
    block
        .view_mut((pb, pb), (dim - pb, dim - pb))
        .copy_from(&(-&total.h_alpha));
    Ok(block)
}

fn labels(prefix: &str, spec: &crate::model::ModelSpec) -> Vec<String> {
    let mut out: Vec<String> = spec
        .beta_names()
        .iter()
        .map(|n| format!("{prefix}.beta.{n}"))
        .collect();
    out.extend(
        spec.alpha_names()
            .iter()
            .map(|n| format!("{prefix}.alpha.{n}")),
    );
    out
}

/// Sandwich covariance of the stacked estimate `(TM; PSM; OM)`.
pub fn sandwich_variance(
    data: &Dataset,
    specs: &PipelineSpecs,
    kind: EstimatorKind,
    estimate: &StackedEstimate,
    floor: f64,
    handling: NuisanceHandling,
) -> Result<SandwichResult> {
    let st = Stacked {
        data,
        kind,
        specs,
        floor,
    };
    let use_psm = kind != EstimatorKind::CompleteCase && handling == NuisanceHandling::Correct;
    let use_om = kind == EstimatorKind::DoublyRobust && handling == NuisanceHandling::Correct;
    let psm_theta = estimate.psm.as_ref();
    let om_theta = estimate.om.as_ref();

    let tm_eq = st.tm_equation(psm_theta, om_theta)?;
    let tm_theta = &estimate.tm;
    let tm_scores = per_cluster(&tm_eq, tm_theta)?;
    let tm_total = tm_eq.total_score(tm_theta)?;

    let mut names = labels("TM", &specs.tm);
    let dt = tm_theta.len();
    let mut blocks: Vec<(usize, Vec<Score>)> = vec![(dt, tm_scores)];

    let psm_eq = if use_psm {
        let spec = specs
            .psm
            .as_ref()
            .ok_or_else(|| Error::Config("missing PSM spec".into()))?;
        names.extend(labels("PSM", spec));
        let eq = ConditionalEquation::new(data, spec)?;
        let th = psm_theta.ok_or_else(|| Error::Config("missing PSM estimate".into()))?;
        blocks.push((th.len(), per_cluster(&eq, th)?));
        Some(eq)
    } else {
        None
    };
    let om_eq = if use_om {
        let spec = specs
            .om
            .as_ref()
            .ok_or_else(|| Error::Config("missing OM spec".into()))?;
        names.extend(labels("OM", spec));
        let eq = ConditionalEquation::new(data, spec)?;
        let th = om_theta.ok_or_else(|| Error::Config("missing OM estimate".into()))?;
        blocks.push((th.len(), per_cluster(&eq, th)?));
        Some(eq)
    } else {
        None
    };

    let dim: usize = blocks.iter().map(|(d, _)| d).sum();
    let n_clusters = data.len();

    // meat
    let mut delta = DMatrix::zeros(dim, dim);
    let mut psi = DVector::zeros(dim);
    for i in 0..n_clusters {
        let mut off = 0;
        for (d, scores) in &blocks {
            psi.rows_mut(off, *d)
                .copy_from(&scores[i].stacked_gradient());
            off += d;
        }
        delta.ger(1.0, &psi, &psi, 1.0);
    }

    // bread, summed over clusters
    let mut gamma = DMatrix::zeros(dim, dim);
    let tm_block = own_block(tm_theta, &tm_total, |t| {
        Ok(tm_eq.total_score(t)?.stacked_gradient())
    })?;
    gamma.view_mut((0, 0), (dt, dt)).copy_from(&tm_block);
    let mut off = dt;
    for (eq, theta) in [(psm_eq.as_ref(), psm_theta), (om_eq.as_ref(), om_theta)] {
        let (Some(eq), Some(theta)) = (eq, theta) else {
            continue;
        };
        let total = eq.total_score(theta)?;
        let d = theta.len();
        let own = own_block(theta, &total, |t| Ok(eq.total_score(t)?.stacked_gradient()))?;
        gamma.view_mut((off, off), (d, d)).copy_from(&own);
        // treatment score against this nuisance block
        let is_psm = eq.stage() == crate::error::Stage::Psm;
        for k in 0..d {
            let h = fd_step(theta.stacked()[k]);
            let mut cols = Vec::with_capacity(2);
            for sign in [1.0, -1.0] {
                let moved = perturbed(theta, k, sign * h);
                let eq_moved = if is_psm {
                    st.tm_equation(Some(&moved), om_theta)?
                } else {
                    st.tm_equation(psm_theta, Some(&moved))?
                };
                cols.push(eq_moved.total_score(tm_theta)?.stacked_gradient());
            }
            let col = (&cols[0] - &cols[1]) / (2.0 * h);
            gamma.view_mut((0, off + k), (dt, 1)).copy_from(&col);
        }
        off += d;
    }

    let gamma_avg = &gamma / n_clusters as f64;
    let delta_avg = &delta / n_clusters as f64;
    let condition = condition_number(&gamma_avg);
    let covariance = sandwich_from_components(&gamma_avg, &delta_avg, n_clusters)?;
    let se = covariance
        .diagonal()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    Ok(SandwichResult {
        names,
        covariance,
        se,
        condition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
    /// `|W| > 2`.
    pub flagged: bool,
}

/// `W = estimate / se`, or `sqrt(R) * bias / se` over `R` replicates, where
/// `se` is then the replicate standard deviation.
pub fn wald(estimate: f64, se: f64, reps: Option<usize>) -> Result<WaldResult> {
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::Domain {
            func: "wald",
            value: se,
            domain: "(0, inf)",
        });
    }
    let scale = reps.map_or(1.0, |r| (r as f64).sqrt());
    let statistic = scale * estimate / se;
    let normal = Normal::standard();
    let p_value = 2.0 * normal.sf(statistic.abs());
    Ok(WaldResult {
        statistic,
        p_value,
        flagged: statistic.abs() > 2.0,
    })
}

//! Fisher scoring with separate mean and correlation updates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::math::dense::{condition_number, solve};
use crate::model::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringControls {
    /// Stop when `max_k |delta_k| / max(1, |theta_k|)` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest tolerated Hessian condition estimate.
    pub max_condition: f64,
    /// Step halvings tried when an update produces non-finite predictions.
    pub max_halvings: usize,
    pub record_trace: bool,
}

impl Default for ScoringControls {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            max_condition: 1e12,
            max_halvings: 5,
            record_trace: false,
        }
    }
}

/// Summed scores and expected information for the two parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub g_beta: DVector<f64>,
    pub h_beta: DMatrix<f64>,
    pub g_alpha: DVector<f64>,
    pub h_alpha: DMatrix<f64>,
}

impl Score {
    pub fn zeros(dim_beta: usize, dim_alpha: usize) -> Self {
        Self {
            g_beta: DVector::zeros(dim_beta),
            h_beta: DMatrix::zeros(dim_beta, dim_beta),
            g_alpha: DVector::zeros(dim_alpha),
            h_alpha: DMatrix::zeros(dim_alpha, dim_alpha),
        }
    }

    pub fn add(&mut self, other: &Score) {
        self.g_beta += &other.g_beta;
        self.h_beta += &other.h_beta;
        self.g_alpha += &other.g_alpha;
        self.h_alpha += &other.h_alpha;
    }

    /// Worse of the two block condition estimates.
    pub fn condition(&self) -> f64 {
        condition_number(&self.h_beta).max(condition_number(&self.h_alpha))
    }

    /// `beta` score followed by `alpha` score.
    pub fn stacked_gradient(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.g_beta.len() + self.g_alpha.len());
        out.rows_mut(0, self.g_beta.len()).copy_from(&self.g_beta);
        out.rows_mut(self.g_beta.len(), self.g_alpha.len())
            .copy_from(&self.g_alpha);
        out
    }

    /// Solves both blocks; `None` if either is singular.
    pub fn newton_step(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((
            solve(&self.h_beta, &self.g_beta)?,
            solve(&self.h_alpha, &self.g_alpha)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub stage: Stage,
    pub theta: ParameterVector,
    pub converged: bool,
    pub iterations: usize,
    pub max_update: f64,
    /// Worst Hessian condition estimate seen.
    pub condition: f64,
    pub runtime_secs: f64,
    /// Iterates `theta_0, theta_1, ...` when requested.
    #[serde(skip)]
    pub trace: Vec<ParameterVector>,
}

fn divergence(stage: Stage, reason: impl Into<String>) -> Error {
    Error::Divergence {
        stage,
        reason: reason.into(),
    }
}

pub(crate) fn step(
    theta: &ParameterVector,
    db: &DVector<f64>,
    da: &DVector<f64>,
    scale: f64,
) -> ParameterVector {
    ParameterVector {
        beta: theta
            .beta
            .iter()
            .zip(db.iter())
            .map(|(t, d)| t + scale * d)
            .collect(),
        alpha: theta
            .alpha
            .iter()
            .zip(da.iter())
            .map(|(t, d)| t + scale * d)
            .collect(),
    }
}

pub(crate) fn relative_update(
    theta: &ParameterVector,
    db: &DVector<f64>,
    da: &DVector<f64>,
    scale: f64,
) -> f64 {
    theta
        .beta
        .iter()
        .zip(db.iter())
        .chain(theta.alpha.iter().zip(da.iter()))
        .map(|(t, d)| (scale * d).abs() / t.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Iterates `beta += H_beta^{-1} G_beta`, `alpha += H_alpha^{-1} G_alpha`.
///
/// `score` returns summed scores and information at a parameter value. An
/// update whose evaluation fails (saturated means, correlation outside the
/// positive-definite range) is halved before the stage is declared divergent.
pub fn fisher_scoring<F>(
    stage: Stage,
    mut score: F,
    theta0: ParameterVector,
    controls: &ScoringControls,
) -> Result<FitResult>
where
    F: FnMut(&ParameterVector) -> Result<Score>,
{
    let start = Instant::now();
    let mut theta = theta0;
    let mut trace = Vec::new();
    if controls.record_trace {
        trace.push(theta.clone());
    }
    let mut current =
        score(&theta).map_err(|e| divergence(stage, format!("at initial value: {e}")))?;
    let mut worst = 1.0f64;
    let mut max_update = f64::INFINITY;
    for iter in 1..=controls.max_iter {
        let cond = current.condition();
        worst = worst.max(cond);
        if !(cond <= controls.max_condition) {
            return Err(divergence(
                stage,
                format!("Hessian condition {cond:e} at iteration {iter}"),
            ));
        }
        let (db, da) = current
            .newton_step()
            .ok_or_else(|| divergence(stage, format!("singular Hessian at iteration {iter}")))?;
        if db.iter().chain(da.iter()).any(|v| !v.is_finite()) {
            return Err(divergence(
                stage,
                format!("non-finite update at iteration {iter}"),
            ));
        }
        let mut scale = 1.0;
        let mut halvings = 0;
        let (next, next_score) = loop {
            let cand = step(&theta, &db, &da, scale);
            match score(&cand) {
                Ok(s)
                    if s.g_beta
                        .iter()
                        .chain(s.g_alpha.iter())
                        .all(|v| v.is_finite()) =>
                {
                    break (cand, s)
                }
                other => {
                    if halvings == controls.max_halvings {
                        let why = match other {
                            Err(e) => e.to_string(),
                            Ok(_) => "non-finite score".into(),
                        };
                        return Err(divergence(
                            stage,
                            format!("after {halvings} step halvings: {why}"),
                        ));
                    }
                    halvings += 1;
                    scale *= 0.5;
                }
            }
        };
        max_update = relative_update(&theta, &db, &da, scale);
        theta = next;
        current = next_score;
        if controls.record_trace {
            trace.push(theta.clone());
        }
        if max_update < controls.tol {
            return Ok(FitResult {
                stage,
                theta,
                converged: true,
                iterations: iter,
                max_update,
                condition: worst.max(current.condition()),
                runtime_secs: start.elapsed().as_secs_f64(),
                trace,
            });
        }
    }
    Ok(FitResult {
        stage,
        theta,
        converged: false,
        iterations: controls.max_iter,
        max_update,
        condition: worst,
        runtime_secs: start.elapsed().as_secs_f64(),
        trace,
    })
}

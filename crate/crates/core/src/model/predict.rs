//! Predictions, residual stacks, the `rho_dagger` transform, Jacobians, and the
//! block working covariance.

use nalgebra::{DMatrix, DVector};

use super::data::ClusterData;
use super::spec::{ModelSpec, ParameterVector};
use crate::error::{Error, Result};
use crate::math::{expit, pair_count, EquicorrInverse, EquicorrelatedCovariance, PairIndex};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean from a linear predictor; saturated or non-finite values are overflow errors.
#[inline]
pub(crate) fn checked_mean(eta: f64, cluster: &ClusterData) -> Result<f64> {
    let mu = expit(eta);
    if !eta.is_finite() || mu <= 0.0 || mu >= 1.0 {
        return Err(Error::Overflow {
            cluster: cluster.id().to_string(),
        });
    }
    Ok(mu)
}

#[inline]
pub(crate) fn checked_corr(eta: f64, cluster: &ClusterData) -> Result<f64> {
    let rho = eta.tanh();
    if !eta.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::Overflow {
            cluster: cluster.id().to_string(),
        });
    }
    Ok(rho)
}

/// Subject means at the observed treatment.
pub fn predict_mean(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cluster: &ClusterData,
) -> Result<Vec<f64>> {
    predict_mean_at(spec, theta, cluster, cluster.a())
}

/// Subject means with the treatment set to `a`.
pub fn predict_mean_at(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cluster: &ClusterData,
    a: f64,
) -> Result<Vec<f64>> {
    theta.check(spec)?;
    let p = spec.dim_beta();
    let mut row = vec![0.0; p];
    (0..cluster.size())
        .map(|j| {
            spec.mean_row_into(cluster, j, a, &mut row);
            checked_mean(dot(&row, &theta.beta), cluster)
        })
        .collect()
}

/// Within-cluster correlation at the observed treatment.
pub fn predict_corr(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cluster: &ClusterData,
) -> Result<f64> {
    predict_corr_at(spec, theta, cluster, cluster.a())
}

pub fn predict_corr_at(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cluster: &ClusterData,
    a: f64,
) -> Result<f64> {
    theta.check(spec)?;
    checked_corr(dot(&spec.corr_row(cluster, a), &theta.alpha), cluster)
}

/// `(y_j - pi*)(y_k - pi*) / (pi*(1 - pi*))` over lexicographic pairs; `None`
/// where either outcome is missing.
pub fn standardized_residuals(
    y: &[Option<bool>],
    pi_star: f64,
    pairs: &PairIndex,
) -> Result<Vec<Option<f64>>> {
    if !(pi_star > 0.0 && pi_star < 1.0) {
        return Err(Error::Domain {
            func: "standardized_residuals",
            value: pi_star,
            domain: "(0, 1)",
        });
    }
    if pairs.n() != y.len() {
        return Err(Error::Shape(format!(
            "pairs for n = {} against {} outcomes",
            pairs.n(),
            y.len()
        )));
    }
    let v = pi_star * (1.0 - pi_star);
    let resid = |o: Option<bool>| o.map(|b| f64::from(u8::from(b)) - pi_star);
    Ok(pairs
        .iter()
        .map(|(j, k)| match (resid(y[j]), resid(y[k])) {
            (Some(a), Some(b)) => Some(a * b / v),
            _ => None,
        })
        .collect())
}

fn check_prob(func: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            func,
            value: p,
            domain: "(0, 1)",
        })
    }
}

/// `((pi1 - pi*)(pi2 - pi*) + rho sqrt(pi1(1-pi1) pi2(1-pi2))) / (pi*(1-pi*))`.
pub fn rho_dagger(pi1: f64, pi2: f64, rho: f64, pi_star: f64) -> Result<f64> {
    check_prob("rho_dagger", pi1)?;
    check_prob("rho_dagger", pi2)?;
    check_prob("rho_dagger", pi_star)?;
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain {
            func: "rho_dagger",
            value: rho,
            domain: "(-1, 1)",
        });
    }
    let cross = (pi1 * (1.0 - pi1) * pi2 * (1.0 - pi2)).sqrt();
    Ok(((pi1 - pi_star) * (pi2 - pi_star) + rho * cross) / (pi_star * (1.0 - pi_star)))
}

/// Derivatives of the stacked (mean; pairwise correlation) vector. The two
/// blocks are kept separate since the cross blocks vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    /// `n x dim_beta`, rows `pi_j (1 - pi_j) x_j`.
    pub mean: DMatrix<f64>,
    /// `n(n-1)/2 x dim_alpha`, every row `(1 - rho^2) z`.
    pub corr: DMatrix<f64>,
}

pub fn jacobian(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cluster: &ClusterData,
) -> Result<Jacobian> {
    let a = cluster.a();
    let mu = predict_mean_at(spec, theta, cluster, a)?;
    let rho = predict_corr_at(spec, theta, cluster, a)?;
    let n = cluster.size();
    let p = spec.dim_beta();
    let design = spec.mean_design(cluster, a);
    let mean = DMatrix::from_fn(n, p, |j, k| mu[j] * (1.0 - mu[j]) * design[j * p + k]);
    let zrow = spec.corr_row(cluster, a);
    let corr = DMatrix::from_fn(pair_count(n), spec.dim_alpha(), |_, k| {
        (1.0 - rho * rho) * zrow[k]
    });
    Ok(Jacobian { mean, corr })
}

/// Block-diagonal working covariance: equicorrelated Bernoulli block for the
/// outcomes, identity for the pairwise residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingCovariance {
    upper: EquicorrelatedCovariance,
    lower_dim: usize,
}

/// Builds the working covariance from current means and the current ICC.
pub fn working_covariance(means: &[f64], icc: f64) -> Result<WorkingCovariance> {
    for &m in means {
        check_prob("working_covariance", m)?;
    }
    let u = means.iter().map(|m| m * (1.0 - m)).collect();
    Ok(WorkingCovariance {
        upper: EquicorrelatedCovariance::new(icc, u)?,
        lower_dim: pair_count(means.len()),
    })
}

impl WorkingCovariance {
    pub fn upper(&self) -> &EquicorrelatedCovariance {
        &self.upper
    }

    pub fn upper_inverse(&self) -> EquicorrInverse {
        self.upper.inverse()
    }

    pub fn dim(&self) -> usize {
        self.upper.n() + self.lower_dim
    }

    pub fn lower_dim(&self) -> usize {
        self.lower_dim
    }

    /// `V^{-1} x` for a stacked vector of length `n + n(n-1)/2`.
    pub fn apply_inverse(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "vector of length {} against {}",
                x.len(),
                self.dim()
            )));
        }
        let n = self.upper.n();
        let top = self.upper.inverse().apply(&x.rows(0, n).into_owned())?;
        let mut out = x.clone();
        out.rows_mut(0, n).copy_from(&top);
        Ok(out)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.upper.n();
        let mut out = DMatrix::identity(self.dim(), self.dim());
        out.view_mut((0, 0), (n, n)).copy_from(&self.upper.dense());
        out
    }
}

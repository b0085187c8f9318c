//! Inverse-probability weights from a fitted missingness model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{pair_count, DiagonalWeight};
use crate::model::{predict_corr, predict_mean, ClusterData, Dataset, ModelSpec, ParameterVector};

/// Default lower bound on fitted observation probabilities.
pub const POSITIVITY_FLOOR: f64 = 1e-3;

/// Pair weighting: `G1` ignores missingness correlation (`eta = pi_j pi_k`),
/// `G2` uses the fitted missingness ICC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IpwMode {
    G1,
    G2,
}

/// `P(R_1 = R_2 = 1) = pi1 pi2 + rho sqrt(pi1(1-pi1) pi2(1-pi2))`, checked
/// against the Frechet bounds.
pub fn joint_observation_prob(pi1: f64, pi2: f64, rho_r: f64) -> Result<f64> {
    for p in [pi1, pi2] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain {
                func: "joint_observation_prob",
                value: p,
                domain: "(0, 1]",
            });
        }
    }
    if !(rho_r.abs() < 1.0) {
        return Err(Error::Domain {
            func: "joint_observation_prob",
            value: rho_r,
            domain: "(-1, 1)",
        });
    }
    let eta = pi1 * pi2 + rho_r * (pi1 * (1.0 - pi1) * pi2 * (1.0 - pi2)).sqrt();
    frechet_check(pi1, pi2, eta)
}

#[inline]
pub(crate) fn frechet_check(pi1: f64, pi2: f64, eta: f64) -> Result<f64> {
    let lower = (pi1 + pi2 - 1.0).max(0.0);
    let upper = pi1.min(pi2);
    let slack = 1e-12;
    if eta < lower - slack || eta > upper + slack || eta <= 0.0 {
        return Err(Error::InfeasibleCorrelation { eta, lower, upper });
    }
    Ok(eta)
}

/// Fitted observation probabilities, their standard deviations, and the
/// missingness ICC for every cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PsmPredictions {
    pub(crate) pi: Vec<Vec<f64>>,
    pub(crate) sd: Vec<Vec<f64>>,
    pub(crate) rho: Vec<f64>,
}

impl PsmPredictions {
    pub fn new(
        data: &Dataset,
        spec: &ModelSpec,
        theta: &ParameterVector,
        floor: f64,
    ) -> Result<Self> {
        let mut pi = Vec::with_capacity(data.len());
        let mut rho = Vec::with_capacity(data.len());
        let mut offenders = Vec::new();
        let mut count = 0;
        for c in data.clusters() {
            let p = predict_mean(spec, theta, c)?;
            for (j, &v) in p.iter().enumerate() {
                if v < floor {
                    count += 1;
                    if offenders.len() < 10 {
                        offenders.push((c.id().to_string(), j));
                    }
                }
            }
            pi.push(p);
            rho.push(predict_corr(spec, theta, c)?);
        }
        if count > 0 {
            return Err(Error::Positivity {
                floor,
                count,
                subjects: offenders,
            });
        }
        let sd = pi
            .iter()
            .map(|p| p.iter().map(|v| (v * (1.0 - v)).sqrt()).collect())
            .collect();
        Ok(Self { pi, sd, rho })
    }

    /// Every subject observed with certainty.
    pub fn certain(data: &Dataset) -> Self {
        Self {
            pi: data
                .clusters()
                .iter()
                .map(|c| vec![1.0; c.size()])
                .collect(),
            sd: data
                .clusters()
                .iter()
                .map(|c| vec![0.0; c.size()])
                .collect(),
            rho: vec![0.0; data.len()],
        }
    }

    pub fn pi(&self, i: usize) -> &[f64] {
        &self.pi[i]
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.rho[i]
    }

    /// First-order weight `1 / pi_j` (the caller restricts to observed `j`).
    #[inline]
    pub fn first(&self, i: usize, j: usize) -> f64 {
        1.0 / self.pi[i][j]
    }

    /// Pair weight `1 / eta_jk` under `mode`.
    #[inline]
    pub fn pair(&self, mode: IpwMode, i: usize, j: usize, k: usize) -> Result<f64> {
        let (pj, pk) = (self.pi[i][j], self.pi[i][k]);
        match mode {
            IpwMode::G1 => Ok(1.0 / (pj * pk)),
            IpwMode::G2 => {
                let eta = pj * pk + self.rho[i] * self.sd[i][j] * self.sd[i][k];
                Ok(1.0 / frechet_check(pj, pk, eta)?)
            }
        }
    }
}

/// Stacked weight diagonal `(R_j / pi_j ; R_j R_k / eta_jk)` of one cluster.
pub fn build_ipw_matrix(
    cluster: &ClusterData,
    psm_spec: &ModelSpec,
    psm_theta: &ParameterVector,
    mode: IpwMode,
    floor: f64,
) -> Result<DiagonalWeight> {
    let pi = predict_mean(psm_spec, psm_theta, cluster)?;
    let rho = predict_corr(psm_spec, psm_theta, cluster)?;
    let low: Vec<_> = pi
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < floor)
        .map(|(j, _)| (cluster.id().to_string(), j))
        .collect();
    if !low.is_empty() {
        return Err(Error::Positivity {
            floor,
            count: low.len(),
            subjects: low.into_iter().take(10).collect(),
        });
    }
    let n = cluster.size();
    let mut w = Vec::with_capacity(n + pair_count(n));
    for (j, p) in pi.iter().enumerate() {
        w.push(if cluster.r(j) { 1.0 / p } else { 0.0 });
    }
    for j in 0..n {
        for k in j + 1..n {
            let eta = match mode {
                IpwMode::G1 => pi[j] * pi[k],
                IpwMode::G2 => joint_observation_prob(pi[j], pi[k], rho)?,
            };
            w.push(if cluster.r(j) && cluster.r(k) {
                1.0 / eta
            } else {
                0.0
            });
        }
    }
    DiagonalWeight::new(w)
}

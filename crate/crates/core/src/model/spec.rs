//! Model designs: logit mean and Fisher-z correlation linear predictors, each
//! with an intercept and a treatment term, optional covariate main effects, and
//! optional treatment-by-covariate interactions.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::data::ClusterData;
use crate::error::{Error, Result};

/// Which model a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    /// Marginal treatment model, intercept and treatment only.
    Treatment,
    /// Missingness model, fitted to the indicators `R`.
    Propensity,
    /// Conditional outcome model, fitted to observed `Y`.
    Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Covariate {
    /// Cluster-level column `k` (zero-based).
    Z(usize),
    /// Subject-level column `k` (zero-based).
    X(usize),
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Covariate::Z(k) => write!(f, "Z{}", k + 1),
            Covariate::X(k) => write!(f, "X{}", k + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    target: Target,
    mean_main: Vec<Covariate>,
    mean_interact: Vec<Covariate>,
    corr_main: Vec<usize>,
    corr_interact: Vec<usize>,
}

impl ModelSpec {
    /// `logit(pi*) = b0 + bA A`, `atanh(rho*) = a0 + aA A`.
    pub fn canonical_tm() -> Self {
        Self {
            target: Target::Treatment,
            mean_main: Vec::new(),
            mean_interact: Vec::new(),
            corr_main: Vec::new(),
            corr_interact: Vec::new(),
        }
    }

    pub fn conditional(
        target: Target,
        mean_main: Vec<Covariate>,
        mean_interact: Vec<Covariate>,
        corr_main: Vec<usize>,
        corr_interact: Vec<usize>,
    ) -> Result<Self> {
        if target == Target::Treatment {
            return Err(Error::Config(
                "the treatment model has intercept and treatment terms only".into(),
            ));
        }
        Ok(Self {
            target,
            mean_main,
            mean_interact,
            corr_main,
            corr_interact,
        })
    }

    /// Every covariate as a main effect and interacted with treatment; the
    /// correlation uses every cluster covariate likewise.
    pub fn saturated(target: Target, q: usize, m: usize) -> Result<Self> {
        let cov: Vec<Covariate> = (0..q)
            .map(Covariate::Z)
            .chain((0..m).map(Covariate::X))
            .collect();
        Self::conditional(target, cov.clone(), cov, (0..q).collect(), (0..q).collect())
    }

    /// Main effects only, no treatment interactions.
    pub fn main_effects(target: Target, q: usize, m: usize) -> Result<Self> {
        let cov: Vec<Covariate> = (0..q)
            .map(Covariate::Z)
            .chain((0..m).map(Covariate::X))
            .collect();
        Self::conditional(target, cov, Vec::new(), (0..q).collect(), Vec::new())
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn mean_main(&self) -> &[Covariate] {
        &self.mean_main
    }

    pub fn mean_interact(&self) -> &[Covariate] {
        &self.mean_interact
    }

    pub fn corr_main(&self) -> &[usize] {
        &self.corr_main
    }

    pub fn corr_interact(&self) -> &[usize] {
        &self.corr_interact
    }

    pub fn dim_beta(&self) -> usize {
        2 + self.mean_main.len() + self.mean_interact.len()
    }

    pub fn dim_alpha(&self) -> usize {
        2 + self.corr_main.len() + self.corr_interact.len()
    }

    /// Checks column references against `q` cluster and `m` subject covariates.
    pub fn validate(&self, q: usize, m: usize) -> Result<()> {
        for c in self.mean_main.iter().chain(&self.mean_interact) {
            let ok = match *c {
                Covariate::Z(k) => k < q,
                Covariate::X(k) => k < m,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "covariate {c} not present in the data"
                )));
            }
        }
        for &k in self.corr_main.iter().chain(&self.corr_interact) {
            if k >= q {
                return Err(Error::Config(format!(
                    "cluster covariate Z{} not present in the data",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn beta_names(&self) -> Vec<String> {
        let mut names = vec!["(Intercept)".to_string(), "A".to_string()];
        names.extend(self.mean_main.iter().map(|c| c.to_string()));
        names.extend(self.mean_interact.iter().map(|c| format!("A:{c}")));
        names
    }

    pub fn alpha_names(&self) -> Vec<String> {
        let mut names = vec!["(Intercept)".to_string(), "A".to_string()];
        names.extend(self.corr_main.iter().map(|k| format!("Z{}", k + 1)));
        names.extend(self.corr_interact.iter().map(|k| format!("A:Z{}", k + 1)));
        names
    }

    #[inline]
    fn covariate_value(cluster: &ClusterData, j: usize, c: Covariate) -> f64 {
        match c {
            Covariate::Z(k) => cluster.z()[k],
            Covariate::X(k) => cluster.x_row(j)[k],
        }
    }

    /// Mean design row of subject `j` with the treatment set to `a`.
    pub fn mean_row_into(&self, cluster: &ClusterData, j: usize, a: f64, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = a;
        let mut p = 2;
        for &c in &self.mean_main {
            out[p] = Self::covariate_value(cluster, j, c);
            p += 1;
        }
        for &c in &self.mean_interact {
            out[p] = a * Self::covariate_value(cluster, j, c);
            p += 1;
        }
    }

    /// Row-major `n x dim_beta` mean design with the treatment set to `a`.
    pub fn mean_design(&self, cluster: &ClusterData, a: f64) -> Vec<f64> {
        let p = self.dim_beta();
        let mut out = vec![0.0; cluster.size() * p];
        for j in 0..cluster.size() {
            self.mean_row_into(cluster, j, a, &mut out[j * p..(j + 1) * p]);
        }
        out
    }

    /// Correlation design row (constant within the cluster) with the treatment set to `a`.
    pub fn corr_row(&self, cluster: &ClusterData, a: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim_alpha());
        out.push(1.0);
        out.push(a);
        out.extend(self.corr_main.iter().map(|&k| cluster.z()[k]));
        out.extend(self.corr_interact.iter().map(|&k| a * cluster.z()[k]));
        out
    }
}

/// Coefficients of one model: `beta` on the logit scale, `alpha` on the Fisher-z scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl ParameterVector {
    pub fn new(beta: Vec<f64>, alpha: Vec<f64>) -> Self {
        Self { beta, alpha }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            beta: vec![0.0; spec.dim_beta()],
            alpha: vec![0.0; spec.dim_alpha()],
        }
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.dim_beta() || self.alpha.len() != spec.dim_alpha() {
            return Err(Error::Shape(format!(
                "parameters ({}, {}) against spec ({}, {})",
                self.beta.len(),
                self.alpha.len(),
                spec.dim_beta(),
                spec.dim_alpha()
            )));
        }
        if self.beta.iter().chain(&self.alpha).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().chain(&self.alpha).all(|v| v.is_finite())
    }

    /// `beta` followed by `alpha`.
    pub fn stacked(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.alpha).copied().collect()
    }

    pub fn from_stacked(values: &[f64], dim_beta: usize) -> Self {
        Self {
            beta: values[..dim_beta].to_vec(),
            alpha: values[dim_beta..].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len() + self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_dims() {
        let s = ModelSpec::saturated(Target::Outcome, 1, 3).unwrap();
        assert_eq!(s.dim_beta(), 10);
        assert_eq!(s.dim_alpha(), 4);
        assert_eq!(s.beta_names()[9], "A:X3");
        assert_eq!(s.alpha_names()[3], "A:Z1");
        let mis = ModelSpec::main_effects(Target::Propensity, 1, 3).unwrap();
        assert_eq!((mis.dim_beta(), mis.dim_alpha()), (6, 3));
        assert_eq!(ModelSpec::canonical_tm().dim_beta(), 2);
    }

    #[test]
    fn validation() {
        let s = ModelSpec::conditional(
            Target::Outcome,
            vec![Covariate::X(3)],
            vec![],
            vec![],
            vec![],
        )
        .unwrap();
        assert!(s.validate(1, 3).is_err());
        assert!(s.validate(1, 4).is_ok());
        assert!(ModelSpec::conditional(Target::Treatment, vec![], vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn design_rows() {
        let c = ClusterData::new(
            "c",
            true,
            vec![2.0],
            vec![3.0, 5.0],
            1,
            vec![Some(true), None],
        )
        .unwrap();
        let s = ModelSpec::saturated(Target::Outcome, 1, 1).unwrap();
        assert_eq!(
            s.mean_design(&c, 1.0),
            vec![1.0, 1.0, 2.0, 3.0, 2.0, 3.0, 1.0, 1.0, 2.0, 5.0, 2.0, 5.0]
        );
        assert_eq!(s.mean_design(&c, 0.0)[6..], [1.0, 0.0, 2.0, 5.0, 0.0, 0.0]);
        assert_eq!(s.corr_row(&c, 1.0), vec![1.0, 1.0, 2.0, 2.0]);
    }
}

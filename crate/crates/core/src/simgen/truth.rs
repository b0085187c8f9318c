//! True marginal treatment-model parameters by deterministic quadrature over
//! the covariate laws.

use serde::{Deserialize, Serialize};

use super::config::{CovariateLaw, GenerationConfig, Mechanism, Method};
use super::quadrature::{normal_mean_rule, uniform_mean_rule, Rule};
use crate::error::{Error, Result};
use crate::math::{expit, fisher_z, logit};

/// Nodes per continuous dimension.
pub const QUADRATURE_NODES: usize = 64;
/// Absolute accuracy target on each parameter.
pub const QUADRATURE_TARGET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValues {
    pub beta0: f64,
    pub beta_a: f64,
    pub alpha0: f64,
    pub alpha_a: f64,
    /// Largest change against the half-resolution rule.
    pub accuracy: f64,
}

impl TruthValues {
    pub fn as_array(&self) -> [f64; 4] {
        [self.beta0, self.beta_a, self.alpha0, self.alpha_a]
    }

    /// Marginal means `(control, treated)`.
    pub fn means(&self) -> (f64, f64) {
        (expit(self.beta0), expit(self.beta0 + self.beta_a))
    }

    /// ICCs `(control, treated)`.
    pub fn iccs(&self) -> (f64, f64) {
        (self.alpha0.tanh(), (self.alpha0 + self.alpha_a).tanh())
    }
}

fn law_rule(law: &CovariateLaw, nodes: usize) -> Rule {
    match *law {
        CovariateLaw::Uniform { lo, hi } => uniform_mean_rule(lo, hi, nodes),
        CovariateLaw::DiscreteUniform { lo, hi } => {
            let k = (hi - lo + 1) as f64;
            Rule {
                nodes: (lo..=hi).map(|v| v as f64).collect(),
                weights: vec![1.0 / k; (hi - lo + 1) as usize],
            }
        }
    }
}

/// Tensor product over subject covariates flattened to `(x'b, weight)`.
fn subject_grid(laws: &[CovariateLaw], slopes: &[f64], nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lin = vec![0.0];
    let mut wts = vec![1.0];
    for (law, &b) in laws.iter().zip(slopes) {
        let rule = law_rule(law, nodes);
        let mut nl = Vec::with_capacity(lin.len() * rule.len());
        let mut nw = Vec::with_capacity(lin.len() * rule.len());
        for (l, w) in lin.iter().zip(&wts) {
            for (x, v) in rule.nodes.iter().zip(&rule.weights) {
                nl.push(l + b * x);
                nw.push(w * v);
            }
        }
        lin = nl;
        wts = nw;
    }
    (lin, wts)
}

/// Tensor product over cluster covariates as `(z values, weight)`.
fn cluster_grid(laws: &[CovariateLaw], nodes: usize) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for law in laws {
        let rule = law_rule(law, nodes);
        out = out
            .iter()
            .flat_map(|(z, w)| {
                rule.nodes.iter().zip(&rule.weights).map(move |(x, v)| {
                    let mut z2 = z.clone();
                    z2.push(*x);
                    (z2, w * v)
                })
            })
            .collect();
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Marginal mean and `E[rho_dagger]` in arm `a`.
fn arm_moments(
    config: &GenerationConfig,
    mech: &Mechanism,
    a: f64,
    nodes: usize,
) -> Result<(f64, f64)> {
    let c = &mech.coefficients;
    let bx: Vec<f64> =
        c.x.iter()
            .zip(&c.x_treatment)
            .map(|(m, i)| m + a * i)
            .collect();
    let bz: Vec<f64> =
        c.z.iter()
            .zip(&c.z_treatment)
            .map(|(m, i)| m + a * i)
            .collect();
    let az: Vec<f64> = c
        .alpha_z
        .iter()
        .zip(&c.alpha_z_treatment)
        .map(|(m, i)| m + a * i)
        .collect();
    let (lin, wts) = subject_grid(&config.x_laws, &bx, nodes);
    let zs = cluster_grid(&config.z_laws, nodes);

    // per z: E_x[pi], and the pair moment E_{x,x'}[E(Y Y' | z, x, x')]
    let mut m1 = Vec::with_capacity(zs.len());
    let mut m11 = Vec::with_capacity(zs.len());
    for (z, _) in &zs {
        let base = c.intercept + a * c.treatment + dot(&bz, z);
        match mech.method {
            Method::Parzen => {
                let rho = (c.alpha_intercept + a * c.alpha_treatment + dot(&az, z)).tanh();
                let (mut mean, mut sd) = (0.0, 0.0);
                for (l, w) in lin.iter().zip(&wts) {
                    let p = expit(base + l);
                    mean += w * p;
                    sd += w * (p * (1.0 - p)).sqrt();
                }
                m1.push(mean);
                m11.push(mean * mean + rho * sd * sd);
            }
            Method::RandomIntercept {
                sd_control,
                sd_treatment_increment,
            } => {
                let sigma = sd_control + a * sd_treatment_increment;
                let xi = if sigma == 0.0 {
                    Rule {
                        nodes: vec![0.0],
                        weights: vec![1.0],
                    }
                } else {
                    normal_mean_rule(sigma, nodes)
                };
                let (mut mean, mut joint) = (0.0, 0.0);
                for (t, v) in xi.nodes.iter().zip(&xi.weights) {
                    let mx: f64 = lin
                        .iter()
                        .zip(&wts)
                        .map(|(l, w)| w * expit(base + t + l))
                        .sum();
                    mean += v * mx;
                    joint += v * mx * mx;
                }
                m1.push(mean);
                m11.push(joint);
            }
        }
    }
    let mu: f64 = zs.iter().zip(&m1).map(|((_, w), m)| w * m).sum();
    // E[(Y - mu)(Y' - mu)] / (mu (1 - mu))
    let cross: f64 = zs
        .iter()
        .zip(m1.iter().zip(&m11))
        .map(|((_, w), (m, mm))| w * (mm - 2.0 * mu * m + mu * mu))
        .sum();
    Ok((mu, cross / (mu * (1.0 - mu))))
}

fn truth_at(config: &GenerationConfig, nodes: usize) -> Result<[f64; 4]> {
    let (mu0, r0) = arm_moments(config, &config.outcome, 0.0, nodes)?;
    let (mu1, r1) = arm_moments(config, &config.outcome, 1.0, nodes)?;
    let (b0, b1) = (logit(mu0)?, logit(mu1)?);
    let (a0, a1) = (fisher_z(r0)?, fisher_z(r1)?);
    Ok([b0, b1 - b0, a0, a1 - a0])
}

/// Canonical treatment-model parameters of the outcome process in `config`.
pub fn marginal_truth(config: &GenerationConfig) -> Result<TruthValues> {
    config.validate()?;
    let fine = truth_at(config, QUADRATURE_NODES)?;
    let coarse = truth_at(config, QUADRATURE_NODES / 2)?;
    let accuracy = fine
        .iter()
        .zip(&coarse)
        .map(|(f, c)| (f - c).abs())
        .fold(0.0, f64::max);
    if !(accuracy <= QUADRATURE_TARGET) {
        return Err(Error::Accuracy {
            achieved: accuracy,
            target: QUADRATURE_TARGET,
            estimate: fine,
        });
    }
    Ok(TruthValues {
        beta0: fine[0],
        beta_a: fine[1],
        alpha0: fine[2],
        alpha_a: fine[3],
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_covariate_effects_is_trivial() {
        let mut c = GenerationConfig::default();
        c.outcome.coefficients = c.outcome.coefficients.without_covariates();
        let t = marginal_truth(&c).unwrap();
        let k = &c.outcome.coefficients;
        assert!((t.beta0 - k.intercept).abs() < 1e-12);
        assert!((t.beta_a - k.treatment).abs() < 1e-12);
        assert!((t.alpha0 - k.alpha_intercept).abs() < 1e-12);
        assert!((t.alpha_a - k.alpha_treatment).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_intercept_matches_parzen_independence() {
        // without covariates and random effect, rho_dagger is zero
        let mut c = GenerationConfig::default();
        c.outcome.coefficients = c.outcome.coefficients.without_covariates();
        c.outcome.method = Method::RandomIntercept {
            sd_control: 0.0,
            sd_treatment_increment: 0.0,
        };
        let t = marginal_truth(&c).unwrap();
        assert!(t.alpha0.abs() < 1e-12 && t.alpha_a.abs() < 1e-12);
        assert!((t.beta0 - 0.11).abs() < 1e-12);
    }
}

//! Run configuration, read from TOML.
//!
//! Every key is optional; omitted keys take the simulation-design defaults.
//!
//! ```toml
//! seed = 7
//! threads = 8
//! output = "out"
//!
//! [generation]          # n_clusters, size_min, size_max, p_a, z_laws, x_laws,
//! n_clusters = 500      # outcome, missingness
//!
//! [sampling]            # pi_s, omega_nuisance, omega_tm, gamma, chains, ...
//! pi_s = 0.3
//!
//! [controls]            # tol, max_iter, max_condition, max_halvings
//!
//! [simulate]
//! replicates = 200
//! estimators = ["complete-case", "ipw-g1", "ipw-g2", "doubly-robust"]
//! solver = "deterministic"   # or "stochastic", "parallel-stochastic"
//!
//! [fit]
//! input = "data.csv"
//! estimator = "doubly-robust"
//! psm = "saturated"          # "main-effects", "intercept", or a table
//! om = { mean = ["z1", "x1"], mean_treatment = ["x1"], corr = ["z1"] }
//!
//! [bench]
//! sizes = [50, 100, 200, 400]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, ScoringControls, SolverKind};
use crate::model::{Covariate, ModelSpec, Target};
use crate::simgen::GenerationConfig;
use crate::stochastic::SamplingPlan;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub generation: GenerationConfig,
    pub sampling: SamplingPlan,
    pub controls: ScoringControls,
    pub simulate: SimulateSection,
    pub fit: FitSection,
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub replicates: usize,
    pub estimators: Vec<EstimatorKind>,
    pub solver: SolverKind,
    /// Add DR under the interaction-free missingness model.
    pub misspecified_dr: bool,
    pub sandwich: bool,
    /// Generate without missingness.
    pub complete_data: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            replicates: 200,
            estimators: EstimatorKind::ALL.to_vec(),
            solver: SolverKind::Deterministic,
            misspecified_dr: true,
            sandwich: true,
            complete_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub input: Option<PathBuf>,
    pub estimator: EstimatorKind,
    pub solver: SolverKind,
    /// Treatment probability; the empirical share of treated clusters if absent.
    pub p_a: Option<f64>,
    pub sandwich: bool,
    pub psm: StageSpec,
    pub om: StageSpec,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            input: None,
            estimator: EstimatorKind::DoublyRobust,
            solver: SolverKind::Deterministic,
            p_a: None,
            sandwich: true,
            psm: StageSpec::Preset(Preset::Saturated),
            om: StageSpec::Preset(Preset::Saturated),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Every covariate, main effect and treatment interaction.
    Saturated,
    MainEffects,
    Intercept,
}

/// Covariates named by column (`z1`, `x2`, ...).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomSpec {
    pub mean: Vec<String>,
    pub mean_treatment: Vec<String>,
    /// Cluster columns only.
    pub corr: Vec<String>,
    pub corr_treatment: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageSpec {
    Preset(Preset),
    Custom(CustomSpec),
}

fn column(name: &str, n_z: usize, n_x: usize) -> Result<Covariate> {
    let bad = || {
        Error::Config(format!(
            "column '{name}' is not in the input (z1..z{n_z}, x1..x{n_x})"
        ))
    };
    let (kind, rest) = name.split_at_checked(1).ok_or_else(bad)?;
    let k: usize = rest.parse().map_err(|_| bad())?;
    match kind {
        "z" if (1..=n_z).contains(&k) => Ok(Covariate::Z(k - 1)),
        "x" if (1..=n_x).contains(&k) => Ok(Covariate::X(k - 1)),
        _ => Err(bad()),
    }
}

impl StageSpec {
    /// Resolves against the columns present in the data.
    pub fn resolve(&self, target: Target, n_z: usize, n_x: usize) -> Result<ModelSpec> {
        match self {
            StageSpec::Preset(Preset::Saturated) => ModelSpec::saturated(target, n_z, n_x),
            StageSpec::Preset(Preset::MainEffects) => ModelSpec::main_effects(target, n_z, n_x),
            StageSpec::Preset(Preset::Intercept) => {
                ModelSpec::conditional(target, vec![], vec![], vec![], vec![])
            }
            StageSpec::Custom(c) => {
                let covs = |names: &[String]| {
                    names
                        .iter()
                        .map(|n| column(n, n_z, n_x))
                        .collect::<Result<Vec<_>>>()
                };
                let zs = |names: &[String]| {
                    covs(names)?
                        .into_iter()
                        .map(|c| match c {
                            Covariate::Z(k) => Ok(k),
                            Covariate::X(_) => Err(Error::Config(format!(
                                "correlation terms must be cluster columns, got {c}"
                            ))),
                        })
                        .collect::<Result<Vec<_>>>()
                };
                ModelSpec::conditional(
                    target,
                    covs(&c.mean)?,
                    covs(&c.mean_treatment)?,
                    zs(&c.corr)?,
                    zs(&c.corr_treatment)?,
                )
            }
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Seed shared by generation and sampling unless given per section.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.generation.seed = seed;
            self.sampling.seed = seed;
            self.bench.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.generation.n_clusters, 2000);
        assert_eq!(c.sampling.pi_s, 0.30);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_toml(
            "seed = 9\n[generation]\nn_clusters = 40\n[fit]\nestimator = \"ipw-g2\"\npsm = \"main-effects\"\nom = { mean = [\"x1\"], corr = [\"z1\"] }\n",
        )
        .unwrap();
        assert_eq!(c.generation.n_clusters, 40);
        assert_eq!(c.generation.size_min, 80);
        assert_eq!(c.fit.estimator, EstimatorKind::IpwG2);
        assert_eq!(c.fit.psm, StageSpec::Preset(Preset::MainEffects));
        let om = c.fit.om.resolve(Target::Outcome, 1, 2).unwrap();
        assert_eq!(om.beta_names(), ["(Intercept)", "A", "X1"]);
        assert_eq!(om.alpha_names(), ["(Intercept)", "A", "Z1"]);
    }

    #[test]
    fn unknown_keys_and_columns_are_config_errors() {
        assert!(matches!(
            RunConfig::from_toml("[simulate]\nreplicate = 3\n"),
            Err(Error::Config(_))
        ));
        let spec = StageSpec::Custom(CustomSpec {
            mean: vec!["x4".into()],
            ..CustomSpec::default()
        });
        assert!(matches!(
            spec.resolve(Target::Outcome, 1, 3),
            Err(Error::Config(_))
        ));
        let spec = StageSpec::Custom(CustomSpec {
            corr: vec!["x1".into()],
            ..CustomSpec::default()
        });
        assert!(spec.resolve(Target::Outcome, 1, 3).is_err());
    }
}

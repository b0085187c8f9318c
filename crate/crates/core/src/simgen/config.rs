//! Generation settings and the default simulation design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParameterVector, Target};

/// Marginal law of one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum CovariateLaw {
    /// Continuous uniform on `(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Discrete uniform on `{lo, lo + 1, ..., hi}`.
    DiscreteUniform { lo: i64, hi: i64 },
}

impl CovariateLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovariateLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            CovariateLaw::DiscreteUniform { lo, hi } => lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid covariate law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            CovariateLaw::DiscreteUniform { lo, hi } => 0.5 * (lo + hi) as f64,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            CovariateLaw::Uniform { lo, hi } => (lo, hi),
            CovariateLaw::DiscreteUniform { lo, hi } => (lo as f64, hi as f64),
        }
    }
}

/// Generating coefficients of one binary process.
///
/// Mean: `(b0 + b0A A) + (bZ + bZA A)'Z + (bX + bXA A)'X`.
/// Correlation (Fisher-z): `(a0 + a0A A) + (aZ + aZA A)'Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub intercept: f64,
    pub treatment: f64,
    pub z: Vec<f64>,
    pub z_treatment: Vec<f64>,
    pub x: Vec<f64>,
    pub x_treatment: Vec<f64>,
    pub alpha_intercept: f64,
    pub alpha_treatment: f64,
    pub alpha_z: Vec<f64>,
    pub alpha_z_treatment: Vec<f64>,
}

impl Coefficients {
    /// Simulation design coefficients: one cluster and three subject covariates.
    pub fn design_default() -> Self {
        Self {
            intercept: 0.11,
            treatment: 0.67,
            z: vec![0.009],
            z_treatment: vec![-0.018],
            x: vec![-0.007, -0.020, -0.040],
            x_treatment: vec![0.012, 0.030, 0.060],
            alpha_intercept: -0.32,
            alpha_treatment: 0.96,
            alpha_z: vec![0.004],
            alpha_z_treatment: vec![-0.008],
        }
    }

    /// All covariate effects zero.
    pub fn without_covariates(&self) -> Self {
        Self {
            z: vec![0.0; self.z.len()],
            z_treatment: vec![0.0; self.z.len()],
            x: vec![0.0; self.x.len()],
            x_treatment: vec![0.0; self.x.len()],
            alpha_z: vec![0.0; self.z.len()],
            alpha_z_treatment: vec![0.0; self.z.len()],
            ..self.clone()
        }
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.z.len();
        let m = self.x.len();
        if self.z_treatment.len() != q
            || self.alpha_z.len() != q
            || self.alpha_z_treatment.len() != q
        {
            return Err(Error::Config(
                "cluster covariate coefficient lengths differ".into(),
            ));
        }
        if self.x_treatment.len() != m {
            return Err(Error::Config(
                "subject covariate coefficient lengths differ".into(),
            ));
        }
        Ok(())
    }

    /// The same model as a saturated conditional spec and its parameters.
    pub fn to_model(&self, target: Target) -> Result<(ModelSpec, ParameterVector)> {
        self.validate()?;
        let spec = ModelSpec::saturated(target, self.n_z(), self.n_x())?;
        let mut beta = vec![self.intercept, self.treatment];
        beta.extend(&self.z);
        beta.extend(&self.x);
        beta.extend(&self.z_treatment);
        beta.extend(&self.x_treatment);
        let mut alpha = vec![self.alpha_intercept, self.alpha_treatment];
        alpha.extend(&self.alpha_z);
        alpha.extend(&self.alpha_z_treatment);
        Ok((spec, ParameterVector::new(beta, alpha)))
    }
}

/// How a binary process is drawn given its conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Scaled-Beta cluster effect added on the probability scale; exact
    /// nominal means and equicorrelation.
    Parzen,
    /// Normal intercept on the logit scale with standard deviation
    /// `sd_control + sd_treatment_increment * A`.
    RandomIntercept {
        sd_control: f64,
        sd_treatment_increment: f64,
    },
}

impl Method {
    pub fn random_intercept() -> Self {
        Method::RandomIntercept {
            sd_control: 1.0 / 3.0,
            sd_treatment_increment: 0.5,
        }
    }
}

/// One binary process (outcome or missingness indicator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    #[serde(flatten)]
    pub method: Method,
    pub coefficients: Coefficients,
}

impl Mechanism {
    pub fn parzen_default() -> Self {
        Self {
            method: Method::Parzen,
            coefficients: Coefficients::design_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_clusters: usize,
    /// Cluster sizes are discrete uniform on `[size_min, size_max]`.
    pub size_min: usize,
    pub size_max: usize,
    pub p_a: f64,
    pub seed: u64,
    pub z_laws: Vec<CovariateLaw>,
    pub x_laws: Vec<CovariateLaw>,
    pub outcome: Mechanism,
    /// `None` leaves every outcome observed.
    pub missingness: Option<Mechanism>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_clusters: 2000,
            size_min: 80,
            size_max: 140,
            p_a: 0.5,
            seed: 1,
            z_laws: vec![CovariateLaw::DiscreteUniform { lo: 81, hi: 140 }],
            x_laws: vec![
                CovariateLaw::Uniform { lo: 20.0, hi: 60.0 },
                CovariateLaw::DiscreteUniform { lo: 1, hi: 9 },
                CovariateLaw::Uniform { lo: 4.0, hi: 25.0 },
            ],
            outcome: Mechanism::parzen_default(),
            missingness: Some(Mechanism::parzen_default()),
        }
    }
}

impl GenerationConfig {
    /// Covariate laws exactly as tabulated: `X2 ~ U(1, 10)` continuous and
    /// `Z ~ U{80, 140}`. These do not reproduce the published true values.
    pub fn printed_laws(mut self) -> Self {
        self.z_laws = vec![CovariateLaw::DiscreteUniform { lo: 80, hi: 140 }];
        self.x_laws = vec![
            CovariateLaw::Uniform { lo: 20.0, hi: 60.0 },
            CovariateLaw::Uniform { lo: 1.0, hi: 10.0 },
            CovariateLaw::Uniform { lo: 4.0, hi: 25.0 },
        ];
        self
    }

    /// Random-intercept outcomes, Parzen missingness.
    pub fn random_intercept_outcome(mut self) -> Self {
        self.outcome.method = Method::random_intercept();
        self
    }

    pub fn with_scale(mut self, n_clusters: usize, size_min: usize, size_max: usize) -> Self {
        self.n_clusters = n_clusters;
        self.size_min = size_min;
        self.size_max = size_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::Config("n_clusters must be positive".into()));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::Config(format!(
                "cluster size range [{}, {}] is invalid",
                self.size_min, self.size_max
            )));
        }
        if !(self.p_a > 0.0 && self.p_a < 1.0) {
            return Err(Error::Config(format!(
                "p_a = {} must lie in (0, 1)",
                self.p_a
            )));
        }
        for law in self.z_laws.iter().chain(&self.x_laws) {
            law.validate()?;
        }
        for mech in std::iter::once(&self.outcome).chain(self.missingness.as_ref()) {
            let c = &mech.coefficients;
            c.validate()?;
            if c.n_z() != self.z_laws.len() || c.n_x() != self.x_laws.len() {
                return Err(Error::Config(format!(
                    "coefficients cover {} cluster and {} subject covariates, laws cover {} and {}",
                    c.n_z(),
                    c.n_x(),
                    self.z_laws.len(),
                    self.x_laws.len()
                )));
            }
            if let Method::RandomIntercept {
                sd_control,
                sd_treatment_increment,
            } = mech.method
            {
                if !(sd_control >= 0.0 && sd_control + sd_treatment_increment >= 0.0) {
                    return Err(Error::Config(
                        "random-intercept standard deviation must be non-negative".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

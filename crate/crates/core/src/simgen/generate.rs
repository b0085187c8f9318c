//! Covariates, Parzen and random-intercept binary processes, and whole
//! simulated datasets.

use rand::{Rng, RngExt};
use rand_distr::{Beta, Distribution, Normal};

use super::config::{CovariateLaw, GenerationConfig, Mechanism, Method};
use crate::error::{Error, Result};
use crate::math::expit;
use crate::model::{predict_corr, predict_mean, ClusterData, Dataset, Target};
use crate::stochastic::stream;

/// RNG purposes within a replicate stream.
const COVARIATES: u64 = 10;
const OUTCOME: u64 = 11;
const MISSINGNESS: u64 = 12;

fn draw_law<R: Rng + ?Sized>(law: &CovariateLaw, rng: &mut R) -> f64 {
    match *law {
        CovariateLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
        CovariateLaw::DiscreteUniform { lo, hi } => rng.random_range(lo..=hi) as f64,
    }
}

/// Treatment, cluster sizes, and covariates; every outcome is left missing.
pub fn generate_covariates<R: Rng + ?Sized>(
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<Dataset> {
    config.validate()?;
    let m = config.x_laws.len();
    let clusters = (0..config.n_clusters)
        .map(|i| {
            let n = rng.random_range(config.size_min..=config.size_max);
            let treated = rng.random_bool(config.p_a);
            let z = config.z_laws.iter().map(|l| draw_law(l, rng)).collect();
            let mut x = Vec::with_capacity(n * m);
            for _ in 0..n {
                x.extend(config.x_laws.iter().map(|l| draw_law(l, rng)));
            }
            ClusterData::new(i.to_string(), treated, z, x, m, vec![None; n])
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(clusters)
}

/// Support `(L, U)` of the Parzen cluster effect.
pub fn parzen_bounds(pi: &[f64]) -> (f64, f64) {
    let lo = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (-(lo / (1.0 - lo)).sqrt(), ((1.0 - hi) / hi).sqrt())
}

/// Beta shapes giving a cluster effect with mean zero and variance `rho`.
pub fn parzen_shapes(lower: f64, upper: f64, rho: f64) -> (f64, f64) {
    let slack = -upper * lower - rho;
    let span = upper - lower;
    (-lower * slack / (span * rho), upper * slack / (span * rho))
}

/// Equicorrelated Bernoulli vector with means `pi` and correlation `rho`.
/// `cluster` only labels errors.
pub fn parzen_generate<R: Rng + ?Sized>(
    cluster: usize,
    pi: &[f64],
    rho: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let (lower, upper) = parzen_bounds(pi);
    let slack = -upper * lower - rho;
    if slack < 0.0 || rho < 0.0 {
        return Err(Error::Feasibility {
            cluster,
            slack: slack.min(rho),
        });
    }
    let xi = if rho == 0.0 {
        0.0
    } else if slack < 1e-12 {
        // two-point limit of the Beta law
        if rng.random_bool(upper / (upper - lower)) {
            lower
        } else {
            upper
        }
    } else {
        let (a, b) = parzen_shapes(lower, upper, rho);
        let beta = Beta::new(a, b).map_err(|e| Error::Sampling(format!("Beta({a}, {b}): {e}")))?;
        lower + (upper - lower) * beta.sample(rng)
    };
    Ok(pi
        .iter()
        .map(|&p| {
            let q = (p + xi * (p * (1.0 - p)).sqrt()).clamp(0.0, 1.0);
            rng.random_bool(q)
        })
        .collect())
}

/// `logit p = xi + logit pi` with `xi ~ N(0, sd^2)` shared by the cluster.
pub fn random_intercept_generate<R: Rng + ?Sized>(
    pi: &[f64],
    sd: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let xi = if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd)
            .map_err(|e| Error::Sampling(format!("N(0, {sd}^2): {e}")))?
            .sample(rng)
    };
    Ok(pi
        .iter()
        .map(|&p| rng.random_bool(expit(xi + (p / (1.0 - p)).ln())))
        .collect())
}

/// Draws one binary vector per cluster from covariates and treatment alone.
pub fn generate_binary<R: Rng + ?Sized>(
    data: &Dataset,
    mechanism: &Mechanism,
    rng: &mut R,
) -> Result<Vec<Vec<bool>>> {
    let (spec, theta) = mechanism.coefficients.to_model(Target::Outcome)?;
    data.clusters()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let pi = predict_mean(&spec, &theta, c)?;
            match mechanism.method {
                Method::Parzen => parzen_generate(i, &pi, predict_corr(&spec, &theta, c)?, rng),
                Method::RandomIntercept {
                    sd_control,
                    sd_treatment_increment,
                } => {
                    random_intercept_generate(&pi, sd_control + sd_treatment_increment * c.a(), rng)
                }
            }
        })
        .collect()
}

/// Complete simulated dataset for one replicate. Covariates, outcomes, and
/// missingness use separate substreams of `(config.seed, replicate)`.
pub fn generate_dataset(config: &GenerationConfig, replicate: u64) -> Result<Dataset> {
    let skeleton = generate_covariates(config, &mut stream(config.seed, replicate, COVARIATES))?;
    let y = generate_binary(
        &skeleton,
        &config.outcome,
        &mut stream(config.seed, replicate, OUTCOME),
    )?;
    let r = match &config.missingness {
        Some(mech) => Some(generate_binary(
            &skeleton,
            mech,
            &mut stream(config.seed, replicate, MISSINGNESS),
        )?),
        None => None,
    };
    let clusters = skeleton
        .clusters()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let obs = y[i]
                .iter()
                .enumerate()
                .map(|(j, &v)| match &r {
                    Some(r) if !r[i][j] => None,
                    _ => Some(v),
                })
                .collect();
            c.with_outcomes(obs)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(clusters)?.with_p_a(config.p_a)
}

//! Monte Carlo over within-cluster subsamples, drawn independently of the
//! library's sampler.

use gee2::estimators::{
    Draw, EstimatingEquation, IpwMode, OmPredictions, PsmPredictions, Score, TreatmentEquation,
    POSITIVITY_FLOOR,
};
use gee2::model::{ClusterData, Dataset, ModelSpec, ParameterVector, Target};
use gee2::simgen::{generate_dataset, marginal_truth, GenerationConfig};
use gee2::stochastic::{stochastic_zeta, ZetaVariant};

use super::rng;
use nalgebra::DVector;
use rand::{Rng, RngExt};

/// Running mean and standard error of a vector statistic.
pub struct Moments {
    n: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for (k, v) in x.iter().enumerate() {
            self.sum[k] += v;
            self.sumsq[k] += v * v;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, q)| ((q / n - (s / n).powi(2)).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect()
    }

    /// Largest `|mean - target| / se` over entries with nonzero spread;
    /// entries without spread must equal the target to 1e-10 (else `inf`).
    pub fn worst_z(&self, target: &[f64]) -> f64 {
        self.mean()
            .iter()
            .zip(self.se())
            .zip(target)
            .map(|((m, s), t)| {
                let scale = t.abs().max(1.0);
                if s <= 1e-12 * scale {
                    if (m - t).abs() <= 1e-10 * scale {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (m - t).abs() / s
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Gradient then information entries.
pub fn score_entries(s: &Score) -> Vec<f64> {
    s.g_beta
        .iter()
        .chain(s.g_alpha.iter())
        .chain(s.h_beta.iter())
        .chain(s.h_alpha.iter())
        .copied()
        .collect()
}

pub fn sample_size(pi_s: f64, m: usize) -> usize {
    if m == 0 {
        return 0;
    }
    let u = (pi_s * m as f64 - 1e-9).ceil() as usize;
    u.clamp(m.min(2), m)
}

/// Uniform subset without replacement, by partial Fisher-Yates.
pub fn subset<R: Rng>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut v = pool.to_vec();
    for x in 0..k {
        let y = x + rng.random_range(0..v.len() - x);
        v.swap(x, y);
    }
    v.truncate(k);
    v.sort_unstable();
    v
}

fn inflation(m: usize, u: usize) -> (f64, f64) {
    let f1 = m as f64 / u.max(1) as f64;
    let f2 = if u >= 2 {
        (m * (m - 1)) as f64 / (u * (u - 1)) as f64
    } else {
        0.0
    };
    (f1, f2)
}

/// One subsampled evaluation of the summed score and information.
pub fn subsampled_score<E: EstimatingEquation, R: Rng>(
    eq: &E,
    theta: &ParameterVector,
    pi_s: f64,
    rng: &mut R,
) -> Score {
    let (pb, pa) = eq.dims();
    let mut total = Score::zeros(pb, pa);
    for i in 0..eq.n_clusters() {
        let universe = eq.universe(i);
        let all = eq.all_indices(i);
        let u = sample_size(pi_s, universe.len());
        let first = subset(universe, u, rng);
        let (f1, f2) = inflation(universe.len(), u);
        let ua = sample_size(pi_s, all.len());
        let aug = subset(all, ua, rng);
        let (a1, a2) = inflation(all.len(), ua);
        let draw = Draw {
            first: &first,
            first_scale: f1,
            pair_scale: f2,
            aug: &aug,
            aug_first_scale: a1,
            aug_pair_scale: a2,
        };
        total.add(&eq.cluster_score(i, theta, &draw).unwrap());
    }
    total
}

pub fn deterministic_zeta(eq: &TreatmentEquation<'_>, theta: &ParameterVector) -> Vec<f64> {
    let mut out = vec![0.0; 4];
    for i in 0..eq.n_clusters() {
        let (zb, za) = eq.augmentation_term(i, theta).unwrap();
        for (k, v) in zb.iter().chain(za.iter()).enumerate() {
            out[k] += v;
        }
    }
    out
}

/// Summed subsampled augmentation term under `variant`.
pub fn subsampled_zeta<R: Rng>(
    eq: &TreatmentEquation<'_>,
    theta: &ParameterVector,
    pi_s: f64,
    variant: ZetaVariant,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = DVector::zeros(4);
    for i in 0..eq.n_clusters() {
        let observed = eq.universe(i);
        let s = subset(observed, sample_size(pi_s, observed.len()), rng);
        let all = eq.all_indices(i);
        let s_prime = subset(all, sample_size(pi_s, all.len()), rng);
        let (zb, za) = stochastic_zeta(eq, i, theta, &s, &s_prime, variant).unwrap();
        {
            let mut v = out.rows_mut(0, 2);
            v += &zb;
        }
        {
            let mut v = out.rows_mut(2, 2);
            v += &za;
        }
    }
    out.iter().copied().collect()
}

/// Two clusters of 30 with a subject covariate on a grid; subjects in the
/// upper half are unobserved, and both fitted models load heavily on it.
pub fn informative_fixture() -> (
    Dataset,
    (ModelSpec, ParameterVector),
    (ModelSpec, ParameterVector),
) {
    let n = 30;
    let clusters = (0..2)
        .map(|i| {
            let x: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
            let y = x
                .iter()
                .enumerate()
                .map(|(j, &v)| (v < 0.5).then_some((j + i) % 3 != 0))
                .collect();
            ClusterData::new(format!("c{i}"), i == 1, vec![], x, 1, y).unwrap()
        })
        .collect();
    let data = Dataset::new(clusters).unwrap();
    let psm = ModelSpec::saturated(Target::Propensity, 0, 1).unwrap();
    let om = ModelSpec::saturated(Target::Outcome, 0, 1).unwrap();
    // beta order [1, A, X, A:X], alpha [1, A]
    let psm_theta = ParameterVector::new(vec![1.0, 0.0, -3.0, 0.0], vec![0.1, 0.0]);
    let om_theta = ParameterVector::new(vec![-1.0, 0.3, 3.0, 0.5], vec![0.2, 0.1]);
    (data, (psm, psm_theta), (om, om_theta))
}

pub const DRAWS: usize = 10_000;
pub const PI_S: f64 = 0.3;

/// Twenty clusters of thirty with the generating nuisance models.
pub fn frozen() -> (Dataset, PsmPredictions, OmPredictions) {
    let config = GenerationConfig {
        seed: 41,
        ..GenerationConfig::default().with_scale(20, 30, 30)
    };
    let data = generate_dataset(&config, 0).unwrap();
    let (psm_spec, psm_theta) = config
        .missingness
        .as_ref()
        .unwrap()
        .coefficients
        .to_model(Target::Propensity)
        .unwrap();
    let (om_spec, om_theta) = config
        .outcome
        .coefficients
        .to_model(Target::Outcome)
        .unwrap();
    let psm = PsmPredictions::new(&data, &psm_spec, &psm_theta, POSITIVITY_FLOOR).unwrap();
    let om = OmPredictions::new(&data, &om_spec, &om_theta).unwrap();
    (data, psm, om)
}

pub fn tm_point() -> ParameterVector {
    ParameterVector::new(vec![-1.80, 0.29], vec![0.124, -0.049])
}

/// Worst standardized deviation of the subsampled score and information
/// from their exact values at the fixed treatment-model point.
pub fn unbiased_z<E: EstimatingEquation>(eq: &E, seed: u64) -> f64 {
    let theta = tm_point();
    let exact = score_entries(&eq.total_score(&theta).unwrap());
    let mut m = Moments::new(exact.len());
    let mut r = rng(seed);
    for _ in 0..DRAWS {
        m.push(&score_entries(&subsampled_score(eq, &theta, PI_S, &mut r)));
    }
    m.worst_z(&exact)
}

/// As [`unbiased_z`] for the summed augmentation term.
pub fn zeta_z(
    data: &Dataset,
    psm: PsmPredictions,
    om: OmPredictions,
    variant: ZetaVariant,
    seed: u64,
) -> f64 {
    let eq = TreatmentEquation::doubly_robust(data, IpwMode::G2, psm, om).unwrap();
    let theta = tm_point();
    let exact = deterministic_zeta(&eq, &theta);
    let mut m = Moments::new(4);
    let mut r = rng(seed);
    for _ in 0..DRAWS {
        m.push(&subsampled_zeta(&eq, &theta, PI_S, variant, &mut r));
    }
    m.worst_z(&exact)
}

pub fn generating(config: &GenerationConfig, target: Target) -> (ModelSpec, ParameterVector) {
    let mech = match target {
        Target::Propensity => config.missingness.as_ref().unwrap(),
        _ => &config.outcome,
    };
    mech.coefficients.to_model(target).unwrap()
}

/// Mean over replicate datasets of a treatment-model score at the true
/// parameter, as multiples of its Monte Carlo standard error.
pub fn mean_score_z(
    make: impl Fn(&Dataset) -> Option<TreatmentEquation<'_>> + Sync,
    config: &GenerationConfig,
    reps: u64,
) -> f64 {
    let truth = marginal_truth(config).unwrap();
    let t = truth.as_array();
    let theta = ParameterVector::new(vec![t[0], t[1]], vec![t[2], t[3]]);
    let mut m = Moments::new(4);
    for r in 0..reps {
        let data = generate_dataset(config, r).unwrap();
        let eq = make(&data).unwrap();
        let g = eq.total_score(&theta).unwrap().stacked_gradient();
        m.push(g.as_slice());
    }
    m.worst_z(&[0.0; 4])
}

pub fn mc_config() -> GenerationConfig {
    GenerationConfig {
        seed: 77,
        ..GenerationConfig::default().with_scale(200, 10, 20)
    }
}

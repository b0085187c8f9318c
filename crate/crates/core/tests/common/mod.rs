//! Shared fixtures and a dense reference implementation of the estimating
//! equations, solved by Newton's method with a finite-difference Jacobian.
#![allow(dead_code)]

pub mod design;
pub mod mc;

use gee2::model::{ClusterData, Dataset, ModelSpec, ParameterVector, Target};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Which equation the reference evaluates.
#[derive(Clone)]
pub enum Reference {
    /// Conditional model on its working set.
    Conditional(ModelSpec),
    CompleteCase,
    /// Inverse-probability weighted, `g2` selecting correlated pair weights.
    Ipw {
        psm: (ModelSpec, ParameterVector),
        g2: bool,
    },
    /// Doubly robust with `g2` pair weights.
    Dr {
        psm: (ModelSpec, ParameterVector),
        om: (ModelSpec, ParameterVector),
    },
}

struct ModelAt {
    mean: Vec<f64>,
    rho: f64,
}

fn model_at(spec: &ModelSpec, theta: &ParameterVector, c: &ClusterData, a: f64) -> ModelAt {
    let p = spec.dim_beta();
    let mut row = vec![0.0; p];
    let mean = (0..c.size())
        .map(|j| {
            spec.mean_row_into(c, j, a, &mut row);
            expit(row.iter().zip(&theta.beta).map(|(x, b)| x * b).sum())
        })
        .collect();
    let z = spec.corr_row(c, a);
    let rho = z
        .iter()
        .zip(&theta.alpha)
        .map(|(x, b)| x * b)
        .sum::<f64>()
        .tanh();
    ModelAt { mean, rho }
}

fn tm_at(theta: &[f64], a: f64) -> (f64, f64) {
    (
        expit(theta[0] + theta[1] * a),
        (theta[2] + theta[3] * a).tanh(),
    )
}

/// `D' V^-1 W E` of the first-order block over the subjects `set`, with the
/// covariance built densely and inverted directly.
fn first_block(d: &DMatrix<f64>, mean: &[f64], rho: f64, w: &[f64], e: &[f64]) -> DVector<f64> {
    let n = mean.len();
    let mut v = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let r = if j == k { 1.0 } else { rho };
            v[(j, k)] = r * (mean[j] * (1.0 - mean[j]) * mean[k] * (1.0 - mean[k])).sqrt();
        }
    }
    if rho <= -1.0 / (n as f64 - 1.0).max(1.0) || rho >= 1.0 {
        return DVector::from_element(d.ncols(), f64::NAN);
    }
    let Some(vinv) = v.try_inverse() else {
        return DVector::from_element(d.ncols(), f64::NAN);
    };
    let we = DVector::from_iterator(n, w.iter().zip(e).map(|(a, b)| a * b));
    d.transpose() * vinv * we
}

/// Rows of `d pi / d beta` for `set` by central differences.
fn mean_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, beta: &[f64]) -> DMatrix<f64> {
    let base = f(beta);
    let mut d = DMatrix::zeros(base.len(), beta.len());
    for k in 0..beta.len() {
        let h = 1e-6;
        let mut up = beta.to_vec();
        up[k] += h;
        let mut dn = beta.to_vec();
        dn[k] -= h;
        let (fu, fd) = (f(&up), f(&dn));
        for j in 0..base.len() {
            d[(j, k)] = (fu[j] - fd[j]) / (2.0 * h);
        }
    }
    d
}

fn scalar_gradient<F: Fn(&[f64]) -> f64>(f: F, alpha: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        alpha.len(),
        (0..alpha.len()).map(|k| {
            let h = 1e-6;
            let mut up = alpha.to_vec();
            up[k] += h;
            let mut dn = alpha.to_vec();
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        }),
    )
}

fn pairs(set: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for x in 0..set.len() {
        for y in x + 1..set.len() {
            out.push((set[x], set[y]));
        }
    }
    out
}

fn yval(c: &ClusterData, j: usize) -> f64 {
    c.y()[j].map_or(0.0, |v| f64::from(u8::from(v)))
}

/// First-order weights and the pair weight matrix of one cluster.
fn ipw_weights(
    c: &ClusterData,
    psm: &(ModelSpec, ParameterVector),
    g2: bool,
) -> (Vec<f64>, DMatrix<f64>) {
    let m = model_at(&psm.0, &psm.1, c, c.a());
    let n = c.size();
    let w1 = (0..n)
        .map(|j| if c.r(j) { 1.0 / m.mean[j] } else { 0.0 })
        .collect();
    let rr = if g2 { m.rho } else { 0.0 };
    let w2 = DMatrix::from_fn(n, n, |j, k| {
        if !(c.r(j) && c.r(k)) {
            return 0.0;
        }
        let v = (m.mean[j] * (1.0 - m.mean[j]) * m.mean[k] * (1.0 - m.mean[k])).sqrt();
        1.0 / (m.mean[j] * m.mean[k] + rr * v)
    });
    (w1, w2)
}

/// Total estimating function at `theta` (beta then alpha).
pub fn reference_score(data: &Dataset, which: &Reference, theta: &[f64]) -> DVector<f64> {
    let dim = theta.len();
    let mut total = DVector::zeros(dim);
    for c in data.clusters() {
        let a = c.a();
        match which {
            Reference::Conditional(spec) => {
                let pb = spec.dim_beta();
                let th = ParameterVector::from_stacked(theta, pb);
                let set: Vec<usize> = match spec.target() {
                    Target::Propensity => (0..c.size()).collect(),
                    _ => c.observed().to_vec(),
                };
                if set.is_empty() {
                    continue;
                }
                let resp = |j: usize| match spec.target() {
                    Target::Propensity => f64::from(u8::from(c.r(j))),
                    _ => yval(c, j),
                };
                let m = model_at(spec, &th, c, a);
                let mean: Vec<f64> = set.iter().map(|&j| m.mean[j]).collect();
                let d = mean_jacobian(
                    |b| {
                        let t = ParameterVector::new(b.to_vec(), th.alpha.clone());
                        let mm = model_at(spec, &t, c, a).mean;
                        set.iter().map(|&j| mm[j]).collect()
                    },
                    &th.beta,
                );
                let e: Vec<f64> = set.iter().zip(&mean).map(|(&j, mu)| resp(j) - mu).collect();
                let g1 = first_block(&d, &mean, m.rho, &vec![1.0; set.len()], &e);
                let drho = scalar_gradient(
                    |al| {
                        model_at(
                            spec,
                            &ParameterVector::new(th.beta.clone(), al.to_vec()),
                            c,
                            a,
                        )
                        .rho
                    },
                    &th.alpha,
                );
                let mut g2 = 0.0;
                for (j, k) in pairs(&set) {
                    let ej = (resp(j) - m.mean[j]) / (m.mean[j] * (1.0 - m.mean[j])).sqrt();
                    let ek = (resp(k) - m.mean[k]) / (m.mean[k] * (1.0 - m.mean[k])).sqrt();
                    g2 += ej * ek - m.rho;
                }
                {
                    let mut v = total.rows_mut(0, pb);
                    v += &g1;
                }
                {
                    let mut v = total.rows_mut(pb, dim - pb);
                    v += &(drho * g2);
                }
            }
            _ => {
                let (pi, rho) = tm_at(theta, a);
                let su = (pi * (1.0 - pi)).sqrt();
                let cc = matches!(which, Reference::CompleteCase);
                let set: Vec<usize> = if cc {
                    c.observed().to_vec()
                } else {
                    (0..c.size()).collect()
                };
                if set.is_empty() {
                    continue;
                }
                let (w1, w2) = match which {
                    Reference::CompleteCase => (
                        vec![1.0; c.size()],
                        DMatrix::from_element(c.size(), c.size(), 1.0),
                    ),
                    Reference::Ipw { psm, g2 } => ipw_weights(c, psm, *g2),
                    Reference::Dr { psm, .. } => ipw_weights(c, psm, true),
                    Reference::Conditional(_) => unreachable!(),
                };
                let w1: Vec<f64> = set.iter().map(|&j| w1[j]).collect();
                let om = match which {
                    Reference::Dr { om, .. } => Some(om),
                    _ => None,
                };
                let om_a = om.map(|o| model_at(&o.0, &o.1, c, a));
                let d = mean_jacobian(|b| vec![expit(b[0] + b[1] * a); set.len()], &theta[..2]);
                let mean = vec![pi; set.len()];
                let e: Vec<f64> = set
                    .iter()
                    .map(|&j| {
                        if c.y()[j].is_none() {
                            0.0
                        } else {
                            yval(c, j) - om_a.as_ref().map_or(pi, |m| m.mean[j])
                        }
                    })
                    .collect();
                let g1 = first_block(&d, &mean, rho, &w1, &e);
                let drho = scalar_gradient(|al| (al[0] + al[1] * a).tanh(), &theta[2..]);
                let mut g2 = 0.0;
                for (j, k) in pairs(&set) {
                    let w = w2[(j, k)];
                    if w == 0.0 {
                        continue;
                    }
                    let ej = (yval(c, j) - pi) / su;
                    let ek = (yval(c, k) - pi) / su;
                    let target = match &om_a {
                        None => rho,
                        Some(m) => {
                            ((m.mean[j] - pi) * (m.mean[k] - pi)
                                + m.rho
                                    * (m.mean[j]
                                        * (1.0 - m.mean[j])
                                        * m.mean[k]
                                        * (1.0 - m.mean[k]))
                                        .sqrt())
                                / (pi * (1.0 - pi))
                        }
                    };
                    g2 += w * (ej * ek - target);
                }
                {
                    let mut v = total.rows_mut(0, 2);
                    v += &g1;
                }
                {
                    let mut v = total.rows_mut(2, 2);
                    v += &(drho * g2);
                }

                if let Some(o) = om {
                    let p_a = data.p_a();
                    for (arm, p) in [(0.0, 1.0 - p_a), (1.0, p_a)] {
                        if p == 0.0 {
                            continue;
                        }
                        let (pia, rhoa) = tm_at(theta, arm);
                        let m = model_at(&o.0, &o.1, c, arm);
                        let n = c.size();
                        let da = mean_jacobian(|b| vec![expit(b[0] + b[1] * arm); n], &theta[..2]);
                        let e: Vec<f64> = m.mean.iter().map(|mu| mu - pia).collect();
                        let z1 = first_block(&da, &vec![pia; n], rhoa, &vec![1.0; n], &e);
                        let drho = scalar_gradient(|al| (al[0] + al[1] * arm).tanh(), &theta[2..]);
                        let all: Vec<usize> = (0..n).collect();
                        let mut z2 = 0.0;
                        for (j, k) in pairs(&all) {
                            let dag = ((m.mean[j] - pia) * (m.mean[k] - pia)
                                + m.rho
                                    * (m.mean[j]
                                        * (1.0 - m.mean[j])
                                        * m.mean[k]
                                        * (1.0 - m.mean[k]))
                                        .sqrt())
                                / (pia * (1.0 - pia));
                            z2 += dag - rhoa;
                        }
                        {
                            let mut v = total.rows_mut(0, 2);
                            v += &(z1 * p);
                        }
                        {
                            let mut v = total.rows_mut(2, 2);
                            v += &(drho * (z2 * p));
                        }
                    }
                }
            }
        }
    }
    total
}

/// Newton's method on the reference score with a central-difference Jacobian.
pub fn reference_root(data: &Dataset, which: &Reference, start: &[f64]) -> Option<Vec<f64>> {
    let mut theta = start.to_vec();
    let dim = theta.len();
    for _ in 0..100 {
        let g = reference_score(data, which, &theta);
        if !g.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut up = theta.clone();
            up[k] += h;
            let mut dn = theta.clone();
            dn[k] -= h;
            let col =
                (reference_score(data, which, &up) - reference_score(data, which, &dn)) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let step = jac.lu().solve(&(-&g))?;
        let mut scale = 1.0;
        // backtrack on the residual norm
        let norm0 = g.norm();
        let mut next = theta.clone();
        for _ in 0..30 {
            next = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect();
            let ok = next[dim.saturating_sub(2)..].iter().all(|v| v.abs() < 5.0);
            let gn = reference_score(data, which, &next);
            if ok && gn.iter().all(|v| v.is_finite()) && gn.norm() < norm0 * (1.0 - 1e-4 * scale) {
                break;
            }
            scale *= 0.5;
        }
        let change = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = next;
        if change < 1e-12 {
            break;
        }
    }
    let g = reference_score(data, which, &theta);
    (g.norm() < 1e-9).then_some(theta)
}

/// Small random dataset: `n_clusters` clusters alternating between arms, one
/// cluster and one subject covariate, sizes in `[2, max_n]`, equicorrelated
/// outcomes (mean 0.4 or 0.6, ICC 0.3), and with `missing` about a quarter of
/// outcomes unobserved at random.
pub fn tiny_dataset(seed: u64, n_clusters: usize, max_n: usize, missing: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = (0..n_clusters)
        .map(|i| {
            let n = rng.random_range(2..=max_n);
            let treated = i % 2 == 1;
            let z = vec![rng.random_range(-1.0..1.0)];
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pi = vec![if treated { 0.6 } else { 0.4 }; n];
            let y = gee2::simgen::parzen_generate(i, &pi, 0.3, &mut rng)
                .unwrap()
                .into_iter()
                .map(|v| (!missing || rng.random_bool(0.75)).then_some(v))
                .collect();
            ClusterData::new(format!("c{i}"), treated, z, x, 1, y).unwrap()
        })
        .collect();
    Dataset::new(clusters).unwrap()
}

/// Mean on `X1`, correlation intercept and treatment only.
pub fn small_conditional(target: Target) -> ModelSpec {
    ModelSpec::conditional(target, vec![], vec![], vec![], vec![]).unwrap()
}

pub fn random_theta<R: Rng>(spec: &ModelSpec, rng: &mut R, scale: f64) -> ParameterVector {
    ParameterVector::new(
        (0..spec.dim_beta())
            .map(|_| rng.random_range(-scale..scale))
            .collect(),
        (0..spec.dim_alpha())
            .map(|_| rng.random_range(-scale..scale) * 0.3)
            .collect(),
    )
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Both response values occur in each arm (no separation) and each arm has
/// a cluster with an observed pair. `missingness` checks R instead of Y.
pub fn well_posed(data: &Dataset, missingness: bool) -> bool {
    [false, true].iter().all(|&arm| {
        let cl: Vec<_> = data
            .clusters()
            .iter()
            .filter(|c| c.treatment() == arm)
            .collect();
        let values: Vec<bool> = if missingness {
            cl.iter().flat_map(|c| c.r_vec()).collect()
        } else {
            cl.iter()
                .flat_map(|c| c.y().iter().flatten().copied())
                .collect()
        };
        let pairs = cl
            .iter()
            .any(|c| if missingness { c.size() } else { c.n_observed() } >= 2);
        values.contains(&true) && values.contains(&false) && pairs
    })
}

/// Distinct roots of the reference equations reached by damped Newton from
/// the origin and from `extra` random starts.
pub fn reference_roots(
    data: &Dataset,
    which: &Reference,
    dim: usize,
    extra: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let mut starts = vec![vec![0.0; dim]];
    for _ in 0..extra {
        starts.push((0..dim).map(|_| r.random_range(-1.5..1.5)).collect());
    }
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for start in starts {
        if let Some(root) = reference_root(data, which, &start) {
            if !roots.iter().any(|q| max_diff(q, &root) < 1e-6) {
                roots.push(root);
            }
        }
    }
    roots
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub struct OracleRow {
    pub kind: String,
    pub compared: usize,
    /// Datasets where the library reported divergence or hit the iteration cap.
    pub diverged: usize,
    /// Largest distance from a library solution to the nearest reference root.
    pub worst: f64,
}

/// Per estimating-equation kind, compare library solutions with the roots of
/// the dense reference equations until `count` converged fits are compared.
/// A dataset is drawn into the comparison when it is well posed and the
/// reference finds a root from the origin.
pub fn tiny_oracle_comparison(count: usize) -> Vec<OracleRow> {
    use gee2::estimators::{
        fit_equation, ConditionalEquation, IpwMode, OmPredictions, PsmPredictions, ScoringControls,
        TreatmentEquation,
    };
    let controls = ScoringControls::default();
    let kinds = ["PSM", "OM", "CC", "G1-IPW", "G2-IPW", "DR"];
    let mut out = Vec::new();
    for (ki, kind) in kinds.iter().enumerate() {
        let mut compared = 0;
        let mut worst: f64 = 0.0;
        let mut diverged = 0;
        let mut seed = 1000 * ki as u64;
        while compared < count && seed < 1000 * ki as u64 + 800 {
            seed += 1;
            let data = tiny_dataset(seed, 4, 4, true);
            let mut r = rng(seed ^ 0xABCD);
            let psm_spec = ModelSpec::saturated(Target::Propensity, 1, 1).unwrap();
            let om_spec = ModelSpec::saturated(Target::Outcome, 1, 1).unwrap();
            let mut psm_theta = random_theta(&psm_spec, &mut r, 0.5);
            // 3:1 observed, matching tiny_dataset
            psm_theta.beta[0] += 3f64.ln();
            let om_theta = random_theta(&om_spec, &mut r, 0.5);
            let reference = match *kind {
                "PSM" => Reference::Conditional(small_conditional(Target::Propensity)),
                "OM" => Reference::Conditional(small_conditional(Target::Outcome)),
                "CC" => Reference::CompleteCase,
                "G1-IPW" => Reference::Ipw {
                    psm: (psm_spec.clone(), psm_theta.clone()),
                    g2: false,
                },
                "G2-IPW" => Reference::Ipw {
                    psm: (psm_spec.clone(), psm_theta.clone()),
                    g2: true,
                },
                _ => Reference::Dr {
                    psm: (psm_spec.clone(), psm_theta.clone()),
                    om: (om_spec.clone(), om_theta.clone()),
                },
            };
            let dim = match &reference {
                Reference::Conditional(s) => s.dim_beta() + s.dim_alpha(),
                _ => 4,
            };
            if !well_posed(&data, matches!(*kind, "PSM"))
                || reference_root(&data, &reference, &vec![0.0; dim]).is_none()
            {
                continue;
            }
            let roots = reference_roots(&data, &reference, dim, 8, seed ^ 0x5EED);
            let lib = match &reference {
                Reference::Conditional(s) => {
                    let eq = ConditionalEquation::new(&data, s).unwrap();
                    fit_equation(&eq, ParameterVector::zeros(s), &controls)
                }
                Reference::CompleteCase => {
                    let eq = TreatmentEquation::complete_case(&data).unwrap();
                    fit_equation(
                        &eq,
                        ParameterVector::zeros(&ModelSpec::canonical_tm()),
                        &controls,
                    )
                }
                Reference::Ipw { psm, g2 } => {
                    let pred = PsmPredictions::new(&data, &psm.0, &psm.1, 1e-3).unwrap();
                    let mode = if *g2 { IpwMode::G2 } else { IpwMode::G1 };
                    let eq = TreatmentEquation::ipw(&data, mode, pred).unwrap();
                    fit_equation(
                        &eq,
                        ParameterVector::zeros(&ModelSpec::canonical_tm()),
                        &controls,
                    )
                }
                Reference::Dr { psm, om } => {
                    let pred = PsmPredictions::new(&data, &psm.0, &psm.1, 1e-3).unwrap();
                    let om_pred = OmPredictions::new(&data, &om.0, &om.1).unwrap();
                    let eq = TreatmentEquation::doubly_robust(&data, IpwMode::G2, pred, om_pred)
                        .unwrap();
                    fit_equation(
                        &eq,
                        ParameterVector::zeros(&ModelSpec::canonical_tm()),
                        &controls,
                    )
                }
            };
            match lib {
                Ok(f) if f.converged => {
                    let diff = roots
                        .iter()
                        .map(|q| max_diff(q, &f.theta.stacked()))
                        .fold(f64::INFINITY, f64::min);
                    worst = worst.max(diff);
                    compared += 1;
                }
                _ => diverged += 1,
            }
        }
        out.push(OracleRow {
            kind: kind.to_string(),
            compared,
            diverged,
            worst,
        });
    }
    out
}

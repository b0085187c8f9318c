//! Per-iteration cost of the scoring information and score under each working
//! covariance structure, for the first-moment (GEE1) and pairwise (GEE2)
//! portions, with full data or a within-cluster subsample.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    equicorr_coefficients, expit, pair_position, sparse_weighted_product, DiagonalWeight,
};
use crate::stochastic::{first_inflation, pair_inflation, srswor, subsample_size};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Arbitrary,
    Equicorrelated,
    Independence,
    Identity,
}

impl Structure {
    pub const ALL: [Structure; 4] = [
        Self::Arbitrary,
        Self::Equicorrelated,
        Self::Independence,
        Self::Identity,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchSolver {
    Full,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Portion {
    Gee1,
    Gee2,
    /// Equicorrelated GEE1 plus identity GEE2.
    Overall,
}

macro_rules! kebab_display {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(s.as_str().ok_or(fmt::Error)?)
            }
        }
    )*};
}
kebab_display!(Structure, BenchSolver, Portion);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Cluster sizes; at least three.
    pub sizes: Vec<usize>,
    pub structures: Vec<Structure>,
    /// Timed iterations per cell; at least 20.
    pub repetitions: usize,
    pub warmup: usize,
    /// Equal-size clusters per iteration.
    pub clusters: usize,
    /// Expected subsample size; `pi_s = subsample / n`.
    pub subsample: usize,
    /// Arbitrary-structure cells whose dimension exceeds this are skipped.
    pub max_dense_dim: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100, 200, 400],
            structures: Structure::ALL.to_vec(),
            repetitions: 30,
            warmup: 5,
            clusters: 100,
            subsample: 10,
            max_dense_dim: 500,
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let mut sizes = self.sizes.clone();
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.len() < 3 {
            return Err(Error::Config(format!(
                "bench needs at least 3 distinct sizes, got {:?}",
                self.sizes
            )));
        }
        if sizes[0] < 2 {
            return Err(Error::Config("bench sizes must be at least 2".into()));
        }
        if self.repetitions < 20 {
            return Err(Error::Config(format!(
                "bench needs at least 20 repetitions, got {}",
                self.repetitions
            )));
        }
        if self.clusters == 0 || self.subsample < 2 {
            return Err(Error::Config(
                "bench needs at least one cluster and a subsample of at least 2".into(),
            ));
        }
        if self.structures.is_empty() {
            return Err(Error::Config("no covariance structures selected".into()));
        }
        Ok(())
    }

    pub fn pi_s(&self, n: usize) -> f64 {
        (self.subsample as f64 / n as f64).min(1.0)
    }
}

/// Median time of one iteration for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub structure: String,
    pub solver: BenchSolver,
    pub portion: Portion,
    pub n: usize,
    /// Length of the stacked vector: `n` or `n(n-1)/2`.
    pub dim: usize,
    pub pi_s: f64,
    pub median_seconds: f64,
}

/// Least-squares slope of `log(seconds)` on `log(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSlope {
    pub structure: String,
    pub solver: BenchSolver,
    pub portion: Portion,
    pub points: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub slopes: Vec<BenchSlope>,
}

impl BenchReport {
    pub fn slope(&self, structure: &str, solver: BenchSolver, portion: Portion) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.structure == structure && s.solver == solver && s.portion == portion)
            .map(|s| s.slope)
    }
}

pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// One synthetic cluster: a logit linear predictor per subject and a common
/// correlation.
struct Cluster {
    eta: Vec<f64>,
    x: Vec<f64>,
    rho: f64,
    universe: Vec<usize>,
    y: Vec<f64>,
}

impl Cluster {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self {
            eta: x.iter().map(|v| 0.2 + 0.5 * v).collect(),
            y: (0..n)
                .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
                .collect(),
            x,
            rho: 0.1,
            universe: (0..n).collect(),
        }
    }

    fn n(&self) -> usize {
        self.eta.len()
    }
}

/// Derivative row, residual, and variance of one stacked entry.
#[derive(Clone, Copy)]
struct Entry {
    d: [f64; 2],
    e: f64,
    u: f64,
}

fn subject(c: &Cluster, j: usize) -> Entry {
    let mu = expit(c.eta[j]);
    let v = mu * (1.0 - mu);
    Entry {
        d: [v, v * c.x[j]],
        e: c.y[j] - mu,
        u: v,
    }
}

fn pair(c: &Cluster, (mj, mk): (f64, f64), j: usize, k: usize) -> Entry {
    let s = (mj * (1.0 - mj) * mk * (1.0 - mk)).sqrt();
    let eta = mj * mk + c.rho * s;
    let g = (1.0 - c.rho * c.rho) * s;
    Entry {
        d: [g, g * c.x[j] * c.x[k]],
        e: c.y[j] * c.y[k] - eta,
        u: (eta * (1.0 - eta)).max(1e-12),
    }
}

fn for_each_full(c: &Cluster, portion: Portion, mut f: impl FnMut(Entry)) {
    let n = c.n();
    match portion {
        Portion::Gee1 => (0..n).for_each(|j| f(subject(c, j))),
        _ => {
            let mu: Vec<f64> = c.eta.iter().map(|&v| expit(v)).collect();
            for j in 0..n {
                for k in j + 1..n {
                    f(pair(c, (mu[j], mu[k]), j, k));
                }
            }
        }
    }
}

/// Entries within the sample, with their positions in the full stack.
fn for_each_sampled(c: &Cluster, portion: Portion, s: &[usize], mut f: impl FnMut(usize, Entry)) {
    match portion {
        Portion::Gee1 => s.iter().for_each(|&j| f(j, subject(c, j))),
        _ => {
            let mu: Vec<f64> = s.iter().map(|&j| expit(c.eta[j])).collect();
            for (a, &j) in s.iter().enumerate() {
                for (b, &k) in s.iter().enumerate().skip(a + 1) {
                    f(pair_position(c.n(), j, k), pair(c, (mu[a], mu[b]), j, k));
                }
            }
        }
    }
}

fn dim(n: usize, portion: Portion) -> usize {
    match portion {
        Portion::Gee1 => n,
        _ => n * (n - 1) / 2,
    }
}

#[derive(Default)]
struct Acc {
    h: [[f64; 2]; 2],
    g: [f64; 2],
}

impl Acc {
    fn add(&mut self, f: f64, x: &Entry) {
        for a in 0..2 {
            self.g[a] += f * x.d[a] * x.e;
            for b in 0..2 {
                self.h[a][b] += f * x.d[a] * x.d[b];
            }
        }
    }

    /// Adds `coef * t (sd', se)`.
    fn add_outer(&mut self, coef: f64, t: [f64; 2], sd: [f64; 2], se: f64) {
        for a in 0..2 {
            self.g[a] += coef * t[a] * se;
            for b in 0..2 {
                self.h[a][b] += coef * t[a] * sd[b];
            }
        }
    }

    fn into_info(self) -> Info {
        (
            DMatrix::from_fn(2, 2, |a, b| self.h[a][b]),
            DVector::from_column_slice(&self.g),
        )
    }
}

type Info = (DMatrix<f64>, DVector<f64>);

/// Stacked design, residuals, and variances of every entry.
fn design(c: &Cluster, portion: Portion) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let mut list = Vec::with_capacity(dim(c.n(), portion));
    for_each_full(c, portion, |x| list.push(x));
    let d = DMatrix::from_fn(list.len(), 2, |i, k| list[i].d[k]);
    let e = DVector::from_iterator(list.len(), list.iter().map(|x| x.e));
    (d, e, list.iter().map(|x| x.u).collect())
}

/// `r^{|p - q|}` correlation between stacked entries, solved densely.
fn dense_solve(u: &[f64], rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.len();
    let r: f64 = 0.3;
    let v = DMatrix::from_fn(n, n, |p, q| {
        r.powi((p as i32 - q as i32).abs()) * (u[p] * u[q]).sqrt()
    });
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::Shape("arbitrary working covariance is not PD".into()))?;
    Ok(chol.solve(rhs))
}

fn full_iteration(c: &Cluster, structure: Structure, portion: Portion) -> Result<Info> {
    let mut acc = Acc::default();
    match structure {
        Structure::Arbitrary => {
            let (d, e, u) = design(c, portion);
            let mut rhs = DMatrix::zeros(d.nrows(), 3);
            rhs.view_mut((0, 0), (d.nrows(), 2)).copy_from(&d);
            rhs.set_column(2, &e);
            let x = dense_solve(&u, &rhs)?;
            return Ok((d.transpose() * x.columns(0, 2), d.transpose() * x.column(2)));
        }
        Structure::Equicorrelated => {
            // V^{-1} = U^{-1/2} (a I + b J) U^{-1/2}
            let (a, b) = equicorr_coefficients(c.rho, dim(c.n(), portion))?;
            let mut t = [0.0; 2];
            let mut te = 0.0;
            for_each_full(c, portion, |x| {
                acc.add(a / x.u, &x);
                let q = 1.0 / x.u.sqrt();
                t[0] += q * x.d[0];
                t[1] += q * x.d[1];
                te += q * x.e;
            });
            acc.add_outer(b, t, t, te);
        }
        Structure::Independence => for_each_full(c, portion, |x| acc.add(1.0 / x.u, &x)),
        Structure::Identity => for_each_full(c, portion, |x| acc.add(1.0, &x)),
    }
    Ok(acc.into_info())
}

fn stochastic_iteration(
    c: &Cluster,
    structure: Structure,
    portion: Portion,
    pi_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Info> {
    let n = c.n();
    let upsilon = subsample_size(pi_s, n);
    let s = srswor(&c.universe, upsilon, rng)?;
    let w = match portion {
        Portion::Gee1 => first_inflation(n, upsilon),
        _ => pair_inflation(n, upsilon),
    };
    let mut acc = Acc::default();
    match structure {
        Structure::Arbitrary => {
            // V^{-1} mixes every entry, so the full solve is unavoidable
            let (d, e, u) = design(c, portion);
            let x = dense_solve(&u, &d)?;
            let mut diag = vec![0.0; d.nrows()];
            for_each_sampled(c, portion, &s, |p, _| diag[p] = w);
            let weight = DiagonalWeight::new(diag)?;
            let xt = x.transpose();
            let e = DMatrix::from_column_slice(e.len(), 1, e.as_slice());
            let h = sparse_weighted_product(&xt, &weight, &d)?;
            let g = sparse_weighted_product(&xt, &weight, &e)?;
            return Ok((h, g.column(0).into_owned()));
        }
        Structure::Equicorrelated => {
            // first term over the sample; the J term needs a pass over every entry
            let (a, b) = equicorr_coefficients(c.rho, dim(n, portion))?;
            let mut t = [0.0; 2];
            for_each_full(c, portion, |x| {
                let q = 1.0 / x.u.sqrt();
                t[0] += q * x.d[0];
                t[1] += q * x.d[1];
            });
            let mut sd = [0.0; 2];
            let mut se = 0.0;
            for_each_sampled(c, portion, &s, |_, x| {
                acc.add(w * a / x.u, &x);
                let q = w / x.u.sqrt();
                sd[0] += q * x.d[0];
                sd[1] += q * x.d[1];
                se += q * x.e;
            });
            acc.add_outer(b, t, sd, se);
        }
        Structure::Independence => for_each_sampled(c, portion, &s, |_, x| acc.add(w / x.u, &x)),
        Structure::Identity => for_each_sampled(c, portion, &s, |_, x| acc.add(w, &x)),
    }
    Ok(acc.into_info())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Equicorrelated GEE1 and identity GEE2 sharing one subsample.
fn overall_iteration(
    c: &Cluster,
    solver: BenchSolver,
    pi_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Info> {
    let (first, second) = match solver {
        BenchSolver::Full => (
            full_iteration(c, Structure::Equicorrelated, Portion::Gee1)?,
            full_iteration(c, Structure::Identity, Portion::Gee2)?,
        ),
        BenchSolver::Stochastic => {
            let mut replay = rng.clone();
            let first =
                stochastic_iteration(c, Structure::Equicorrelated, Portion::Gee1, pi_s, rng)?;
            let second =
                stochastic_iteration(c, Structure::Identity, Portion::Gee2, pi_s, &mut replay)?;
            (first, second)
        }
    };
    Ok((first.0 + second.0, first.1 + second.1))
}

struct Cell<'a> {
    clusters: &'a [Cluster],
    structure: Option<Structure>,
    solver: BenchSolver,
    portion: Portion,
    rng: ChaCha8Rng,
    times: Vec<f64>,
}

impl Cell<'_> {
    fn n(&self) -> usize {
        self.clusters[0].n()
    }

    fn once(&mut self, pi_s: f64) -> Result<()> {
        for c in self.clusters {
            let info = match (self.structure, self.solver) {
                (None, solver) => overall_iteration(c, solver, pi_s, &mut self.rng)?,
                (Some(st), BenchSolver::Full) => full_iteration(c, st, self.portion)?,
                (Some(st), BenchSolver::Stochastic) => {
                    stochastic_iteration(c, st, self.portion, pi_s, &mut self.rng)?
                }
            };
            black_box(info);
        }
        Ok(())
    }

    fn label(&self) -> String {
        match self.structure {
            Some(s) => s.to_string(),
            None => format!("{}+{}", Structure::Equicorrelated, Structure::Identity),
        }
    }
}

/// Runs every cell on the calling thread. Repetitions are interleaved across
/// cells so slow stretches of the host affect all sizes alike.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut sizes = config.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let instances: Vec<Vec<Cluster>> = sizes
        .iter()
        .map(|&n| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(n as u64));
            (0..config.clusters)
                .map(|_| Cluster::new(n, &mut rng))
                .collect()
        })
        .collect();
    let mut cells = Vec::new();
    for (k, clusters) in instances.iter().enumerate() {
        let n = sizes[k];
        let mut kinds: Vec<(Option<Structure>, Portion)> = Vec::new();
        for &structure in &config.structures {
            for portion in [Portion::Gee1, Portion::Gee2] {
                if structure == Structure::Arbitrary && dim(n, portion) > config.max_dense_dim {
                    continue;
                }
                kinds.push((Some(structure), portion));
            }
        }
        kinds.push((None, Portion::Overall));
        for (structure, portion) in kinds {
            for solver in [BenchSolver::Full, BenchSolver::Stochastic] {
                cells.push(Cell {
                    clusters,
                    structure,
                    solver,
                    portion,
                    rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
                    times: Vec::with_capacity(config.repetitions),
                });
            }
        }
    }
    for _ in 0..config.warmup {
        for cell in &mut cells {
            let pi_s = config.pi_s(cell.n());
            cell.once(pi_s)?;
        }
    }
    for _ in 0..config.repetitions {
        for cell in &mut cells {
            let pi_s = config.pi_s(cell.n());
            let start = Instant::now();
            cell.once(pi_s)?;
            cell.times.push(start.elapsed().as_secs_f64());
        }
    }
    let rows: Vec<BenchRow> = cells
        .into_iter()
        .map(|cell| {
            let n = cell.n();
            BenchRow {
                structure: cell.label(),
                solver: cell.solver,
                portion: cell.portion,
                n,
                dim: match cell.portion {
                    Portion::Overall => n * (n + 1) / 2,
                    p => dim(n, p),
                },
                pi_s: match cell.solver {
                    BenchSolver::Full => 1.0,
                    BenchSolver::Stochastic => config.pi_s(n),
                },
                median_seconds: median(cell.times),
            }
        })
        .collect();

    let mut slopes = Vec::new();
    for r in rows.iter().filter(|r| r.n == sizes[0]) {
        let points: Vec<(usize, f64)> = rows
            .iter()
            .filter(|o| {
                o.structure == r.structure && o.solver == r.solver && o.portion == r.portion
            })
            .map(|o| (o.n, o.median_seconds))
            .collect();
        if points.len() >= 3 {
            slopes.push(BenchSlope {
                structure: r.structure.clone(),
                solver: r.solver,
                portion: r.portion,
                points: points.len(),
                slope: log_log_slope(&points),
            });
        }
    }
    Ok(BenchReport { rows, slopes })
}

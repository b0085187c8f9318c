//! Subsampled Fisher-scoring chains and their parallel average.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rate::LearningRate;
use super::sampling::{first_inflation, pair_inflation, srswor, stream, subsample_size};
use crate::error::{Error, Result, Stage};
use crate::estimators::scoring::{relative_update, step};
use crate::estimators::{Draw, EstimatingEquation, Score};
use crate::model::ParameterVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingPlan {
    /// Sampling proportion in `(0, 1]`.
    pub pi_s: f64,
    /// Iterations for the propensity and outcome stages.
    pub omega_nuisance: usize,
    /// Iterations for the treatment stage.
    pub omega_tm: usize,
    pub gamma: LearningRate,
    pub seed: u64,
    /// Number of chains averaged by the parallel solver.
    pub chains: usize,
    /// Rerun the chains from their average.
    pub second_round: bool,
    pub max_condition: f64,
    pub max_halvings: usize,
    pub record_trace: bool,
}

impl Default for SamplingPlan {
    /// Settings for clusters of about 30 subjects.
    fn default() -> Self {
        Self {
            pi_s: 0.30,
            omega_nuisance: 20,
            omega_tm: 10,
            gamma: LearningRate::Harmonic,
            seed: 0,
            chains: 1,
            second_round: false,
            max_condition: 1e12,
            max_halvings: 5,
            record_trace: false,
        }
    }
}

impl SamplingPlan {
    /// Settings for clusters of about 300 subjects.
    pub fn large_clusters() -> Self {
        Self {
            pi_s: 0.15,
            omega_nuisance: 25,
            omega_tm: 12,
            ..Self::default()
        }
    }

    pub fn omega(&self, stage: Stage) -> usize {
        match stage {
            Stage::Tm => self.omega_tm,
            _ => self.omega_nuisance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi_s > 0.0 && self.pi_s <= 1.0) {
            return Err(Error::Config(format!(
                "pi_s = {} outside (0, 1]",
                self.pi_s
            )));
        }
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        self.gamma.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub theta: ParameterVector,
    pub converged: bool,
    pub divergence_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<ParameterVector>>,
    pub iterations: usize,
    /// Condition estimate of the last Hessian used.
    pub final_condition: f64,
    /// Relative size of the last update.
    pub last_update: f64,
    pub runtime_secs: f64,
}

/// RNG purposes per stage: subsample of the universe, then of all subjects.
fn purposes(stage: Stage) -> (u64, u64) {
    match stage {
        Stage::Psm => (0, 1),
        Stage::Om => (2, 3),
        Stage::Tm => (4, 5),
    }
}

/// Stochastic scoring state for one cluster and iteration.
struct ClusterDraw {
    first: Vec<usize>,
    first_scale: f64,
    pair_scale: f64,
    aug: Vec<usize>,
    aug_first_scale: f64,
    aug_pair_scale: f64,
}

fn evaluate<E: EstimatingEquation + ?Sized>(
    eq: &E,
    theta: &ParameterVector,
    draws: &[ClusterDraw],
) -> Result<Score> {
    let (pb, pa) = eq.dims();
    let mut total = Score::zeros(pb, pa);
    for (i, d) in draws.iter().enumerate() {
        let draw = Draw {
            first: &d.first,
            first_scale: d.first_scale,
            pair_scale: d.pair_scale,
            aug: &d.aug,
            aug_first_scale: d.aug_first_scale,
            aug_pair_scale: d.aug_pair_scale,
        };
        total.add(&eq.cluster_score(i, theta, &draw)?);
    }
    if total
        .g_beta
        .iter()
        .chain(total.g_alpha.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Divergence {
            stage: eq.stage(),
            reason: "non-finite score".into(),
        });
    }
    Ok(total)
}

/// Runs `omega` iterations `theta += gamma_w H~^{-1} G~` with fresh subsamples
/// each iteration. `chain` selects the RNG substreams.
pub fn run_chain<E: EstimatingEquation + ?Sized>(
    eq: &E,
    theta0: ParameterVector,
    plan: &SamplingPlan,
    omega: usize,
    chain: u64,
) -> ChainResult {
    let start = Instant::now();
    let (p_first, p_aug) = purposes(eq.stage());
    let mut rng_first = stream(plan.seed, chain, p_first);
    let mut rng_aug = stream(plan.seed, chain, p_aug);
    let mut theta = theta0;
    let mut trace = plan.record_trace.then(|| vec![theta.clone()]);
    let mut pending: Option<(ParameterVector, DVector<f64>, DVector<f64>, f64)> = None;
    let mut final_condition = f64::NAN;
    let mut last_update = f64::NAN;

    let fail = |theta: ParameterVector, reason: String, iterations, cond, upd, trace| ChainResult {
        theta,
        converged: false,
        divergence_reason: Some(reason),
        trace,
        iterations,
        final_condition: cond,
        last_update: upd,
        runtime_secs: start.elapsed().as_secs_f64(),
    };

    for w in 0..omega {
        let mut draws = Vec::with_capacity(eq.n_clusters());
        for i in 0..eq.n_clusters() {
            let universe = eq.universe(i);
            let m = universe.len();
            let ups = subsample_size(plan.pi_s, m);
            let first = if m == 0 {
                Vec::new()
            } else {
                srswor(universe, ups, &mut rng_first).expect("subsample size within range")
            };
            let (aug, aug_first_scale, aug_pair_scale) = if eq.augmented() {
                let all = eq.all_indices(i);
                let n = all.len();
                let ups_all = subsample_size(plan.pi_s, n);
                let s = srswor(all, ups_all, &mut rng_aug).expect("subsample size within range");
                (s, first_inflation(n, ups_all), pair_inflation(n, ups_all))
            } else {
                (Vec::new(), 0.0, 0.0)
            };
            draws.push(ClusterDraw {
                first,
                first_scale: first_inflation(m, ups),
                pair_scale: pair_inflation(m, ups),
                aug,
                aug_first_scale,
                aug_pair_scale,
            });
        }

        let mut halvings = 0;
        let score = loop {
            match evaluate(eq, &theta, &draws) {
                Ok(s) => break s,
                Err(e) => match &pending {
                    Some((base, db, da, g)) if halvings < plan.max_halvings => {
                        halvings += 1;
                        theta = step(base, db, da, g * 0.5f64.powi(halvings as i32));
                    }
                    _ => {
                        return fail(
                            theta,
                            format!("iteration {w}: {e}"),
                            w,
                            final_condition,
                            last_update,
                            trace,
                        );
                    }
                },
            }
        };
        if halvings > 0 {
            if let Some(t) = trace.as_mut() {
                *t.last_mut().expect("trace starts with theta0") = theta.clone();
            }
        }
        final_condition = score.condition();
        if !(final_condition <= plan.max_condition) {
            return fail(
                theta,
                format!("iteration {w}: Hessian condition {final_condition:e}"),
                w,
                final_condition,
                last_update,
                trace,
            );
        }
        let Some((db, da)) = score.newton_step() else {
            return fail(
                theta,
                format!("iteration {w}: singular Hessian"),
                w,
                final_condition,
                last_update,
                trace,
            );
        };
        if db.iter().chain(da.iter()).any(|v| !v.is_finite()) {
            return fail(
                theta,
                format!("iteration {w}: non-finite update"),
                w,
                final_condition,
                last_update,
                trace,
            );
        }
        let g = plan.gamma.gamma(w);
        last_update = relative_update(&theta, &db, &da, g);
        let next = step(&theta, &db, &da, g);
        pending = Some((theta, db, da, g));
        theta = next;
        if let Some(t) = trace.as_mut() {
            t.push(theta.clone());
        }
    }
    if !theta.is_finite() {
        return fail(
            theta,
            "non-finite final iterate".into(),
            omega,
            final_condition,
            last_update,
            trace,
        );
    }
    ChainResult {
        theta,
        converged: true,
        divergence_reason: None,
        trace,
        iterations: omega,
        final_condition,
        last_update,
        runtime_secs: start.elapsed().as_secs_f64(),
    }
}

/// Average of independent chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelResult {
    pub theta: ParameterVector,
    pub chains: Vec<ChainResult>,
    pub n_converged: usize,
    /// Median runtime among converged chains.
    pub median_runtime_secs: f64,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite runtimes"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn average(chains: &[ChainResult]) -> Result<ParameterVector> {
    let ok: Vec<&ChainResult> = chains.iter().filter(|c| c.converged).collect();
    if ok.is_empty() {
        return Err(Error::AllChainsDiverged {
            chains: chains.len(),
            reasons: chains
                .iter()
                .filter_map(|c| c.divergence_reason.clone())
                .collect(),
        });
    }
    let k = ok.len() as f64;
    let mut beta = vec![0.0; ok[0].theta.beta.len()];
    let mut alpha = vec![0.0; ok[0].theta.alpha.len()];
    for c in &ok {
        for (b, v) in beta.iter_mut().zip(&c.theta.beta) {
            *b += v / k;
        }
        for (a, v) in alpha.iter_mut().zip(&c.theta.alpha) {
            *a += v / k;
        }
    }
    Ok(ParameterVector { beta, alpha })
}

/// Runs `plan.chains` chains (concurrently) and averages those that converged;
/// with `second_round`, a further set of chains starts from that average.
pub fn par_sgee2<E: EstimatingEquation + ?Sized>(
    eq: &E,
    theta0: &ParameterVector,
    plan: &SamplingPlan,
    omega: usize,
) -> Result<ParallelResult> {
    plan.validate()?;
    let k = plan.chains as u64;
    let run = |start: &ParameterVector, offset: u64| -> Vec<ChainResult> {
        (0..k)
            .into_par_iter()
            .map(|c| run_chain(eq, start.clone(), plan, omega, offset + c))
            .collect()
    };
    let mut chains = run(theta0, 0);
    let mut theta = average(&chains)?;
    if plan.second_round {
        chains = run(&theta, k);
        theta = average(&chains)?;
    }
    let mut times: Vec<f64> = chains
        .iter()
        .filter(|c| c.converged)
        .map(|c| c.runtime_secs)
        .collect();
    Ok(ParallelResult {
        theta,
        n_converged: times.len(),
        median_runtime_secs: median(&mut times),
        chains,
    })
}

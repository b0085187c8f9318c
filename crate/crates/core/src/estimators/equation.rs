//! Per-cluster estimating functions shared by the deterministic and
//! subsampled solvers.

use crate::error::{Result, Stage};
use crate::model::ParameterVector;

use super::scoring::Score;

/// Which terms of one cluster enter an evaluation, with their inflation factors.
///
/// `first` indexes the sampled first-order terms (a subset of the universe) and
/// pairs are all `j < k` within `first`. `aug` plays the same role for the
/// augmentation sums, which range over every subject of the cluster.
#[derive(Debug, Clone, Copy)]
pub struct Draw<'a> {
    pub first: &'a [usize],
    pub first_scale: f64,
    pub pair_scale: f64,
    pub aug: &'a [usize],
    pub aug_first_scale: f64,
    pub aug_pair_scale: f64,
}

impl<'a> Draw<'a> {
    /// Every term with unit weight.
    pub fn full(universe: &'a [usize], all: &'a [usize]) -> Self {
        Self {
            first: universe,
            first_scale: 1.0,
            pair_scale: 1.0,
            aug: all,
            aug_first_scale: 1.0,
            aug_pair_scale: 1.0,
        }
    }
}

/// Estimating functions `sum_i Phi_i(theta)` of one stage, evaluated cluster
/// by cluster.
pub trait EstimatingEquation: Sync {
    fn stage(&self) -> Stage;

    /// `(dim_beta, dim_alpha)`.
    fn dims(&self) -> (usize, usize);

    fn n_clusters(&self) -> usize;

    /// Indices of cluster `i` whose first-order terms may be nonzero; the
    /// subsampling universe.
    fn universe(&self, i: usize) -> &[usize];

    /// `0..n_i`.
    fn all_indices(&self, i: usize) -> &[usize];

    /// Whether evaluations use `Draw::aug`.
    fn augmented(&self) -> bool {
        false
    }

    fn cluster_score(&self, i: usize, theta: &ParameterVector, draw: &Draw<'_>) -> Result<Score>;

    fn total_score(&self, theta: &ParameterVector) -> Result<Score> {
        let (pb, pa) = self.dims();
        let mut total = Score::zeros(pb, pa);
        for i in 0..self.n_clusters() {
            let draw = Draw::full(self.universe(i), self.all_indices(i));
            total.add(&self.cluster_score(i, theta, &draw)?);
        }
        Ok(total)
    }
}

/// Shared `0..max_n` slice source.
#[derive(Debug, Clone)]
pub(crate) struct IndexPool(Vec<usize>);

impl IndexPool {
    pub fn new(max_n: usize) -> Self {
        Self((0..max_n).collect())
    }

    pub fn upto(&self, n: usize) -> &[usize] {
        &self.0[..n]
    }
}

//! Clustered binary data with possibly missing outcomes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cluster: treatment, cluster covariates `z`, subject covariates `x`
/// (row-major, `n x m`), and outcomes with `None` marking a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterData {
    id: String,
    treatment: bool,
    z: Vec<f64>,
    x: Vec<f64>,
    m: usize,
    y: Vec<Option<bool>>,
    observed: Vec<usize>,
}

impl ClusterData {
    pub fn new(
        id: impl Into<String>,
        treatment: bool,
        z: Vec<f64>,
        x: Vec<f64>,
        m: usize,
        y: Vec<Option<bool>>,
    ) -> Result<Self> {
        let id = id.into();
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidData(format!("cluster {id} has no subjects")));
        }
        if x.len() != n * m {
            return Err(Error::Shape(format!(
                "cluster {id}: {} covariate values for {n} subjects x {m} columns",
                x.len()
            )));
        }
        if let Some(v) = z.iter().chain(x.iter()).find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "cluster {id}: non-finite covariate {v}"
            )));
        }
        let observed = (0..n).filter(|&j| y[j].is_some()).collect();
        Ok(Self {
            id,
            treatment,
            z,
            x,
            m,
            y,
            observed,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn treatment(&self) -> bool {
        self.treatment
    }

    pub fn a(&self) -> f64 {
        if self.treatment {
            1.0
        } else {
            0.0
        }
    }

    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn n_x(&self) -> usize {
        self.m
    }

    /// Covariates of subject `j`.
    pub fn x_row(&self, j: usize) -> &[f64] {
        &self.x[j * self.m..(j + 1) * self.m]
    }

    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[Option<bool>] {
        &self.y
    }

    /// Missingness indicator `R_j`.
    pub fn r(&self, j: usize) -> bool {
        self.y[j].is_some()
    }

    pub fn r_vec(&self) -> Vec<bool> {
        self.y.iter().map(Option::is_some).collect()
    }

    /// Indices of observed subjects, ascending.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    /// Copy with the outcomes replaced, keeping covariates.
    pub fn with_outcomes(&self, y: Vec<Option<bool>>) -> Result<Self> {
        Self::new(
            self.id.clone(),
            self.treatment,
            self.z.clone(),
            self.x.clone(),
            self.m,
            y,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    clusters: Vec<ClusterData>,
    q: usize,
    m: usize,
    p_a: f64,
}

impl Dataset {
    /// `p_a` defaults to the empirical treated fraction.
    pub fn new(clusters: Vec<ClusterData>) -> Result<Self> {
        let first = clusters
            .first()
            .ok_or_else(|| Error::InvalidData("dataset has no clusters".into()))?;
        let (q, m) = (first.z.len(), first.m);
        for c in &clusters {
            if c.z.len() != q || c.m != m {
                return Err(Error::Shape(format!(
                    "cluster {} has {} cluster and {} subject covariates, expected {q} and {m}",
                    c.id,
                    c.z.len(),
                    c.m
                )));
            }
        }
        let treated = clusters.iter().filter(|c| c.treatment).count();
        let p_a = treated as f64 / clusters.len() as f64;
        Ok(Self {
            clusters,
            q,
            m,
            p_a,
        })
    }

    pub fn with_p_a(mut self, p_a: f64) -> Result<Self> {
        if !(p_a >= 0.0 && p_a <= 1.0) {
            return Err(Error::Domain {
                func: "Dataset::with_p_a",
                value: p_a,
                domain: "[0, 1]",
            });
        }
        self.p_a = p_a;
        Ok(self)
    }

    pub fn clusters(&self) -> &[ClusterData] {
        &self.clusters
    }

    pub fn cluster(&self, i: usize) -> &ClusterData {
        &self.clusters[i]
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn n_z(&self) -> usize {
        self.q
    }

    pub fn n_x(&self) -> usize {
        self.m
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn n_subjects(&self) -> usize {
        self.clusters.iter().map(ClusterData::size).sum()
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters
            .iter()
            .map(ClusterData::size)
            .max()
            .unwrap_or(0)
    }

    pub fn has_both_arms(&self) -> bool {
        self.clusters.iter().any(|c| c.treatment) && self.clusters.iter().any(|c| !c.treatment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_tracks_missing_outcomes() {
        let c = ClusterData::new(
            "c",
            true,
            vec![1.0],
            vec![0.0, 1.0, 2.0],
            1,
            vec![Some(true), None, Some(false)],
        )
        .unwrap();
        assert_eq!(c.r_vec(), vec![true, false, true]);
        assert_eq!(c.observed(), &[0, 2]);
        assert_eq!(c.x_row(2), &[2.0]);
    }

    #[test]
    fn empirical_p_a() {
        let mk =
            |id: &str, a| ClusterData::new(id, a, vec![], vec![], 0, vec![Some(true)]).unwrap();
        let d = Dataset::new(vec![
            mk("a", true),
            mk("b", false),
            mk("c", false),
            mk("d", false),
        ])
        .unwrap();
        assert_eq!(d.p_a(), 0.25);
        assert!(d.has_both_arms());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ClusterData::new("c", true, vec![], vec![1.0], 2, vec![Some(true)]).is_err());
        assert!(ClusterData::new("c", true, vec![], vec![], 0, vec![]).is_err());
        let a = ClusterData::new("a", true, vec![1.0], vec![], 0, vec![Some(true)]).unwrap();
        let b = ClusterData::new("b", true, vec![], vec![], 0, vec![Some(true)]).unwrap();
        assert!(Dataset::new(vec![a, b]).is_err());
    }
}

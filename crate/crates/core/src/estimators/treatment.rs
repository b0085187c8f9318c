//! Estimating equations of the canonical treatment model: complete-case,
//! inverse-probability weighted, and doubly robust.

use nalgebra::{DMatrix, DVector};

use super::equation::{Draw, EstimatingEquation, IndexPool};
use super::scoring::Score;
use super::weights::{IpwMode, PsmPredictions};
use crate::error::{Error, Result, Stage};
use crate::math::equicorr_coefficients;
use crate::model::{
    checked_corr, checked_mean, predict_corr_at, predict_mean_at, ClusterData, Dataset, ModelSpec,
    ParameterVector,
};

/// Outcome-model predictions under both counterfactual treatment levels.
#[derive(Debug, Clone, PartialEq)]
pub struct OmPredictions {
    /// `mean[a][i][j]`.
    mean: [Vec<Vec<f64>>; 2],
    rho: [Vec<f64>; 2],
}

impl OmPredictions {
    pub fn new(data: &Dataset, spec: &ModelSpec, theta: &ParameterVector) -> Result<Self> {
        let mut mean = [Vec::new(), Vec::new()];
        let mut rho = [Vec::new(), Vec::new()];
        for a in 0..2 {
            for c in data.clusters() {
                mean[a].push(predict_mean_at(spec, theta, c, a as f64)?);
                rho[a].push(predict_corr_at(spec, theta, c, a as f64)?);
            }
        }
        Ok(Self { mean, rho })
    }

    pub fn mean(&self, a: usize, i: usize) -> &[f64] {
        &self.mean[a][i]
    }

    pub fn rho(&self, a: usize, i: usize) -> f64 {
        self.rho[a][i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    /// Observed subjects with unit weight; the working covariance spans them only.
    CompleteCase,
    /// Observed subjects weighted by inverse observation probabilities; the
    /// working covariance spans the whole cluster.
    Ipw { mode: IpwMode, psm: PsmPredictions },
}

/// Treatment-model estimating equations with optional augmentation.
#[derive(Debug, Clone)]
pub struct TreatmentEquation<'d> {
    data: &'d Dataset,
    weighting: Weighting,
    augmentation: Option<OmPredictions>,
    p_a: f64,
    pool: IndexPool,
}

/// Per-arm quantities of the canonical model.
#[derive(Debug, Clone, Copy)]
struct Arm {
    pi: f64,
    su: f64,
    rho: f64,
}

fn arm(theta: &ParameterVector, a: f64, cluster: &ClusterData) -> Result<Arm> {
    let pi = checked_mean(theta.beta[0] + theta.beta[1] * a, cluster)?;
    let rho = checked_corr(theta.alpha[0] + theta.alpha[1] * a, cluster)?;
    Ok(Arm {
        pi,
        su: (pi * (1.0 - pi)).sqrt(),
        rho,
    })
}

/// `(zeta_beta, zeta_alpha, h_beta, h_alpha)`.
pub type ZetaParts = (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>);

#[allow(clippy::too_many_arguments)]
fn zeta_cluster<F1, F2>(
    cluster: &ClusterData,
    theta: &ParameterVector,
    om_mean: [&[f64]; 2],
    om_rho: [f64; 2],
    p_a: f64,
    set: &[usize],
    w1: F1,
    w2: F2,
) -> Result<ZetaParts>
where
    F1: Fn(usize) -> f64,
    F2: Fn(usize, usize) -> f64,
{
    let n = cluster.size();
    let mut zb = DVector::zeros(2);
    let mut za = DVector::zeros(2);
    let mut hb = DMatrix::zeros(2, 2);
    let mut ha = DMatrix::zeros(2, 2);
    let mut c = vec![0.0; set.len()];
    let mut t = vec![0.0; set.len()];
    for (arm_idx, p) in [(0usize, 1.0 - p_a), (1usize, p_a)] {
        if p == 0.0 {
            continue;
        }
        let a = arm_idx as f64;
        let tm = arm(theta, a, cluster)?;
        let (ca, cb) = equicorr_coefficients(tm.rho, n)?;
        let k1 = ca + cb * n as f64;
        let means = om_mean[arm_idx];
        let rho_bar = om_rho[arm_idx];
        let mut s1 = 0.0;
        let mut s0 = 0.0;
        for (pos, &j) in set.iter().enumerate() {
            let m = means[j];
            c[pos] = (m - tm.pi) / tm.su;
            t[pos] = (m * (1.0 - m)).sqrt() / tm.su;
            let w = w1(j);
            s1 += w * c[pos];
            s0 += w;
        }
        let delta = DVector::from_vec(vec![tm.su, tm.su * a]);
        zb.axpy(p * k1 * s1, &delta, 1.0);
        hb.ger(p * k1 * s0, &delta, &delta, 1.0);

        let mut q1 = 0.0;
        let mut q0 = 0.0;
        for x in 0..set.len() {
            for y in x + 1..set.len() {
                let wp = w2(set[x], set[y]);
                q1 += wp * (c[x] * c[y] + rho_bar * t[x] * t[y] - tm.rho);
                q0 += wp;
            }
        }
        let d = DVector::from_vec(vec![1.0 - tm.rho * tm.rho, (1.0 - tm.rho * tm.rho) * a]);
        za.axpy(p * q1, &d, 1.0);
        ha.ger(p * q0, &d, &d, 1.0);
    }
    Ok((zb, za, hb, ha))
}

/// Augmentation term of one cluster: the mixture over both treatment levels of
/// the outcome-model predictions minus the treatment-model ones.
pub fn augmentation_term(
    cluster: &ClusterData,
    tm_theta: &ParameterVector,
    om_spec: &ModelSpec,
    om_theta: &ParameterVector,
    p_a: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m0 = predict_mean_at(om_spec, om_theta, cluster, 0.0)?;
    let m1 = predict_mean_at(om_spec, om_theta, cluster, 1.0)?;
    let r0 = predict_corr_at(om_spec, om_theta, cluster, 0.0)?;
    let r1 = predict_corr_at(om_spec, om_theta, cluster, 1.0)?;
    let all: Vec<usize> = (0..cluster.size()).collect();
    let (zb, za, _, _) = zeta_cluster(
        cluster,
        tm_theta,
        [&m0, &m1],
        [r0, r1],
        p_a,
        &all,
        |_| 1.0,
        |_, _| 1.0,
    )?;
    Ok((zb, za))
}

impl<'d> TreatmentEquation<'d> {
    pub fn complete_case(data: &'d Dataset) -> Result<Self> {
        Self::new(data, Weighting::CompleteCase, None)
    }

    pub fn ipw(data: &'d Dataset, mode: IpwMode, psm: PsmPredictions) -> Result<Self> {
        Self::new(data, Weighting::Ipw { mode, psm }, None)
    }

    pub fn doubly_robust(
        data: &'d Dataset,
        mode: IpwMode,
        psm: PsmPredictions,
        om: OmPredictions,
    ) -> Result<Self> {
        Self::new(data, Weighting::Ipw { mode, psm }, Some(om))
    }

    pub fn new(
        data: &'d Dataset,
        weighting: Weighting,
        augmentation: Option<OmPredictions>,
    ) -> Result<Self> {
        if !data.has_both_arms() {
            return Err(Error::InvalidData(
                "treatment model needs clusters in both arms".into(),
            ));
        }
        if augmentation.is_some() && weighting == Weighting::CompleteCase {
            return Err(Error::Config(
                "augmentation requires inverse-probability weights".into(),
            ));
        }
        Ok(Self {
            data,
            weighting,
            augmentation,
            p_a: data.p_a(),
            pool: IndexPool::new(data.max_cluster_size()),
        })
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn with_p_a(mut self, p_a: f64) -> Self {
        self.p_a = p_a;
        self
    }

    fn working_size(&self, i: usize) -> usize {
        let c = self.data.cluster(i);
        match self.weighting {
            Weighting::CompleteCase => c.n_observed(),
            Weighting::Ipw { .. } => c.size(),
        }
    }

    #[inline]
    fn first_weight(&self, i: usize, j: usize) -> f64 {
        match &self.weighting {
            Weighting::CompleteCase => 1.0,
            Weighting::Ipw { psm, .. } => psm.first(i, j),
        }
    }

    #[inline]
    fn pair_weight(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        match &self.weighting {
            Weighting::CompleteCase => Ok(1.0),
            Weighting::Ipw { mode, psm } => psm.pair(*mode, i, j, k),
        }
    }

    /// Augmentation sums for cluster `i` over the subjects in `set`, with
    /// first-order weights `w1(j)` and pair weights `w2(j, k)` on pairs within `set`.
    ///
    /// Returns `(zeta_beta, zeta_alpha, h_beta, h_alpha)`, the information terms
    /// carrying the same weights.
    pub fn zeta_with<F1, F2>(
        &self,
        i: usize,
        theta: &ParameterVector,
        set: &[usize],
        w1: F1,
        w2: F2,
    ) -> Result<ZetaParts>
    where
        F1: Fn(usize) -> f64,
        F2: Fn(usize, usize) -> f64,
    {
        let om = self
            .augmentation
            .as_ref()
            .ok_or_else(|| Error::Config("equation has no outcome model".into()))?;
        zeta_cluster(
            self.data.cluster(i),
            theta,
            [om.mean(0, i), om.mean(1, i)],
            [om.rho(0, i), om.rho(1, i)],
            self.p_a,
            set,
            w1,
            w2,
        )
    }

    pub fn observed_count(&self, i: usize) -> usize {
        self.data.cluster(i).n_observed()
    }

    pub fn cluster_size(&self, i: usize) -> usize {
        self.data.cluster(i).size()
    }

    /// `1 / pi_j`, or 1 without inverse-probability weights.
    pub fn ipw_first(&self, i: usize, j: usize) -> f64 {
        self.first_weight(i, j)
    }

    /// `1 / eta_jk`, or 1 without inverse-probability weights.
    pub fn ipw_pair(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.pair_weight(i, j, k)
    }

    /// Deterministic augmentation term of cluster `i`.
    pub fn augmentation_term(
        &self,
        i: usize,
        theta: &ParameterVector,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let all = self.all_indices(i);
        let (zb, za, _, _) = self.zeta_with(i, theta, all, |_| 1.0, |_, _| 1.0)?;
        Ok((zb, za))
    }
}

impl EstimatingEquation for TreatmentEquation<'_> {
    fn stage(&self) -> Stage {
        Stage::Tm
    }

    fn dims(&self) -> (usize, usize) {
        (2, 2)
    }

    fn n_clusters(&self) -> usize {
        self.data.len()
    }

    fn universe(&self, i: usize) -> &[usize] {
        self.data.cluster(i).observed()
    }

    fn all_indices(&self, i: usize) -> &[usize] {
        self.pool.upto(self.data.cluster(i).size())
    }

    fn augmented(&self) -> bool {
        self.augmentation.is_some()
    }

    fn cluster_score(&self, i: usize, theta: &ParameterVector, draw: &Draw<'_>) -> Result<Score> {
        let cluster = self.data.cluster(i);
        let a = cluster.a();
        let tm = arm(theta, a, cluster)?;
        let mut out = Score::zeros(2, 2);
        let nw = self.working_size(i);
        let om = self.augmentation.as_ref();
        let arm_idx = usize::from(cluster.treatment());

        if nw > 0 && !draw.first.is_empty() {
            let (ca, cb) = equicorr_coefficients(tm.rho, nw)?;
            let k1 = ca + cb * nw as f64;
            let f1 = draw.first_scale;
            let y = cluster.y();
            let om_means = om.map(|o| o.mean(arm_idx, i));

            // first-order residuals against the outcome model (augmented) or pi*
            let mut se = 0.0;
            let mut sw = 0.0;
            let mut eps = Vec::with_capacity(draw.first.len());
            let mut wj = Vec::with_capacity(draw.first.len());
            for &j in draw.first {
                let yj = f64::from(u8::from(
                    y[j].expect("treatment equation reads observed subjects only"),
                ));
                let w = f1 * self.first_weight(i, j);
                let centre = om_means.map_or(tm.pi, |m| m[j]);
                se += w * (yj - centre) / tm.su;
                sw += w;
                eps.push((yj - tm.pi) / tm.su);
                wj.push(j);
            }
            let delta = DVector::from_vec(vec![tm.su, tm.su * a]);
            out.g_beta.axpy(k1 * se, &delta, 1.0);
            if om.is_none() {
                out.h_beta.ger(k1 * sw, &delta, &delta, 1.0);
            }

            let m = eps.len();
            if m >= 2 {
                let f2 = draw.pair_scale;
                let mut s1 = 0.0;
                let mut s0 = 0.0;
                match om {
                    None => {
                        for x in 0..m {
                            for z in x + 1..m {
                                let w = self.pair_weight(i, wj[x], wj[z])?;
                                s1 += w * (eps[x] * eps[z] - tm.rho);
                                s0 += w;
                            }
                        }
                    }
                    Some(o) => {
                        let means = o.mean(arm_idx, i);
                        let rho_bar = o.rho(arm_idx, i);
                        let cvec: Vec<f64> =
                            wj.iter().map(|&j| (means[j] - tm.pi) / tm.su).collect();
                        let tvec: Vec<f64> = wj
                            .iter()
                            .map(|&j| (means[j] * (1.0 - means[j])).sqrt() / tm.su)
                            .collect();
                        for x in 0..m {
                            for z in x + 1..m {
                                let w = self.pair_weight(i, wj[x], wj[z])?;
                                let target = cvec[x] * cvec[z] + rho_bar * tvec[x] * tvec[z];
                                s1 += w * (eps[x] * eps[z] - target);
                            }
                        }
                    }
                }
                let d = DVector::from_vec(vec![1.0 - tm.rho * tm.rho, (1.0 - tm.rho * tm.rho) * a]);
                out.g_alpha.axpy(f2 * s1, &d, 1.0);
                if om.is_none() {
                    out.h_alpha.ger(f2 * s0, &d, &d, 1.0);
                }
            }
        }

        if om.is_some() {
            let (f1, f2) = (draw.aug_first_scale, draw.aug_pair_scale);
            let (zb, za, hb, ha) = self.zeta_with(i, theta, draw.aug, |_| f1, |_, _| f2)?;
            out.g_beta += zb;
            out.g_alpha += za;
            out.h_beta += hb;
            out.h_alpha += ha;
        }
        Ok(out)
    }
}

//! GEE2 for the conditional models: missingness indicators on every subject,
//! or outcomes on the observed subjects.

use nalgebra::{DMatrix, DVector};

use super::equation::{Draw, EstimatingEquation, IndexPool};
use super::scoring::Score;
use crate::error::{Error, Result, Stage};
use crate::math::equicorr_coefficients;
use crate::model::{checked_corr, checked_mean, dot, Dataset, ModelSpec, ParameterVector, Target};

/// Estimating equations of a propensity or outcome model. The working set of
/// a cluster (all subjects for the propensity model, observed subjects for the
/// outcome model) is also the sampling universe.
#[derive(Debug, Clone)]
pub struct ConditionalEquation<'d> {
    data: &'d Dataset,
    spec: ModelSpec,
    designs: Vec<Vec<f64>>,
    corr_rows: Vec<Vec<f64>>,
    working: Vec<Vec<usize>>,
    pool: IndexPool,
}

impl<'d> ConditionalEquation<'d> {
    pub fn new(data: &'d Dataset, spec: &ModelSpec) -> Result<Self> {
        if spec.target() == Target::Treatment {
            return Err(Error::Config(
                "conditional equation needs a propensity or outcome spec".into(),
            ));
        }
        spec.validate(data.n_z(), data.n_x())?;
        let designs = data
            .clusters()
            .iter()
            .map(|c| spec.mean_design(c, c.a()))
            .collect();
        let corr_rows = data
            .clusters()
            .iter()
            .map(|c| spec.corr_row(c, c.a()))
            .collect();
        let working = data
            .clusters()
            .iter()
            .map(|c| match spec.target() {
                Target::Propensity => (0..c.size()).collect(),
                _ => c.observed().to_vec(),
            })
            .collect();
        Ok(Self {
            data,
            spec: spec.clone(),
            designs,
            corr_rows,
            working,
            pool: IndexPool::new(data.max_cluster_size()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    #[inline]
    fn response(&self, i: usize, j: usize) -> f64 {
        let c = self.data.cluster(i);
        match self.spec.target() {
            Target::Propensity => f64::from(u8::from(c.r(j))),
            _ => f64::from(u8::from(
                c.y()[j].expect("outcome equation reads observed subjects only"),
            )),
        }
    }

    /// Errors when the response is constant over every working set.
    pub fn check_variation(&self) -> Result<()> {
        let mut seen = [false, false];
        for i in 0..self.data.len() {
            for &j in &self.working[i] {
                seen[self.response(i, j) as usize] = true;
            }
        }
        if seen[0] && seen[1] {
            return Ok(());
        }
        let stage = self.stage();
        let what = if stage == Stage::Psm {
            "missingness indicator"
        } else {
            "observed outcome"
        };
        Err(Error::Separation {
            stage,
            detail: format!("{what} takes a single value"),
        })
    }
}

impl EstimatingEquation for ConditionalEquation<'_> {
    fn stage(&self) -> Stage {
        match self.spec.target() {
            Target::Propensity => Stage::Psm,
            _ => Stage::Om,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.spec.dim_beta(), self.spec.dim_alpha())
    }

    fn n_clusters(&self) -> usize {
        self.data.len()
    }

    fn universe(&self, i: usize) -> &[usize] {
        &self.working[i]
    }

    fn all_indices(&self, i: usize) -> &[usize] {
        self.pool.upto(self.data.cluster(i).size())
    }

    fn cluster_score(&self, i: usize, theta: &ParameterVector, draw: &Draw<'_>) -> Result<Score> {
        let (pb, pa) = self.dims();
        let mut out = Score::zeros(pb, pa);
        let working = &self.working[i];
        let nw = working.len();
        if nw == 0 {
            return Ok(out);
        }
        let cluster = self.data.cluster(i);
        let design = &self.designs[i];
        let zrow = &self.corr_rows[i];
        let rho = checked_corr(dot(zrow, &theta.alpha), cluster)?;
        let (ca, cb) = equicorr_coefficients(rho, nw)?;

        // standardized design rows sqrt(u_j) x_j and residuals, indexed by subject
        let n = cluster.size();
        let mut su = vec![0.0; n];
        let mut means = vec![0.0; n];
        let mut sum_d = DVector::<f64>::zeros(pb);
        for &j in working {
            let x = &design[j * pb..(j + 1) * pb];
            let mu = checked_mean(dot(x, &theta.beta), cluster)?;
            let s = (mu * (1.0 - mu)).sqrt();
            su[j] = s;
            means[j] = mu;
            for k in 0..pb {
                sum_d[k] += s * x[k];
            }
        }

        let f1 = draw.first_scale;
        let mut resid = vec![0.0; draw.first.len()];
        let mut sum_e = 0.0;
        let mut sum_wd = DVector::<f64>::zeros(pb);
        let mut dj = DVector::<f64>::zeros(pb);
        let mut hd = DMatrix::<f64>::zeros(pb, pb);
        for (pos, &j) in draw.first.iter().enumerate() {
            let x = &design[j * pb..(j + 1) * pb];
            let s = su[j];
            let e = (self.response(i, j) - means[j]) / s;
            resid[pos] = e;
            for k in 0..pb {
                dj[k] = s * x[k];
            }
            out.g_beta.axpy(ca * f1 * e, &dj, 1.0);
            sum_e += f1 * e;
            hd.ger(ca * f1, &dj, &dj, 1.0);
            sum_wd.axpy(f1, &dj, 1.0);
        }
        out.g_beta.axpy(cb * sum_e, &sum_d, 1.0);
        hd.ger(cb, &sum_d, &sum_wd, 1.0);
        out.h_beta = hd;

        let m = resid.len();
        if m >= 2 {
            let mut s1 = 0.0;
            for a in 0..m {
                let ea = resid[a];
                for b in a + 1..m {
                    s1 += ea * resid[b] - rho;
                }
            }
            let npairs = (m * (m - 1) / 2) as f64;
            let f2 = draw.pair_scale;
            let d = DVector::from_iterator(pa, zrow.iter().map(|z| (1.0 - rho * rho) * z));
            out.g_alpha = &d * (f2 * s1);
            out.h_alpha = &d * d.transpose() * (f2 * npairs);
        }
        Ok(out)
    }
}

//! The simulation design's covariate laws and linear predictors, written
//! out independently of the generator.

use gee2::simgen::Coefficients;
use rand::{Rng, RngExt};

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Covariate draws and linear predictors written out from the design table.
pub struct Sampler {
    pub c: Coefficients,
}

impl Sampler {
    pub fn z<R: Rng>(rng: &mut R) -> f64 {
        rng.random_range(81..=140) as f64
    }

    pub fn x<R: Rng>(rng: &mut R) -> [f64; 3] {
        [
            rng.random_range(20.0..60.0),
            rng.random_range(1..=9) as f64,
            rng.random_range(4.0..25.0),
        ]
    }

    pub fn pi(&self, a: f64, z: f64, x: &[f64; 3]) -> f64 {
        let c = &self.c;
        let mut eta = c.intercept + a * c.treatment + z * (c.z[0] + a * c.z_treatment[0]);
        for l in 0..3 {
            eta += x[l] * (c.x[l] + a * c.x_treatment[l]);
        }
        expit(eta)
    }

    pub fn rho(&self, a: f64, z: f64) -> f64 {
        let c = &self.c;
        (c.alpha_intercept
            + a * c.alpha_treatment
            + z * (c.alpha_z[0] + a * c.alpha_z_treatment[0]))
            .tanh()
    }
}

/// Extremes of the conditional mean over the corners of the covariate support.
pub fn pi_support(s: &Sampler) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in [0.0, 1.0] {
        for z in [81.0, 140.0] {
            for corner in 0..8 {
                let pick = |k: usize, l: f64, h: f64| if corner >> k & 1 == 1 { h } else { l };
                let p = s.pi(
                    a,
                    z,
                    &[pick(0, 20.0, 60.0), pick(1, 1.0, 9.0), pick(2, 4.0, 25.0)],
                );
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
    }
    (lo, hi)
}

//! Logit and Fisher-z links with their inverses.

use crate::error::{Error, Result};

/// Inputs this close to ±1 are rejected by [`fisher_z`].
pub const FISHER_Z_EDGE: f64 = 1e-12;

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of `p`.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            func: "logit",
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok((p / (1.0 - p)).ln())
}

/// Fisher z-transform, `atanh(r)`.
pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0 - FISHER_Z_EDGE) {
        return Err(Error::Domain {
            func: "fisher_z",
            value: r,
            domain: "(-1, 1)",
        });
    }
    Ok(r.atanh())
}

/// Inverse Fisher z-transform, `tanh(z)`.
#[inline]
pub fn inv_fisher_z(z: f64) -> f64 {
    z.tanh()
}

//! Equicorrelated covariance `V = U^{1/2} C U^{1/2}`, `C = (1 - rho) I + rho J`,
//! with the inverse kept in closed form `C^{-1} = a I + b J`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Boundary margin for positive definiteness of `C`.
const PD_MARGIN: f64 = 1e-12;

/// Returns `(a, b)` with `C^{-1} = a I + b J` for an `n x n` equicorrelation matrix.
#[inline]
pub fn equicorr_coefficients(rho: f64, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Shape("equicorrelated matrix of size 0".into()));
    }
    if !rho.is_finite() {
        return Err(Error::Singular { rho, n });
    }
    if n == 1 {
        return Ok((1.0, 0.0));
    }
    let one_minus = 1.0 - rho;
    let spread = 1.0 + (n as f64 - 1.0) * rho;
    if one_minus <= PD_MARGIN || spread <= PD_MARGIN {
        return Err(Error::Singular { rho, n });
    }
    let a = 1.0 / one_minus;
    let b = -rho / (one_minus * spread);
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquicorrelatedCovariance {
    rho: f64,
    u: Vec<f64>,
}

impl EquicorrelatedCovariance {
    pub fn new(rho: f64, u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Shape("equicorrelated matrix of size 0".into()));
        }
        if let Some(&bad) = u.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain {
                func: "EquicorrelatedCovariance::new",
                value: bad,
                domain: "(0, inf)",
            });
        }
        equicorr_coefficients(rho, u.len())?;
        Ok(Self { rho, u })
    }

    /// Unit variances, so `V = C`.
    pub fn correlation(rho: f64, n: usize) -> Result<Self> {
        Self::new(rho, vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn inverse(&self) -> EquicorrInverse {
        let (a, b) = equicorr_coefficients(self.rho, self.n()).expect("validated at construction");
        EquicorrInverse {
            a,
            b,
            inv_sqrt_u: self.u.iter().map(|v| 1.0 / v.sqrt()).collect(),
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let c = if i == j { 1.0 } else { self.rho };
            c * (self.u[i] * self.u[j]).sqrt()
        })
    }
}

/// `V^{-1} = U^{-1/2} (a I + b J) U^{-1/2}`, never densified unless asked.
#[derive(Debug, Clone, PartialEq)]
pub struct EquicorrInverse {
    a: f64,
    b: f64,
    inv_sqrt_u: Vec<f64>,
}

/// Computes `(a, b)` coefficients and the closed-form inverse of an equicorrelated covariance.
pub fn invert_equicorrelated(cov: &EquicorrelatedCovariance) -> Result<EquicorrInverse> {
    equicorr_coefficients(cov.rho, cov.n())?;
    Ok(cov.inverse())
}

impl EquicorrInverse {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn inv_sqrt_u(&self) -> &[f64] {
        &self.inv_sqrt_u
    }

    pub fn n(&self) -> usize {
        self.inv_sqrt_u.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::Shape(format!(
                "vector of length {} against n = {}",
                x.len(),
                n
            )));
        }
        let scaled: Vec<f64> = (0..n).map(|i| x[i] * self.inv_sqrt_u[i]).collect();
        let total: f64 = scaled.iter().sum();
        Ok(DVector::from_fn(n, |i, _| {
            self.inv_sqrt_u[i] * (self.a * scaled[i] + self.b * total)
        }))
    }

    /// `V^{-1} M` in `O(n * cols)`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        if m.nrows() != n {
            return Err(Error::Shape(format!(
                "matrix with {} rows against n = {}",
                m.nrows(),
                n
            )));
        }
        let mut out = DMatrix::zeros(n, m.ncols());
        for c in 0..m.ncols() {
            let mut total = 0.0;
            for i in 0..n {
                total += m[(i, c)] * self.inv_sqrt_u[i];
            }
            for i in 0..n {
                let s = m[(i, c)] * self.inv_sqrt_u[i];
                out[(i, c)] = self.inv_sqrt_u[i] * (self.a * s + self.b * total);
            }
        }
        Ok(out)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let c = if i == j { self.a + self.b } else { self.b };
            c * self.inv_sqrt_u[i] * self.inv_sqrt_u[j]
        })
    }
}

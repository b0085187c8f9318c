//! Diagonal weights and the product `M diag(w) N` restricted to the support of `w`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Nonnegative diagonal with its support (indices of positive entries) cached.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalWeight {
    entries: Vec<f64>,
    support: Vec<usize>,
}

impl DiagonalWeight {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        for &e in &entries {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::Domain {
                    func: "DiagonalWeight::new",
                    value: e,
                    domain: "[0, inf)",
                });
            }
        }
        let support = entries
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { entries, support })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            entries: vec![1.0; len],
            support: (0..len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }
}

/// `M diag(w) N` using only the columns of `M` and rows of `N` in the support of `w`.
pub fn sparse_weighted_product(
    m: &DMatrix<f64>,
    w: &DiagonalWeight,
    n: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if m.ncols() != w.len() || n.nrows() != w.len() {
        return Err(Error::Shape(format!(
            "{}x{} * diag({}) * {}x{}",
            m.nrows(),
            m.ncols(),
            w.len(),
            n.nrows(),
            n.ncols()
        )));
    }
    let mut out = DMatrix::zeros(m.nrows(), n.ncols());
    for &k in w.support() {
        let wk = w.get(k);
        for c in 0..n.ncols() {
            let nk = wk * n[(k, c)];
            if nk == 0.0 {
                continue;
            }
            for r in 0..m.nrows() {
                out[(r, c)] += m[(r, k)] * nk;
            }
        }
    }
    Ok(out)
}

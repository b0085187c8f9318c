//! Small dense helpers for the Fisher-scoring updates.

use nalgebra::{DMatrix, DVector};

/// Ratio of extreme singular values; infinite for singular or non-finite input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `h x = g`; `None` when `h` is singular.
pub fn solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if h.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    h.clone().lu().solve(g)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.5]));
        assert!((condition_number(&m) - 8.0).abs() < 1e-12);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_number(&s) > 1e15);
    }
}

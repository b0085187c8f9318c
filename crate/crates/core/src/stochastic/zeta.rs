//! Subsampled augmentation terms. `Z3` draws its own sample over every subject
//! and is unbiased; `Z1` and `Z2` reuse the sample of observed subjects and
//! are not.

use nalgebra::DVector;

use super::sampling::{first_inflation, pair_inflation};
use crate::error::{Error, Result};
use crate::estimators::TreatmentEquation;
use crate::model::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaVariant {
    /// Inverse-probability weights on the observed-subject sample.
    Z1,
    /// Unweighted sums on the observed-subject sample.
    Z2,
    /// Independent sample `s_prime` over all subjects.
    Z3,
}

/// Subsampled augmentation term of cluster `i`.
///
/// `s` is the sample of observed subjects (size `upsilon` of `m`), `s_prime`
/// the independent sample of all `n` subjects.
pub fn stochastic_zeta(
    eq: &TreatmentEquation<'_>,
    i: usize,
    theta: &ParameterVector,
    s: &[usize],
    s_prime: &[usize],
    variant: ZetaVariant,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = eq.observed_count(i);
    let n = eq.cluster_size(i);
    let (zb, za) = match variant {
        ZetaVariant::Z3 => {
            if s_prime.len() < 2 && n >= 2 {
                return Err(Error::Sampling(
                    "pairwise terms need at least two sampled subjects".into(),
                ));
            }
            let (f1, f2) = (
                first_inflation(n, s_prime.len()),
                pair_inflation(n, s_prime.len()),
            );
            let (zb, za, _, _) = eq.zeta_with(i, theta, s_prime, |_| f1, |_, _| f2)?;
            (zb, za)
        }
        ZetaVariant::Z2 => {
            let (f1, f2) = (first_inflation(m, s.len()), pair_inflation(m, s.len()));
            let (zb, za, _, _) = eq.zeta_with(i, theta, s, |_| f1, |_, _| f2)?;
            (zb, za)
        }
        ZetaVariant::Z1 => {
            let (f1, f2) = (first_inflation(m, s.len()), pair_inflation(m, s.len()));
            let w1 = |j: usize| f1 * eq.ipw_first(i, j);
            let w2 = |j: usize, k: usize| f2 * eq.ipw_pair(i, j, k).unwrap_or(f64::NAN);
            let (zb, za, _, _) = eq.zeta_with(i, theta, s, w1, w2)?;
            (zb, za)
        }
    };
    Ok((zb, za))
}

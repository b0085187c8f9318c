//! Links, equicorrelation algebra, and weighted products.

pub mod dense;
pub mod equicorr;
pub mod links;
pub mod pairs;
pub mod sparse;

pub use equicorr::{
    equicorr_coefficients, invert_equicorrelated, EquicorrInverse, EquicorrelatedCovariance,
};
pub use links::{expit, fisher_z, inv_fisher_z, logit};
pub use pairs::{pair_count, pair_enumerate, pair_position, PairIndex};
pub use sparse::{sparse_weighted_product, DiagonalWeight};

//! Simple random sampling without replacement and the weights it induces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{pair_count, pair_position, DiagonalWeight};

/// Uniform subset of `universe` of size `upsilon`, returned in ascending order.
pub fn srswor<R: Rng + ?Sized>(
    universe: &[usize],
    upsilon: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if upsilon == 0 || upsilon > universe.len() {
        return Err(Error::Sampling(format!(
            "cannot draw {upsilon} of {} units",
            universe.len()
        )));
    }
    if upsilon == universe.len() {
        return Ok(universe.to_vec());
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, universe.len(), upsilon)
        .into_iter()
        .map(|p| universe[p])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// `ceil(pi_s m)`, at least 2 when `m >= 2` so pair inflation is defined.
pub fn subsample_size(pi_s: f64, m: usize) -> usize {
    if m == 0 {
        return 0;
    }
    // guard against 0.3 * 30 = 9.000000000000002
    let raw = (pi_s * m as f64 - 1e-9).ceil().max(1.0) as usize;
    let floor = if m >= 2 { 2 } else { 1 };
    raw.clamp(floor, m)
}

/// First-order inflation `m / upsilon`.
pub fn first_inflation(m: usize, upsilon: usize) -> f64 {
    if upsilon == 0 {
        0.0
    } else {
        m as f64 / upsilon as f64
    }
}

/// Pair inflation `m(m-1) / (upsilon(upsilon-1))`; zero when no pair can be sampled.
pub fn pair_inflation(m: usize, upsilon: usize) -> f64 {
    if upsilon < 2 {
        0.0
    } else {
        (m * (m - 1)) as f64 / (upsilon * (upsilon - 1)) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Restricts `w` to the sample `s` (or to pairs within it) and inflates by the
/// inverse inclusion probability.
pub fn induced_weights(
    w: &DiagonalWeight,
    s: &[usize],
    m: usize,
    upsilon: usize,
    order: Order,
) -> Result<DiagonalWeight> {
    if s.len() != upsilon {
        return Err(Error::Sampling(format!(
            "sample of size {} but upsilon = {upsilon}",
            s.len()
        )));
    }
    let mut out = vec![0.0; w.len()];
    match order {
        Order::First => {
            let f = first_inflation(m, upsilon);
            for &j in s {
                if j >= w.len() {
                    return Err(Error::Shape(format!(
                        "index {j} outside weight of length {}",
                        w.len()
                    )));
                }
                out[j] = f * w.get(j);
            }
        }
        Order::Second => {
            if upsilon < 2 {
                return Err(Error::Sampling(
                    "pairwise weights need at least two sampled units".into(),
                ));
            }
            let n = pairs_to_size(w.len())?;
            let f = pair_inflation(m, upsilon);
            for (x, &j) in s.iter().enumerate() {
                for &k in &s[x + 1..] {
                    if k >= n {
                        return Err(Error::Shape(format!(
                            "index {k} outside cluster of size {n}"
                        )));
                    }
                    let p = pair_position(n, j, k);
                    out[p] = f * w.get(p);
                }
            }
        }
    }
    DiagonalWeight::new(out)
}

fn pairs_to_size(len: usize) -> Result<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    if pair_count(n) != len {
        return Err(Error::Shape(format!("{len} is not a pair count")));
    }
    Ok(n)
}

/// Independent substream for `(seed, chain, purpose)`.
pub fn stream(seed: u64, chain: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain.wrapping_mul(64).wrapping_add(purpose));
    rng
}

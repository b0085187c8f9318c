//! Lexicographic enumeration of within-cluster pairs `(j, k)`, `j < k`, zero-based.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }
}

pub fn pair_enumerate(n: usize) -> PairIndex {
    let mut pairs = Vec::with_capacity(pair_count(n));
    for j in 0..n {
        for k in j + 1..n {
            pairs.push((j, k));
        }
    }
    PairIndex { n, pairs }
}

#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of `(j, k)`, `j < k < n`, in the lexicographic order.
#[inline]
pub fn pair_position(n: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < n);
    j * (2 * n - j - 1) / 2 + (k - j - 1)
}

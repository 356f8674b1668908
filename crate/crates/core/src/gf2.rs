//! Small dense GF(2) helpers shared by the flow solver and the tableau.

/// Number of 64-bit words needed for `bits` bits.
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64).max(1)
}

/// Sets bit `i`.
#[inline]
pub(crate) fn set(v: &mut [u64], i: usize) {
    v[i / 64] |= 1 << (i % 64);
}

/// Toggles bit `i`.
#[inline]
pub(crate) fn flip(v: &mut [u64], i: usize) {
    v[i / 64] ^= 1 << (i % 64);
}

/// Reads bit `i`.
#[inline]
pub(crate) fn get(v: &[u64], i: usize) -> bool {
    v[i / 64] >> (i % 64) & 1 == 1
}

/// `a ^= b`.
#[inline]
pub(crate) fn xor_into(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x ^= y;
    }
}

/// True if no bit is set.
#[inline]
pub(crate) fn is_zero(v: &[u64]) -> bool {
    v.iter().all(|&w| w == 0)
}

/// Index of the highest set bit.
pub(crate) fn highest(v: &[u64]) -> Option<usize> {
    v.iter().enumerate().rev().find(|(_, &w)| w != 0).map(|(i, &w)| i * 64 + 63 - w.leading_zeros() as usize)
}

/// Iterates over set bit indices in increasing order.
pub(crate) fn ones(v: &[u64]) -> impl Iterator<Item = usize> + '_ {
    v.iter().enumerate().flat_map(|(wi, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(wi * 64 + b)
        })
    })
}

/// Incremental Gaussian elimination that remembers, for every basis vector,
/// which input columns were combined to produce it.
pub(crate) struct Eliminator {
    vectors: Vec<Vec<u64>>,
    combos: Vec<Vec<u64>>,
    pivot_of: std::collections::HashMap<usize, usize>,
}

impl Eliminator {
    pub(crate) fn new() -> Self {
        Eliminator { vectors: Vec::new(), combos: Vec::new(), pivot_of: Default::default() }
    }

    /// Reduces `v` against the basis, accumulating used combinations into
    /// `combo`. Returns true if `v` reduced to zero.
    pub(crate) fn reduce(&self, v: &mut [u64], combo: &mut [u64]) -> bool {
        while let Some(p) = highest(v) {
            match self.pivot_of.get(&p) {
                Some(&bi) => {
                    xor_into(v, &self.vectors[bi]);
                    xor_into(combo, &self.combos[bi]);
                }
                None => return false,
            }
        }
        true
    }

    /// Adds an already reduced, nonzero vector to the basis.
    pub(crate) fn insert(&mut self, v: Vec<u64>, combo: Vec<u64>) {
        let p = highest(&v).expect("inserted vector must be nonzero");
        self.pivot_of.insert(p, self.vectors.len());
        self.vectors.push(v);
        self.combos.push(combo);
    }
}

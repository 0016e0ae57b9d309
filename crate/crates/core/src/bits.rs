//! Fixed-length bitsets used as per-hyperplane sign rows and label masks.
//!
//! One bit per data point keeps maxout evaluation a word-parallel
//! union/intersection followed by a popcount.

/// A fixed-length bitset backed by `u64` words.
///
/// Bits past `len` are kept zero so popcounts never need a trailing mask.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits { words: vec![0; word_count(len)], len }
    }

    /// Builds a bitset by evaluating `f` at every index.
    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut b = Bits::zeros(len);
        for i in 0..len {
            if f(i) {
                b.set(i, true);
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Raw words; bits past `len` are zero.
    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Mask selecting the valid bits of word `wi`.
    #[inline]
    pub fn tail_mask(&self, wi: usize) -> u64 {
        let full = self.len / 64;
        if wi < full {
            !0
        } else {
            let rem = self.len % 64;
            if rem == 0 { 0 } else { (1u64 << rem) - 1 }
        }
    }

    /// Complement within the fixed length.
    pub fn not(&self) -> Bits {
        let mut out = self.clone();
        for wi in 0..out.words.len() {
            out.words[wi] = !out.words[wi] & self.tail_mask(wi);
        }
        out
    }

    pub fn or_assign(&mut self, other: &Bits) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn and_assign(&mut self, other: &Bits) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    /// popcount(self XOR other) — the number of positions where the two
    /// bitsets disagree.
    pub fn count_diff(&self, other: &Bits) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }
}

impl std::fmt::Debug for Bits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Bits[")?;
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        write!(f, "]")
    }
}

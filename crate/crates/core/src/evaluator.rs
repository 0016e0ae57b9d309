//! Network evaluation: prediction rows per hyperplane, 0-1 losses per
//! configuration, sign-assignment enumeration, and the minimum fold.

use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::sync::OnceLock;

use smallvec::SmallVec;

use crate::bits::Bits;
use crate::combinatorics::unrank_combination;
use crate::error::{Error, Result};
use crate::geometry;
use crate::model::{Activation, Config, Dataset, ScoredConfig};

/// One prediction row: the sign masks of a hyperplane over the dataset,
/// plus the raw dot products when relu evaluation needs them.
#[derive(Clone, Debug)]
pub struct CacheRow {
    pub nonneg: Bits,
    pub strictpos: Bits,
    pub dots: Option<Box<[f64]>>,
}

impl CacheRow {
    /// The row of the same hyperplane with its normal negated: the strict
    /// positive side becomes the strict negative side and the on-plane band
    /// stays put.
    pub fn negated(&self) -> CacheRow {
        CacheRow {
            nonneg: self.strictpos.not(),
            strictpos: self.nonneg.not(),
            dots: self.dots.as_ref().map(|d| d.iter().map(|v| -v).collect()),
        }
    }
}

enum Store {
    /// Preallocated row per rank; rows are written once at creation and
    /// read lock-free afterwards.
    Materialized(Vec<OnceLock<CacheRow>>),
    /// Nothing stored: rows are rebuilt from their rank on every access.
    OnDemand { ds: Arc<Dataset>, epsilon: f64 },
}

/// Hyperplane predictions indexed by rank.
///
/// Rows are appended once (by whichever merge creates the hyperplane) and
/// shared read-only across workers afterwards.
pub struct PredictionCache {
    n: usize,
    d: usize,
    with_dots: bool,
    store: Store,
    created: AtomicU64,
}

/// A cache row access: borrowed from a materialized cache, or rebuilt on
/// the fly in on-demand mode.
pub enum RowRef<'a> {
    Borrowed(&'a CacheRow),
    Owned(Box<CacheRow>),
}

impl Deref for RowRef<'_> {
    type Target = CacheRow;

    fn deref(&self) -> &CacheRow {
        match self {
            RowRef::Borrowed(r) => r,
            RowRef::Owned(r) => r,
        }
    }
}

impl PredictionCache {
    /// Cache with one preallocated slot per possible hyperplane rank.
    pub fn materialized(n: usize, d: usize, capacity: u64, with_dots: bool) -> Result<Self> {
        let cap = usize::try_from(capacity)
            .map_err(|_| Error::MemoryCapExceeded { needed: capacity as u128, cap: u64::MAX })?;
        let mut rows = Vec::new();
        rows.try_reserve_exact(cap).map_err(|_| Error::MemoryCapExceeded {
            needed: capacity as u128 * std::mem::size_of::<OnceLock<CacheRow>>() as u128,
            cap: u64::MAX,
        })?;
        rows.resize_with(cap, OnceLock::new);
        Ok(PredictionCache { n, d, with_dots, store: Store::Materialized(rows), created: AtomicU64::new(0) })
    }

    /// Cache that stores nothing and refits hyperplanes from their ranks on
    /// every access. Costs Θ(K) unrank steps plus a refit per evaluation.
    pub fn on_demand(ds: Arc<Dataset>, epsilon: f64, with_dots: bool) -> Self {
        let n = ds.len();
        let d = ds.dim();
        PredictionCache { n, d, with_dots, store: Store::OnDemand { ds, epsilon }, created: AtomicU64::new(0) }
    }

    pub fn points(&self) -> usize {
        self.n
    }

    pub fn with_dots(&self) -> bool {
        self.with_dots
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.store, Store::Materialized(_))
    }

    /// Number of hyperplanes created so far.
    pub fn created(&self) -> u64 {
        self.created.load(Ordering::Relaxed)
    }

    /// Records a newly created hyperplane row. Each rank is inserted at
    /// most once across the whole run.
    pub fn insert(&self, rank: u64, row: CacheRow) {
        self.created.fetch_add(1, Ordering::Relaxed);
        if let Store::Materialized(rows) = &self.store {
            debug_assert_eq!(row.dots.is_some(), self.with_dots);
            rows[rank as usize]
                .set(row)
                .unwrap_or_else(|_| panic!("hyperplane rank {rank} created twice"));
        }
    }

    pub fn row(&self, rank: u64) -> Result<RowRef<'_>> {
        match &self.store {
            Store::Materialized(rows) => rows
                .get(rank as usize)
                .and_then(|slot| slot.get())
                .map(RowRef::Borrowed)
                .ok_or(Error::CacheMiss(rank)),
            Store::OnDemand { ds, epsilon } => {
                let combo: Vec<usize> =
                    unrank_combination(rank, self.d).iter().map(|&v| v as usize).collect();
                let h = geometry::fit_and_sign(ds, &combo, *epsilon)?;
                let dots = self.with_dots.then(|| geometry::dot_row(&h.normal, ds).into_boxed_slice());
                Ok(RowRef::Owned(Box::new(CacheRow { nonneg: h.nonneg, strictpos: h.strictpos, dots })))
            }
        }
    }
}

/// Approximate bytes one materialized row costs, for memory-mode selection.
pub fn estimate_row_bytes(n: usize, with_dots: bool) -> u128 {
    let words = n.div_ceil(64) as u128;
    let bitsets = 2 * (words * 8 + 32);
    let dots = if with_dots { n as u128 * 8 + 16 } else { 0 };
    bitsets + dots + std::mem::size_of::<OnceLock<CacheRow>>() as u128
}

#[inline]
fn oriented_words(row: &CacheRow, sign: i8, wi: usize) -> (u64, u64) {
    let nn = row.nonneg.words()[wi];
    let sp = row.strictpos.words()[wi];
    if sign == 1 {
        (nn, sp)
    } else {
        (!sp, !nn)
    }
}

/// Fused maxout losses of an assignment and its negation.
///
/// The positive set under `signs` is the union of the oriented nonnegative
/// sides. Flipping every sign flips exactly the points that lie strictly on
/// one side of all K planes, so the negated assignment's positive set is
/// the complement of the intersection of the oriented strictly-positive
/// sides — no second union pass is needed.
pub fn maxout_losses_fused(rows: &[&CacheRow], signs: &[i8], labels_pos: &Bits) -> (u32, u32) {
    debug_assert_eq!(rows.len(), signs.len());
    let nw = labels_pos.words().len();
    let (mut loss, mut loss_neg) = (0u32, 0u32);
    for wi in 0..nw {
        let mut union_ = 0u64;
        let mut inter = !0u64;
        for (row, &s) in rows.iter().zip(signs) {
            let (npos, spos) = oriented_words(row, s, wi);
            union_ |= npos;
            inter &= spos;
        }
        let lab = labels_pos.words()[wi];
        let tail = labels_pos.tail_mask(wi);
        loss += ((union_ ^ lab) & tail).count_ones();
        loss_neg += ((!inter ^ lab) & tail).count_ones();
    }
    (loss, loss_neg)
}

/// Direct (unfused) maxout loss of one signed configuration.
pub fn maxout_loss_direct(rows: &[&CacheRow], signs: &[i8], labels_pos: &Bits) -> u32 {
    debug_assert_eq!(rows.len(), signs.len());
    let nw = labels_pos.words().len();
    let mut loss = 0u32;
    for wi in 0..nw {
        let mut union_ = 0u64;
        for (row, &s) in rows.iter().zip(signs) {
            union_ |= oriented_words(row, s, wi).0;
        }
        let lab = labels_pos.words()[wi];
        loss += ((union_ ^ lab) & labels_pos.tail_mask(wi)).count_ones();
    }
    loss
}

/// The maxout positive prediction set of one signed configuration.
pub fn maxout_positive_set(rows: &[&CacheRow], signs: &[i8]) -> Bits {
    let n = rows[0].nonneg.len();
    let mut out = Bits::zeros(n);
    for (row, &s) in rows.iter().zip(signs) {
        if s == 1 {
            out.or_assign(&row.nonneg);
        } else {
            out.or_assign(&row.strictpos.not());
        }
    }
    out
}

/// ReLU positive prediction set: point n is positive when
/// Σ_k z_k · max(0, d_{k,n}) >= 0 (a zero sum reads as +1).
pub fn relu_positive_set(rows: &[&CacheRow], signs: &[i8]) -> Result<Bits> {
    let n = rows[0].nonneg.len();
    let mut out = Bits::zeros(n);
    let dots: Vec<&[f64]> = rows
        .iter()
        .map(|r| r.dots.as_deref().ok_or(Error::MissingDots))
        .collect::<Result<_>>()?;
    for i in 0..n {
        let mut sum = 0.0f64;
        for (d, &z) in dots.iter().zip(signs) {
            sum += z as f64 * d[i].max(0.0);
        }
        if sum >= 0.0 {
            out.set(i, true);
        }
    }
    Ok(out)
}

/// ReLU 0-1 loss of one assignment of output signs.
pub fn relu_loss(rows: &[&CacheRow], signs: &[i8], labels_pos: &Bits) -> Result<u32> {
    Ok(relu_positive_set(rows, signs)?.count_diff(labels_pos) as u32)
}

/// A loss over prediction bitsets. 0-1 loss is the shipped instance;
/// anything scoring a positive-prediction set against the labels plugs in
/// the same way.
pub trait PredictionLoss {
    fn score(&self, positive: &Bits, labels_pos: &Bits) -> u32;
}

/// Misclassification count.
pub struct ZeroOne;

impl PredictionLoss for ZeroOne {
    fn score(&self, positive: &Bits, labels_pos: &Bits) -> u32 {
        positive.count_diff(labels_pos) as u32
    }
}

fn gather<'c>(cache: &'c PredictionCache, ranks: &[u64]) -> Result<SmallVec<[RowRef<'c>; 4]>> {
    ranks.iter().map(|&r| cache.row(r)).collect()
}

fn row_slice<'a>(refs: &'a [RowRef<'_>]) -> SmallVec<[&'a CacheRow; 4]> {
    refs.iter().map(|r| &**r).collect()
}

/// Fused maxout evaluation through the cache: losses of `signs` and of the
/// all-flipped assignment.
pub fn eval_maxout(
    cache: &PredictionCache,
    ranks: &[u64],
    signs: &[i8],
    labels_pos: &Bits,
) -> Result<(u32, u32)> {
    let refs = gather(cache, ranks)?;
    let rows = row_slice(&refs);
    Ok(maxout_losses_fused(&rows, signs, labels_pos))
}

/// ReLU evaluation through the cache.
pub fn eval_relu(
    cache: &PredictionCache,
    ranks: &[u64],
    signs: &[i8],
    labels_pos: &Bits,
) -> Result<u32> {
    let refs = gather(cache, ranks)?;
    let rows = row_slice(&refs);
    relu_loss(&rows, signs, labels_pos)
}

/// Sign vectors are compared by a packed key whose bit order matches the
/// numeric lexicographic order on ±1 tuples: sign i maps to bit k-1-i,
/// with -1 as 0, so a smaller key is a lexicographically smaller vector.
pub fn signs_to_lexkey(signs: &[i8]) -> u64 {
    signs.iter().fold(0u64, |key, &s| key << 1 | u64::from(s == 1))
}

pub fn signs_from_lexkey(key: u64, k: usize) -> Vec<i8> {
    (0..k).map(|i| if key >> (k - 1 - i) & 1 == 1 { 1 } else { -1 }).collect()
}

/// Allocation-free core of [`eval_assignments`]: the minimum
/// (loss, sign lexkey) over every assignment of one rank tuple.
pub fn eval_assignments_best(
    cache: &PredictionCache,
    ranks: &[u64],
    labels_pos: &Bits,
    activation: Activation,
) -> Result<(u32, u64)> {
    let k = ranks.len();
    debug_assert!(k >= 1 && k < 63);
    let refs = gather(cache, ranks)?;
    let rows = row_slice(&refs);
    let mut signs: SmallVec<[i8; 8]> = SmallVec::from_elem(1, k);
    let mut best = (u32::MAX, u64::MAX);
    let mut consider = |cand: (u32, u64)| {
        if cand < best {
            best = cand;
        }
    };
    match activation {
        Activation::Maxout => {
            let sign_mask = (1u64 << k) - 1;
            for mask in 0..1u64 << (k - 1) {
                signs[0] = 1;
                for i in 1..k {
                    signs[i] = if mask >> (i - 1) & 1 == 1 { -1 } else { 1 };
                }
                let (loss, loss_neg) = maxout_losses_fused(&rows, &signs, labels_pos);
                let key = signs_to_lexkey(&signs);
                consider((loss, key));
                consider((loss_neg, !key & sign_mask));
            }
        }
        Activation::Relu => {
            for mask in 0..1u64 << k {
                for (i, s) in signs.iter_mut().enumerate() {
                    *s = if mask >> i & 1 == 1 { -1 } else { 1 };
                }
                let loss = relu_loss(&rows, &signs, labels_pos)?;
                consider((loss, signs_to_lexkey(&signs)));
            }
        }
    }
    Ok(best)
}

/// Scores every sign assignment of one rank tuple and returns the best.
///
/// Maxout enumerates the 2^(K-1) assignments with the first sign fixed to
/// +1 and covers the other half through the fused pair; relu enumerates all
/// 2^K output-sign vectors directly. Ties break toward the smaller
/// (ranks, signs) under the shared total order.
pub fn eval_assignments(
    cache: &PredictionCache,
    ranks: &[u64],
    labels_pos: &Bits,
    activation: Activation,
) -> Result<ScoredConfig> {
    let (loss, key) = eval_assignments_best(cache, ranks, labels_pos, activation)?;
    let signs = signs_from_lexkey(key, ranks.len());
    Ok(ScoredConfig::new(Config::new(ranks.to_vec(), signs, activation), loss))
}

/// Number of assignments `eval_assignments` scores per rank tuple: fused
/// pairs for maxout, sign vectors for relu.
pub fn assignments_per_tuple(k: usize, activation: Activation) -> u64 {
    match activation {
        Activation::Maxout => 1 << (k - 1),
        Activation::Relu => 1 << k,
    }
}

/// The smaller of two scored configurations under the total order
/// (loss, ranks, signs): a commutative, associative, idempotent fold.
pub fn min_01(a: ScoredConfig, b: ScoredConfig) -> ScoredConfig {
    if b < a {
        b
    } else {
        a
    }
}

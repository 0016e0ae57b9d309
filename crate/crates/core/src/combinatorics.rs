//! Combination ranking and the mergeable combination-table algebra.
//!
//! Combinations are stored as fixed-width, strictly increasing index tuples
//! in flat arrays (one array per tuple size), which keeps merge loops cache
//! friendly. Ranks follow the combinatorial number system in
//! colexicographic order, so a combination's rank does not depend on the
//! pool size and prediction rows can be indexed by rank as they are created.

use num_bigint::BigUint;
use rayon::prelude::*;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// C(n, r) with overflow detection.
pub fn binomial(n: u64, r: u64) -> Option<u64> {
    if r > n {
        return Some(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 1..=r {
        acc = acc.checked_mul((n - r + i) as u128)?;
        acc /= i as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// C(n, r) in arbitrary precision.
pub fn binomial_big(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::ZERO;
    }
    let r = r.min(n - r);
    let mut acc = BigUint::from(1u32);
    for i in 1..=r {
        acc *= n - r + i;
        acc /= i;
    }
    acc
}

/// Size of the full search space over K-combinations of data-spanned
/// hyperplanes: C(C(n, d), k).
pub fn count_candidates(n: usize, d: usize, k: usize) -> BigUint {
    let planes = binomial_big(n as u64, d as u64);
    // C(planes, k) on a possibly huge pool
    let mut acc = BigUint::from(1u32);
    for i in 1..=k {
        if planes < BigUint::from(i) {
            return BigUint::ZERO;
        }
        acc *= &planes - BigUint::from(i as u64 - 1);
        acc /= i as u64;
    }
    acc
}

/// Colexicographic rank of a strictly increasing tuple:
/// Σ_i C(tuple[i], i+1).
pub fn rank_combination(combo: &[u64]) -> Result<u64> {
    if combo.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCombination(combo.to_vec()));
    }
    let mut rank: u128 = 0;
    for (i, &c) in combo.iter().enumerate() {
        let term = binomial(c, i as u64 + 1)
            .ok_or_else(|| Error::InvalidParams(format!("rank overflow for {combo:?}")))?;
        rank += term as u128;
    }
    u64::try_from(rank).map_err(|_| Error::InvalidParams(format!("rank overflow for {combo:?}")))
}

/// Inverse of [`rank_combination`]: the r-tuple with the given colex rank.
///
/// Every nonnegative rank is valid; callers bound the pool. Runs in Θ(r)
/// arithmetic-plus-search steps.
pub fn unrank_combination(rank: u64, r: usize) -> Vec<u64> {
    let mut combo = vec![0u64; r];
    let mut rem = rank;
    let mut upper: Option<u64> = None;
    for i in (1..=r).rev() {
        let ri = i as u64;
        // binom(c, i) <= rem, holds at c = i-1 where the value is 0
        let fits = |c: u64| binomial(c, ri).is_some_and(|v| v <= rem);
        let mut lo = ri - 1;
        let mut hi = match upper {
            Some(h) => h,
            None => {
                let mut h = lo + 1;
                while fits(h) {
                    h = h.saturating_mul(2).max(h + 1);
                }
                h
            }
        };
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        combo[i - 1] = lo;
        rem -= binomial(lo, ri).expect("selected entry fits");
        upper = Some(lo);
    }
    debug_assert_eq!(rem, 0, "rank {rank} is not reachable with {r}-tuples");
    combo
}

/// Flat storage for same-width strictly increasing tuples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlatCombs {
    width: usize,
    count: usize,
    data: Vec<u64>,
}

impl FlatCombs {
    pub fn new(width: usize) -> Self {
        FlatCombs { width, count: 0, data: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, tuple: &[u64]) {
        debug_assert_eq!(tuple.len(), self.width);
        self.data.extend_from_slice(tuple);
        self.count += 1;
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[u64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// Iterates tuples; width-0 tables yield `count` empty tuples.
    pub fn tuples(&self) -> impl Iterator<Item = &[u64]> + '_ {
        (0..self.count).map(move |i| self.get(i))
    }
}

/// Size-indexed table of combinations: `entry(i)` holds all retained
/// i-element tuples. Entry 0 is the singleton empty tuple (the unit of the
/// merge product) except in a default-constructed table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CombTable {
    entries: Vec<FlatCombs>,
}

/// Nested tables hold hyperplane-rank combinations; structurally they are
/// ordinary combination tables capped at size K-1.
pub type NestedTable = CombTable;

impl CombTable {
    /// Table of an empty segment: entry 0 = {()}, all larger entries empty.
    pub fn unit(cap: usize) -> Self {
        let mut entries: Vec<FlatCombs> = (0..=cap).map(FlatCombs::new).collect();
        entries[0].push(&[]);
        CombTable { entries }
    }

    /// Table of a one-point segment: {()} and {(index)}.
    pub fn singleton(index: u64, cap: usize) -> Self {
        let mut t = CombTable::unit(cap);
        if cap >= 1 {
            t.entries[1].push(&[index]);
        }
        t
    }

    /// All subsets of `elems` (sorted, distinct) of size at most `cap`.
    pub fn subsets_of(elems: &[u64], cap: usize) -> Self {
        debug_assert!(elems.windows(2).all(|w| w[0] < w[1]));
        let mut t = CombTable::unit(cap);
        for width in 1..=cap.min(elems.len()) {
            let entry = &mut t.entries[width];
            for_each_subset(elems, width, |tuple| entry.push(tuple));
        }
        t
    }

    pub fn cap(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entry(&self, size: usize) -> &FlatCombs {
        &self.entries[size]
    }

    /// Removes and returns an entry, leaving it empty ("setEmpty").
    pub fn take_entry(&mut self, size: usize) -> FlatCombs {
        std::mem::replace(&mut self.entries[size], FlatCombs::new(size))
    }

    /// Total tuples stored across entries of every size.
    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count()).sum()
    }
}

/// Receives completed size-K tuples as they stream out of a merge.
/// Implementations use interior mutability; `accept` may be called from
/// multiple worker threads.
pub trait CombSink: Sync {
    fn accept(&self, tuple: &[u64]);
}

/// Sink that drops everything.
pub struct NullSink;

impl CombSink for NullSink {
    fn accept(&self, _tuple: &[u64]) {}
}

/// Sink that collects tuples, for tests and small enumerations.
#[derive(Default)]
pub struct CollectSink(pub std::sync::Mutex<Vec<Vec<u64>>>);

impl CombSink for CollectSink {
    fn accept(&self, tuple: &[u64]) {
        self.0.lock().unwrap().push(tuple.to_vec());
    }
}

impl CollectSink {
    pub fn into_inner(self) -> Vec<Vec<u64>> {
        self.0.into_inner().unwrap()
    }
}

const PAR_PAIRS_THRESHOLD: usize = 1 << 15;

/// Joins two strictly increasing tuples into `out`. Fails if they share an
/// element, which would mean the merged tables cover overlapping segments.
#[inline]
fn join_tuples(l: &[u64], r: &[u64], out: &mut SmallVec<[u64; 12]>) -> Result<()> {
    out.clear();
    // segments are usually ordered, making the join a plain concatenation
    if l.is_empty() || r.is_empty() || l[l.len() - 1] < r[0] {
        out.extend_from_slice(l);
        out.extend_from_slice(r);
        return Ok(());
    }
    let (mut i, mut j) = (0, 0);
    while i < l.len() && j < r.len() {
        match l[i].cmp(&r[j]) {
            std::cmp::Ordering::Less => {
                out.push(l[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(r[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => return Err(Error::OverlappingSegments(l[i])),
        }
    }
    out.extend_from_slice(&l[i..]);
    out.extend_from_slice(&r[j..]);
    Ok(())
}

fn cross_into(left: &FlatCombs, right: &FlatCombs, out: &mut FlatCombs) -> Result<()> {
    let mut scratch: SmallVec<[u64; 12]> = SmallVec::new();
    for l in left.tuples() {
        for r in right.tuples() {
            join_tuples(l, r, &mut scratch)?;
            out.push(&scratch);
        }
    }
    Ok(())
}

fn cross_stream<S: CombSink + ?Sized>(left: &FlatCombs, right: &FlatCombs, sink: &S) -> Result<()> {
    let pairs = left.count() * right.count();
    if pairs == 0 {
        return Ok(());
    }
    if pairs < PAR_PAIRS_THRESHOLD {
        let mut scratch: SmallVec<[u64; 12]> = SmallVec::new();
        for l in left.tuples() {
            for r in right.tuples() {
                join_tuples(l, r, &mut scratch)?;
                sink.accept(&scratch);
            }
        }
        return Ok(());
    }
    (0..left.count())
        .into_par_iter()
        .try_for_each(|li| {
            let l = left.get(li);
            let mut scratch: SmallVec<[u64; 12]> = SmallVec::new();
            for r in right.tuples() {
                join_tuples(l, r, &mut scratch)?;
                sink.accept(&scratch);
            }
            Ok(())
        })
}

/// Merge product of two combination tables over disjoint segments.
///
/// Entry i of the result is the union over j of `left[j] ⊎ right[i-j]`;
/// sizes above `cap` are discarded.
pub fn kcombs_merge(left: &CombTable, right: &CombTable, cap: usize) -> Result<CombTable> {
    kcombs_merge_streaming(left, right, cap, usize::MAX, &NullSink)
}

/// Merge product that stores result entries up to `store_cap` and streams
/// tuples of exactly `stream_size` to `sink` instead of storing them.
pub fn kcombs_merge_streaming<S: CombSink + ?Sized>(
    left: &CombTable,
    right: &CombTable,
    store_cap: usize,
    stream_size: usize,
    sink: &S,
) -> Result<CombTable> {
    let mut out = CombTable { entries: (0..=store_cap).map(FlatCombs::new).collect() };
    for i in 0..=store_cap {
        let entry = &mut out.entries[i];
        for j in (0..=i).rev() {
            if j > left.cap() || i - j > right.cap() {
                continue;
            }
            cross_into(left.entry(j), right.entry(i - j), entry)?;
        }
    }
    if stream_size != usize::MAX {
        let i = stream_size;
        for j in (0..=i).rev() {
            if j > left.cap() || i - j > right.cap() {
                continue;
            }
            cross_stream(left.entry(j), right.entry(i - j), sink)?;
        }
    }
    Ok(out)
}

/// Calls `f` for every `width`-subset of `elems` (sorted, distinct),
/// without materializing the list.
pub fn for_each_subset(elems: &[u64], width: usize, mut f: impl FnMut(&[u64])) {
    if width > elems.len() {
        return;
    }
    if width == 0 {
        f(&[]);
        return;
    }
    let mut idx: Vec<usize> = (0..width).collect();
    let mut tuple: Vec<u64> = idx.iter().map(|&i| elems[i]).collect();
    loop {
        f(&tuple);
        // advance the index odometer
        let mut pos = width;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] <= elems.len() - (width - pos) {
                for p in pos + 1..width {
                    idx[p] = idx[p - 1] + 1;
                }
                break;
            }
        }
        for p in pos..width {
            tuple[p] = elems[idx[p]];
        }
    }
}

/// Streams every `width`-subset of `elems` to the sink, parallelizing over
/// the leading element when the subset count is large.
pub fn stream_subsets<S: CombSink + ?Sized>(elems: &[u64], width: usize, sink: &S) {
    if width > elems.len() {
        return;
    }
    let total = binomial(elems.len() as u64, width as u64).unwrap_or(u64::MAX);
    if width == 0 || total < PAR_PAIRS_THRESHOLD as u64 {
        for_each_subset(elems, width, |t| sink.accept(t));
        return;
    }
    (0..=elems.len() - width).into_par_iter().for_each(|first| {
        let lead = elems[first];
        let mut scratch: SmallVec<[u64; 12]> = SmallVec::new();
        for_each_subset(&elems[first + 1..], width - 1, |rest| {
            scratch.clear();
            scratch.push(lead);
            scratch.extend_from_slice(rest);
            sink.accept(&scratch);
        });
    });
}

/// The leaf value of the recursion for a one-point segment: point table
/// {(), (index)} and an empty nested table.
pub fn singleton_table(index: u64, d: usize, k: usize) -> (CombTable, NestedTable) {
    (CombTable::singleton(index, d), CombTable::unit(k.saturating_sub(1)))
}

/// The leaf value for an empty segment.
pub fn empty_table(d: usize, k: usize) -> (CombTable, NestedTable) {
    (CombTable::unit(d), CombTable::unit(k.saturating_sub(1)))
}

/// One merge step of the nested-combination recursion.
///
/// Merges the point tables of two disjoint segments (cap D), hands the
/// newly completed D-combinations to `on_new_hyperplanes` (which fits them
/// and returns their ranks), merges the rank tables, and streams every
/// completed size-K rank tuple to `eval_sink`. Size-K tuples are never
/// stored; the returned point table has entry D cleared, so each
/// hyperplane is created exactly once across the whole recursion.
pub fn nested_merge<S: CombSink + ?Sized>(
    left: (CombTable, NestedTable),
    right: (CombTable, NestedTable),
    d: usize,
    k: usize,
    on_new_hyperplanes: impl FnOnce(&FlatCombs) -> Result<Vec<u64>>,
    eval_sink: &S,
) -> Result<(CombTable, NestedTable)> {
    debug_assert!(left.0.entry(d).is_empty() && right.0.entry(d).is_empty());
    debug_assert!(k >= 1);
    let store_cap = k - 1;

    let mut css = kcombs_merge(&left.0, &right.0, d)?;
    let new_combos = css.take_entry(d);

    let mut new_ranks = if new_combos.is_empty() {
        Vec::new()
    } else {
        on_new_hyperplanes(&new_combos)?
    };
    debug_assert_eq!(new_ranks.len(), new_combos.count());
    new_ranks.sort_unstable();

    let inner = kcombs_merge_streaming(&left.1, &right.1, store_cap, k, eval_sink)?;
    let ncss = if new_ranks.is_empty() {
        inner
    } else {
        let new_table = CombTable::subsets_of(&new_ranks, store_cap);
        let merged = kcombs_merge_streaming(&inner, &new_table, store_cap, k, eval_sink)?;
        // pure-new size-K tuples are not covered by the merge above because
        // the new table only materializes sizes up to K-1
        stream_subsets(&new_ranks, k, eval_sink);
        merged
    };
    Ok((css, ncss))
}

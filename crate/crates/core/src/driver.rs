//! The recursive divide-and-conquer driver: split the point list, recurse,
//! merge combination tables, fit newly completed hyperplanes, stream
//! size-K rank tuples through assignment evaluation, and fold the minimum.

use std::ops::Range;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use num_bigint::BigUint;

use crate::bits::Bits;
use crate::combinatorics::{
    binomial, count_candidates, singleton_table, nested_merge, CombSink, CombTable, FlatCombs,
    NestedTable,
};
use crate::error::{Error, Result};
use crate::evaluator::{
    assignments_per_tuple, estimate_row_bytes, eval_assignments_best, min_01,
    signs_from_lexkey, CacheRow, PredictionCache,
};
use crate::geometry;
use crate::model::{Activation, Config, Dataset, ScoredConfig};

/// How the recursion splits a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitShape {
    /// Split at the midpoint down to singletons.
    #[default]
    Balanced,
    /// Peel one point off the right end (cons-list shape).
    LeftDeep,
    /// Peel one point off the left end.
    RightDeep,
}

/// Prediction-row storage policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryMode {
    /// Materialize rows when they fit under `memory_cap`, otherwise
    /// recompute them from ranks on demand.
    #[default]
    Auto,
    Materialize,
    OnDemand,
}

#[derive(Debug, Clone)]
pub struct FitParams {
    pub k: usize,
    pub activation: Activation,
    /// On-plane tolerance on unit normals.
    pub epsilon: f64,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    pub memory_mode: MemoryMode,
    /// Byte budget for materialized prediction rows under `Auto`.
    pub memory_cap: u64,
    pub split: SplitShape,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            k: 1,
            activation: Activation::Maxout,
            epsilon: geometry::DEFAULT_EPSILON,
            threads: 0,
            memory_mode: MemoryMode::Auto,
            memory_cap: 4 << 30,
            split: SplitShape::Balanced,
        }
    }
}

impl FitParams {
    pub fn new(k: usize, activation: Activation) -> Self {
        FitParams { k, activation, ..Default::default() }
    }
}

/// Snapshot handed to the progress callback after each merge.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub merges_done: u64,
    pub total_merges: u64,
    /// Best loss seen so far; the running best only improves, so any
    /// prefix of merges yields a valid (possibly suboptimal) model.
    pub best_loss: Option<u32>,
}

pub type ProgressFn<'a> = dyn Fn(Progress) + Sync + 'a;

/// Per-depth instrumentation of the merge tree.
#[derive(Debug, Clone, Default)]
pub struct LevelStats {
    pub merges: u64,
    pub candidates: u64,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub best: ScoredConfig,
    pub hyperplanes_created: u64,
    /// Assignments scored: fused pairs for maxout, sign vectors for relu.
    pub candidates_evaluated: u64,
    pub merges: u64,
    /// Indexed by merge-tree depth (root is 0).
    pub levels: Vec<LevelStats>,
    pub wall: Duration,
    pub materialized: bool,
}

/// Exact fit with default parameters.
pub fn deep_ice(ds: &Dataset, k: usize, activation: Activation) -> Result<ScoredConfig> {
    fit(ds, &FitParams::new(k, activation)).map(|r| r.best)
}

pub fn fit(ds: &Dataset, params: &FitParams) -> Result<FitReport> {
    fit_with_progress(ds, params, None)
}

pub fn fit_with_progress(
    ds: &Dataset,
    params: &FitParams,
    progress: Option<&ProgressFn<'_>>,
) -> Result<FitReport> {
    let n = ds.len();
    let d = ds.dim();
    let k = params.k;
    if k < 1 || k > 62 {
        return Err(Error::InvalidParams(format!("k must be in 1..=62, got {k}")));
    }
    if !(params.epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon must be positive, got {}", params.epsilon)));
    }
    let planes_big = crate::combinatorics::binomial_big(n as u64, d as u64);
    if planes_big < BigUint::from(k) {
        let planes = binomial(n as u64, d as u64).unwrap_or(u64::MAX);
        return Err(Error::NoConfig { n, d, planes, k });
    }
    let with_dots = params.activation == Activation::Relu;

    let planes = binomial(n as u64, d as u64);
    let estimate = planes.map(|p| p as u128 * estimate_row_bytes(n, with_dots));
    let materialize = match params.memory_mode {
        MemoryMode::Materialize => true,
        MemoryMode::OnDemand => false,
        MemoryMode::Auto => estimate.is_some_and(|e| e <= params.memory_cap as u128),
    };
    let cache = if materialize {
        let capacity = planes.ok_or(Error::MemoryCapExceeded {
            needed: u128::MAX,
            cap: params.memory_cap,
        })?;
        PredictionCache::materialized(n, d, capacity, with_dots)?
    } else {
        let owned = std::sync::Arc::new(ds.clone());
        PredictionCache::on_demand(owned, params.epsilon, with_dots)
    };

    let ctx = Ctx {
        ds,
        d,
        k,
        activation: params.activation,
        epsilon: params.epsilon,
        split: params.split,
        per_tuple: assignments_per_tuple(k, params.activation),
        cache,
        candidates: AtomicU64::new(0),
        merges_done: AtomicU64::new(0),
        total_merges: n.saturating_sub(1) as u64,
        best_loss: AtomicU32::new(u32::MAX),
        best: Mutex::new(None),
        levels: Mutex::new(Vec::new()),
        progress,
    };

    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let root = pool.install(|| solve(&ctx, 0..n, 0))?;
    let wall = started.elapsed();

    let best = root.best.ok_or(Error::NoConfig {
        n,
        d,
        planes: planes.unwrap_or(u64::MAX),
        k,
    })?;

    let hyperplanes_created = ctx.cache.created();
    let candidates_evaluated = ctx.candidates.load(Ordering::Relaxed);
    assert_eq!(
        BigUint::from(hyperplanes_created),
        planes_big,
        "every D-combination must be fitted exactly once"
    );
    assert_eq!(
        BigUint::from(candidates_evaluated),
        count_candidates(n, d, k) * ctx.per_tuple,
        "evaluated-candidate counter must match the search-space size"
    );

    Ok(FitReport {
        best,
        hyperplanes_created,
        candidates_evaluated,
        merges: ctx.merges_done.load(Ordering::Relaxed),
        levels: ctx.levels.into_inner().unwrap(),
        wall,
        materialized: materialize,
    })
}

struct Ctx<'a> {
    ds: &'a Dataset,
    d: usize,
    k: usize,
    activation: Activation,
    epsilon: f64,
    split: SplitShape,
    per_tuple: u64,
    cache: PredictionCache,
    candidates: AtomicU64,
    merges_done: AtomicU64,
    total_merges: u64,
    best_loss: AtomicU32,
    best: Mutex<Option<ScoredConfig>>,
    levels: Mutex<Vec<LevelStats>>,
    progress: Option<&'a ProgressFn<'a>>,
}

impl Ctx<'_> {
    fn split_at(&self, range: &Range<usize>) -> usize {
        match self.split {
            SplitShape::Balanced => range.start + range.len() / 2,
            SplitShape::LeftDeep => range.end - 1,
            SplitShape::RightDeep => range.start + 1,
        }
    }

    fn offer(&self, cand: ScoredConfig) {
        // strictly worse candidates can never win the total order
        if cand.loss > self.best_loss.load(Ordering::Relaxed) {
            return;
        }
        let mut slot = self.best.lock().unwrap();
        let merged = match slot.take() {
            None => cand,
            Some(b) => min_01(b, cand),
        };
        self.best_loss.store(merged.loss, Ordering::Relaxed);
        *slot = Some(merged);
    }
}

struct Seg {
    css: CombTable,
    ncss: NestedTable,
    best: Option<ScoredConfig>,
}

fn solve(ctx: &Ctx<'_>, range: Range<usize>, depth: usize) -> Result<Seg> {
    if range.len() == 1 {
        let (css, ncss) = singleton_table(range.start as u64, ctx.d, ctx.k);
        return Ok(Seg { css, ncss, best: None });
    }
    let mid = ctx.split_at(&range);
    let (left, right) = rayon::join(
        || solve(ctx, range.start..mid, depth + 1),
        || solve(ctx, mid..range.end, depth + 1),
    );
    merge_node(ctx, left?, right?, depth)
}

/// Streams size-K rank tuples into assignment evaluation, folding a
/// node-local minimum and counting scored assignments.
struct EvalSink<'a, 'c> {
    ctx: &'a Ctx<'c>,
    labels: &'a Bits,
    count: AtomicU64,
    best_loss: AtomicU32,
    best: Mutex<Option<ScoredConfig>>,
    error: OnceLock<Error>,
}

impl<'a, 'c> EvalSink<'a, 'c> {
    fn new(ctx: &'a Ctx<'c>) -> Self {
        EvalSink {
            ctx,
            labels: ctx.ds.labels_pos(),
            count: AtomicU64::new(0),
            best_loss: AtomicU32::new(u32::MAX),
            best: Mutex::new(None),
            error: OnceLock::new(),
        }
    }
}

impl CombSink for EvalSink<'_, '_> {
    fn accept(&self, tuple: &[u64]) {
        self.count.fetch_add(self.ctx.per_tuple, Ordering::Relaxed);
        match eval_assignments_best(&self.ctx.cache, tuple, self.labels, self.ctx.activation) {
            Ok((loss, key)) => {
                // materialize a candidate only when it can win the fold
                if loss > self.best_loss.load(Ordering::Relaxed) {
                    return;
                }
                let cand = ScoredConfig::new(
                    Config::new(
                        tuple.to_vec(),
                        signs_from_lexkey(key, tuple.len()),
                        self.ctx.activation,
                    ),
                    loss,
                );
                let mut slot = self.best.lock().unwrap();
                let merged = match slot.take() {
                    None => cand,
                    Some(b) => min_01(b, cand),
                };
                self.best_loss.store(merged.loss, Ordering::Relaxed);
                *slot = Some(merged);
            }
            Err(e) => {
                let _ = self.error.set(e);
            }
        }
    }
}

fn merge_node(ctx: &Ctx<'_>, left: Seg, right: Seg, depth: usize) -> Result<Seg> {
    let started = Instant::now();
    let sink = EvalSink::new(ctx);
    let fit_new = |combos: &FlatCombs| -> Result<Vec<u64>> {
        let mut ranks = Vec::with_capacity(combos.count());
        for tuple in combos.tuples() {
            let combo: Vec<usize> = tuple.iter().map(|&v| v as usize).collect();
            let h = geometry::fit_and_sign(ctx.ds, &combo, ctx.epsilon)?;
            let dots = ctx
                .cache
                .with_dots()
                .then(|| geometry::dot_row(&h.normal, ctx.ds).into_boxed_slice());
            ranks.push(h.defining_rank);
            ctx.cache.insert(
                h.defining_rank,
                CacheRow { nonneg: h.nonneg, strictpos: h.strictpos, dots },
            );
        }
        Ok(ranks)
    };

    let (css, ncss) = nested_merge(
        (left.css, left.ncss),
        (right.css, right.ncss),
        ctx.d,
        ctx.k,
        fit_new,
        &sink,
    )?;
    if let Some(e) = sink.error.into_inner() {
        return Err(e);
    }

    let node_candidates = sink.count.load(Ordering::Relaxed);
    let mut best = sink.best.into_inner().unwrap();
    for prior in [left.best, right.best] {
        best = match (best, prior) {
            (Some(a), Some(b)) => Some(min_01(a, b)),
            (a, b) => a.or(b),
        };
    }
    if let Some(b) = &best {
        ctx.offer(b.clone());
    }

    ctx.candidates.fetch_add(node_candidates, Ordering::Relaxed);
    let done = ctx.merges_done.fetch_add(1, Ordering::Relaxed) + 1;
    {
        let mut levels = ctx.levels.lock().unwrap();
        if levels.len() <= depth {
            levels.resize(depth + 1, LevelStats::default());
        }
        let stat = &mut levels[depth];
        stat.merges += 1;
        stat.candidates += node_candidates;
        stat.wall += started.elapsed();
    }
    if let Some(cb) = ctx.progress {
        let loss = ctx.best_loss.load(Ordering::Relaxed);
        cb(Progress {
            merges_done: done,
            total_merges: ctx.total_merges,
            best_loss: (loss != u32::MAX).then_some(loss),
        });
    }

    Ok(Seg { css, ncss, best })
}

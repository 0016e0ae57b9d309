//! Layer-by-layer coreset filtering: solve blocks exactly, keep the best
//! block configurations in a bounded heap, shrink the survivor set until it
//! fits the exact solver, then rescore everything on the full dataset.

use std::collections::BinaryHeap;
use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{rank_combination, unrank_combination};
use crate::driver::{self, FitParams};
use crate::error::{Error, Result};
use crate::evaluator::{maxout_loss_direct, relu_loss, CacheRow};
use crate::geometry;
use crate::model::{Activation, Config, Dataset, ScoredConfig};

/// Filtering parameters: block size M, shuffle rounds R per layer, heap
/// capacity L, exact-solver bound B_max, and the heap shrink factor c.
#[derive(Debug, Clone)]
pub struct FilterParams {
    pub block_size: usize,
    pub rounds: usize,
    pub heap_capacity: usize,
    pub bmax: usize,
    pub shrink: f64,
    pub seed: u64,
}

impl FilterParams {
    fn validate(&self, d: usize, k: usize) -> Result<()> {
        if self.block_size < d + k {
            return Err(Error::InvalidParams(format!(
                "block size {} below the minimum viable block {}",
                self.block_size,
                d + k
            )));
        }
        if self.bmax < self.block_size {
            return Err(Error::InvalidParams(format!(
                "bmax {} must be at least the block size {}",
                self.bmax, self.block_size
            )));
        }
        if self.heap_capacity == 0 {
            return Err(Error::InvalidParams("heap capacity must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "shrink factor must lie in (0, 1], got {}",
                self.shrink
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParams("rounds must be positive".into()));
        }
        Ok(())
    }
}

/// One hyperplane of a surviving configuration, stored by geometry so it
/// stays meaningful after points are reindexed across layers.
#[derive(Debug, Clone, Serialize)]
pub struct NeuronGeom {
    pub normal: Vec<f64>,
    pub defining_points: Vec<Vec<f64>>,
    pub sign: i8,
}

/// Heap entry: a block-optimal configuration plus the block it came from.
#[derive(Debug, Clone)]
pub struct HeapEntry {
    pub scored: ScoredConfig,
    pub neurons: Vec<NeuronGeom>,
    pub block: Vec<(Vec<f64>, i8)>,
    seq: u64,
}

struct HeapItem(HeapEntry);

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.0.scored.loss == other.0.scored.loss && self.0.seq == other.0.seq
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.0.scored.loss, self.0.seq).cmp(&(other.0.scored.loss, other.0.seq))
    }
}

/// Bounded max-heap of the lowest-loss configurations pushed so far.
/// When full, a push evicts the worst entry only if the newcomer is
/// strictly better; ties keep the earlier insertion.
pub struct BestHeap {
    cap: usize,
    items: BinaryHeap<HeapItem>,
}

impl BestHeap {
    pub fn new(cap: usize) -> Self {
        BestHeap { cap, items: BinaryHeap::new() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn push(&mut self, entry: HeapEntry) {
        if self.items.len() < self.cap {
            self.items.push(HeapItem(entry));
            return;
        }
        let worst = self.items.peek().expect("capacity is positive");
        if (entry.scored.loss, entry.seq) < (worst.0.scored.loss, worst.0.seq) {
            self.items.pop();
            self.items.push(HeapItem(entry));
        }
    }

    /// Entries sorted best-first (loss ascending, earlier insertion first).
    pub fn sorted_entries(&self) -> Vec<&HeapEntry> {
        let mut v: Vec<&HeapItem> = self.items.iter().collect();
        v.sort_by_key(|item| (item.0.scored.loss, item.0.seq));
        v.into_iter().map(|item| &item.0).collect()
    }
}

/// One line of the per-round JSON log.
#[derive(Debug, Clone, Serialize)]
pub struct RoundLog {
    pub layer: usize,
    pub round: usize,
    pub survivors_in: usize,
    pub heap_capacity: usize,
    pub blocks: usize,
    pub best_block_loss: u32,
    pub wall_ms: u64,
}

/// A heap configuration rescored on the full dataset.
#[derive(Debug, Clone)]
pub struct RescoredConfig {
    /// Global ranks and the loss over all N points.
    pub scored: ScoredConfig,
    pub neurons: Vec<NeuronGeom>,
    pub block_loss: u32,
}

#[derive(Debug)]
pub struct CoresetOutcome {
    /// Best configuration by full-dataset loss.
    pub best: ScoredConfig,
    /// Every surviving configuration, ascending by full-dataset loss.
    pub rescored: Vec<RescoredConfig>,
    pub rounds: Vec<RoundLog>,
    /// Points handed to the final exact refinement.
    pub final_subset_size: usize,
}

type Row = (Vec<f64>, i8);

fn rows_of(ds: &Dataset) -> Vec<Row> {
    (0..ds.len()).map(|i| (ds.point(i).to_vec(), ds.label(i))).collect()
}

fn dataset_of(rows: &[Row]) -> Result<Dataset> {
    let points: Vec<Vec<f64>> = rows.iter().map(|(p, _)| p.clone()).collect();
    let labels: Vec<i8> = rows.iter().map(|(_, l)| *l).collect();
    Dataset::from_rows(&points, &labels)
}

/// Solves one block exactly and packages the winner with its geometry.
fn solve_block(
    rows: &[Row],
    fit: &FitParams,
    threads: usize,
    source_block: usize,
) -> Result<HeapEntry> {
    let ds = dataset_of(rows)?;
    let params = FitParams { threads, ..fit.clone() };
    let mut scored = driver::fit(&ds, &params)?.best;
    scored.source_block = Some(source_block);
    let neurons = scored
        .config
        .ranks
        .iter()
        .zip(&scored.config.signs)
        .map(|(&rank, &sign)| {
            let combo: Vec<usize> =
                unrank_combination(rank, ds.dim()).iter().map(|&v| v as usize).collect();
            let normal = geometry::fit_hyperplane(&ds, &combo, params.epsilon)?;
            Ok(NeuronGeom {
                normal,
                defining_points: combo.iter().map(|&i| ds.point(i).to_vec()).collect(),
                sign,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeapEntry { scored, neurons, block: rows.to_vec(), seq: 0 })
}

fn point_key(p: &[f64], label: i8) -> (Vec<u64>, i8) {
    (p.iter().map(|v| v.to_bits()).collect(), label)
}

/// Runs layer-by-layer filtering and returns the best configuration by
/// full-dataset loss together with the rescored survivor heap.
pub fn coreset_fit(
    ds: &Dataset,
    fit: &FitParams,
    filter: &FilterParams,
) -> Result<CoresetOutcome> {
    coreset_fit_with_progress(ds, fit, filter, None)
}

/// Like [`coreset_fit`], invoking the callback after every filtering round.
pub fn coreset_fit_with_progress(
    ds: &Dataset,
    fit: &FitParams,
    filter: &FilterParams,
    on_round: Option<&(dyn Fn(&RoundLog) + Sync)>,
) -> Result<CoresetOutcome> {
    filter.validate(ds.dim(), fit.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(filter.seed);
    let mut current = rows_of(ds);
    let mut heap_cap = filter.heap_capacity;
    let mut heap = BestHeap::new(heap_cap);
    let mut seq = 0u64;
    let mut logs = Vec::new();
    let mut layer = 0usize;

    while current.len() > filter.bmax {
        layer += 1;
        heap = BestHeap::new(heap_cap);
        for round in 1..=filter.rounds {
            let started = Instant::now();
            current.shuffle(&mut rng);
            let mut blocks: Vec<&[Row]> = current.chunks(filter.block_size).collect();
            // a too-small trailing block cannot host k hyperplanes; fold it
            // into its predecessor
            if blocks.len() > 1 && blocks.last().unwrap().len() < ds.dim() + fit.k {
                let tail = blocks.pop().unwrap();
                let prev = blocks.pop().unwrap();
                let merged_start = current.len() - tail.len() - prev.len();
                blocks.push(&current[merged_start..]);
            }
            let n_blocks = blocks.len();
            let inner_threads = if n_blocks > 1 { 1 } else { fit.threads };
            let entries: Vec<HeapEntry> = blocks
                .par_iter()
                .enumerate()
                .map(|(bi, rows)| solve_block(rows, fit, inner_threads, bi))
                .collect::<Result<_>>()?;
            let mut round_best = u32::MAX;
            for mut entry in entries {
                round_best = round_best.min(entry.scored.loss);
                entry.seq = seq;
                seq += 1;
                heap.push(entry);
            }
            let log = RoundLog {
                layer,
                round,
                survivors_in: current.len(),
                heap_capacity: heap_cap,
                blocks: n_blocks,
                best_block_loss: round_best,
                wall_ms: started.elapsed().as_millis() as u64,
            };
            if let Some(cb) = on_round {
                cb(&log);
            }
            logs.push(log);
        }

        // survivor set: deduplicated union of the surviving blocks' points
        let mut survivors: Vec<Row> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for entry in heap.sorted_entries() {
            for row in &entry.block {
                if seen.insert(point_key(&row.0, row.1)) {
                    survivors.push(row.clone());
                }
            }
        }
        if survivors.is_empty() {
            return Err(Error::FilteringCollapse {
                layer,
                heap: heap_cap,
                block: filter.block_size,
            });
        }
        let next_cap = ((heap_cap as f64 * filter.shrink).ceil() as usize).max(1);
        if survivors.len() >= current.len() && next_cap == heap_cap {
            return Err(Error::FilteringStalled {
                layer,
                size: survivors.len(),
                bmax: filter.bmax,
            });
        }
        current = survivors;
        heap_cap = next_cap;
    }

    // final refinement on the surviving subset
    let final_subset_size = current.len();
    let mut final_entry = solve_block(&current, fit, fit.threads, usize::MAX)?;
    final_entry.scored.source_block = None;
    final_entry.seq = seq;
    heap.push(final_entry);

    let rescored = rescore_on_full(&heap, ds, fit)?;
    let best = rescored.first().expect("heap holds at least the final refinement").scored.clone();
    Ok(CoresetOutcome { best, rescored, rounds: logs, final_subset_size })
}

/// Refits every heap configuration from its stored defining points and
/// scores it on the full dataset; results come back ascending by
/// full-dataset loss under the usual total order.
pub fn rescore_on_full(heap: &BestHeap, ds: &Dataset, fit: &FitParams) -> Result<Vec<RescoredConfig>> {
    let mut index: HashMap<(Vec<u64>, i8), usize> = HashMap::new();
    for i in 0..ds.len() {
        index.insert(point_key(ds.point(i), ds.label(i)), i);
    }
    let labels = ds.labels_pos();
    let mut out = Vec::new();
    for entry in heap.sorted_entries() {
        let mut per_neuron: Vec<(u64, i8, NeuronGeom, CacheRow)> = Vec::new();
        for neuron in &entry.neurons {
            let mut combo: Vec<usize> = neuron
                .defining_points
                .iter()
                .map(|p| point_lookup(&index, p))
                .collect::<Result<Vec<usize>>>()?;
            combo.sort_unstable();
            let refit: Vec<&[f64]> = combo.iter().map(|&i| ds.point(i)).collect();
            let normal = geometry::fit_from_points(&refit)?;
            if !normals_equal(&normal, &neuron.normal) {
                return Err(Error::Integrity(format!(
                    "refit normal {normal:?} deviates from stored {:?}",
                    neuron.normal
                )));
            }
            let (nonneg, strictpos) = geometry::sign_row(&normal, ds, fit.epsilon);
            let dots = (fit.activation == Activation::Relu)
                .then(|| geometry::dot_row(&normal, ds).into_boxed_slice());
            let rank = rank_combination(&combo.iter().map(|&i| i as u64).collect::<Vec<_>>())?;
            per_neuron.push((
                rank,
                neuron.sign,
                NeuronGeom {
                    normal,
                    defining_points: combo.iter().map(|&i| ds.point(i).to_vec()).collect(),
                    sign: neuron.sign,
                },
                CacheRow { nonneg, strictpos, dots },
            ));
        }
        per_neuron.sort_by_key(|(rank, ..)| *rank);
        let ranks: Vec<u64> = per_neuron.iter().map(|(r, ..)| *r).collect();
        let signs: Vec<i8> = per_neuron.iter().map(|(_, s, ..)| *s).collect();
        let rows: Vec<&CacheRow> = per_neuron.iter().map(|(.., row)| row).collect();
        let loss = match fit.activation {
            Activation::Maxout => maxout_loss_direct(&rows, &signs, labels),
            Activation::Relu => relu_loss(&rows, &signs, labels)?,
        };
        let mut scored =
            ScoredConfig::new(Config::new(ranks, signs, fit.activation), loss);
        scored.source_block = entry.scored.source_block;
        out.push(RescoredConfig {
            scored,
            neurons: per_neuron.into_iter().map(|(.., n, _)| n).collect(),
            block_loss: entry.scored.loss,
        });
    }
    out.sort_by(|a, b| a.scored.cmp(&b.scored));
    Ok(out)
}

fn point_lookup(index: &HashMap<(Vec<u64>, i8), usize>, p: &[f64]) -> Result<usize> {
    let bits: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
    for label in [1i8, -1] {
        if let Some(&i) = index.get(&(bits.clone(), label)) {
            return Ok(i);
        }
    }
    Err(Error::Integrity(format!("defining point {p:?} is not present in the dataset")))
}

fn normals_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn filter(block: usize, rounds: usize, heap: usize, bmax: usize, shrink: f64) -> FilterParams {
        FilterParams { block_size: block, rounds, heap_capacity: heap, bmax, shrink, seed: 7 }
    }

    #[test]
    fn params_are_validated() {
        let ds = synth::random_dataset(1, 12, 2);
        let fit = FitParams::new(1, Activation::Maxout);
        // bmax below block size
        let err = coreset_fit(&ds, &fit, &filter(10, 1, 4, 5, 0.5)).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        // block below minimum viable size
        let err = coreset_fit(&ds, &fit, &filter(2, 1, 4, 10, 0.5)).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        // shrink out of range
        let err = coreset_fit(&ds, &fit, &filter(5, 1, 4, 10, 1.5)).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    #[test]
    fn small_input_equals_exact_fit() {
        let ds = synth::random_dataset(21, 12, 2);
        let fit = FitParams::new(1, Activation::Maxout);
        let exact = driver::fit(&ds, &fit).unwrap().best;
        let out = coreset_fit(&ds, &fit, &filter(5, 2, 4, 20, 0.5)).unwrap();
        assert_eq!(out.best, exact);
        assert!(out.rounds.is_empty()); // the filtering loop never ran
        assert_eq!(out.final_subset_size, 12);
    }

    #[test]
    fn conservative_and_shrinking_on_larger_input() {
        let ds = synth::random_dataset(33, 40, 2);
        let fit = FitParams::new(1, Activation::Maxout);
        let exact = driver::fit(&ds, &fit).unwrap().best;
        let out = coreset_fit(&ds, &fit, &filter(10, 2, 3, 20, 0.5)).unwrap();
        assert!(out.best.loss >= exact.loss);
        assert!(out.final_subset_size <= 20);
        assert!(!out.rounds.is_empty());
        for log in &out.rounds {
            assert!(log.blocks >= 1);
            assert!(log.best_block_loss <= ds.len() as u32);
        }
        // rescored list is sorted by full-data loss
        for pair in out.rescored.windows(2) {
            assert!(pair[0].scored <= pair[1].scored);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = synth::random_dataset(5, 35, 2);
        let fit = FitParams::new(2, Activation::Maxout);
        let p = filter(8, 2, 3, 16, 0.5);
        let a = coreset_fit(&ds, &fit, &p).unwrap();
        let b = coreset_fit(&ds, &fit, &p).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.final_subset_size, b.final_subset_size);
        assert_eq!(
            a.rescored.iter().map(|r| r.scored.clone()).collect::<Vec<_>>(),
            b.rescored.iter().map(|r| r.scored.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pathological_parameters_stall_with_full_survivor_set() {
        // c = 1 with a heap large enough to keep every block: the survivor
        // set never shrinks and the run must refuse instead of looping
        let ds = synth::random_dataset(9, 30, 2);
        let fit = FitParams::new(1, Activation::Maxout);
        let err = coreset_fit(&ds, &fit, &filter(10, 1, 10, 20, 1.0)).unwrap_err();
        match err {
            Error::FilteringStalled { layer, size, bmax } => {
                assert_eq!(layer, 1);
                assert_eq!(size, 30); // every point survived round one
                assert_eq!(bmax, 20);
            }
            other => panic!("expected a stall, got {other}"),
        }
    }

    #[test]
    fn heap_bound_and_tie_rule() {
        let mk = |loss: u32, seq: u64| HeapEntry {
            scored: ScoredConfig::new(
                Config::new(vec![0], vec![1], Activation::Maxout),
                loss,
            ),
            neurons: Vec::new(),
            block: Vec::new(),
            seq,
        };
        let mut heap = BestHeap::new(2);
        heap.push(mk(5, 0));
        heap.push(mk(3, 1));
        assert_eq!(heap.len(), 2);
        heap.push(mk(4, 2)); // evicts loss 5
        let losses: Vec<u32> = heap.sorted_entries().iter().map(|e| e.scored.loss).collect();
        assert_eq!(losses, vec![3, 4]);
        heap.push(mk(4, 3)); // tie with the worst: earlier insertion stays
        let seqs: Vec<u64> = heap.sorted_entries().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2]);
        assert!(heap.len() <= 2);
    }
}

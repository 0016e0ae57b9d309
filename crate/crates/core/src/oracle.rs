//! One-by-one exhaustive reference search.
//!
//! Materializes the unfused specification: every D-combination is fitted,
//! every K-subset of hyperplanes and every one of its 2^K sign assignments
//! is scored independently. Shares the geometry and loss kernels with the
//! main path but none of the generators or the symmetric fusion, so a
//! generator bug cannot confirm itself. Single-threaded on purpose.

use num_bigint::BigUint;

use crate::combinatorics::count_candidates;
use crate::error::{Error, Result};
use crate::evaluator::{maxout_loss_direct, relu_loss, CacheRow};
use crate::geometry::{self, DEFAULT_EPSILON};
use crate::model::{Activation, Config, Dataset, ScoredConfig};
use crate::evaluator::min_01;

/// Default cap on enumerated candidates; the oracle is desk-scale only.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub best: ScoredConfig,
    /// Scored (tuple, assignment) pairs: C(C(N,D),K) · 2^K.
    pub candidates: u64,
}

/// One configuration whose loss beat the enumeration threshold, together
/// with its direct-hyperplane representatives.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub scored: ScoredConfig,
    /// Canonical normals, ordered like the config ranks.
    pub normals: Vec<Vec<f64>>,
    /// Defining point indices per hyperplane.
    pub defining: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub solutions: Vec<SolutionRecord>,
    pub candidates: u64,
}

/// Advances a strictly increasing index tuple over 0..n in lexicographic
/// order; returns false after the last tuple.
fn next_combo(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if idx[i] != i + n - k {
            break;
        }
    }
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

struct PlaneRow {
    rank: u64,
    normal: Vec<f64>,
    combo: Vec<usize>,
    row: CacheRow,
}

fn fit_all_planes(ds: &Dataset, epsilon: f64) -> Result<Vec<PlaneRow>> {
    let n = ds.len();
    let d = ds.dim();
    let mut planes = Vec::new();
    let mut combo: Vec<usize> = (0..d).collect();
    loop {
        let h = geometry::fit_and_sign(ds, &combo, epsilon)?;
        let dots = geometry::dot_row(&h.normal, ds).into_boxed_slice();
        planes.push(PlaneRow {
            rank: h.defining_rank,
            normal: h.normal,
            combo: combo.clone(),
            row: CacheRow { nonneg: h.nonneg, strictpos: h.strictpos, dots: Some(dots) },
        });
        if !next_combo(&mut combo, n) {
            break;
        }
    }
    Ok(planes)
}

fn check_budget(ds: &Dataset, k: usize, budget: u64) -> Result<BigUint> {
    let total = count_candidates(ds.len(), ds.dim(), k) * (1u64 << k);
    if total > BigUint::from(budget) {
        return Err(Error::BudgetExceeded { candidates: total, budget });
    }
    Ok(total)
}

fn scan(
    ds: &Dataset,
    k: usize,
    activation: Activation,
    budget: u64,
    mut visit: impl FnMut(ScoredConfig, &[usize]) -> Result<()>,
) -> Result<u64> {
    check_budget(ds, k, budget)?;
    if ds.len() < ds.dim() {
        return Err(Error::NoConfig { n: ds.len(), d: ds.dim(), planes: 0, k });
    }
    let planes = fit_all_planes(ds, DEFAULT_EPSILON)?;
    if planes.len() < k {
        return Err(Error::NoConfig {
            n: ds.len(),
            d: ds.dim(),
            planes: planes.len() as u64,
            k,
        });
    }
    let labels = ds.labels_pos();
    let mut candidates = 0u64;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let rows: Vec<&CacheRow> = subset.iter().map(|&i| &planes[i].row).collect();
        for mask in 0..1u64 << k {
            let signs: Vec<i8> =
                (0..k).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
            let loss = match activation {
                Activation::Maxout => maxout_loss_direct(&rows, &signs, labels),
                Activation::Relu => relu_loss(&rows, &signs, labels)?,
            };
            candidates += 1;
            // canonical identity: pairs sorted by hyperplane rank
            let mut pairs: Vec<(u64, i8, usize)> = subset
                .iter()
                .zip(&signs)
                .map(|(&i, &s)| (planes[i].rank, s, i))
                .collect();
            pairs.sort_unstable_by_key(|&(rank, _, _)| rank);
            let ranks: Vec<u64> = pairs.iter().map(|p| p.0).collect();
            let ordered_signs: Vec<i8> = pairs.iter().map(|p| p.1).collect();
            let plane_order: Vec<usize> = pairs.iter().map(|p| p.2).collect();
            let scored =
                ScoredConfig::new(Config::new(ranks, ordered_signs, activation), loss);
            visit(scored, &plane_order)?;
        }
        if !next_combo(&mut subset, planes.len()) {
            break;
        }
    }
    Ok(candidates)
}

/// Exhaustive exact search: the ground truth the fused pipeline is tested
/// against.
pub fn oracle_exact(
    ds: &Dataset,
    k: usize,
    activation: Activation,
    budget: u64,
) -> Result<OracleOutcome> {
    let mut best: Option<ScoredConfig> = None;
    let candidates = scan(ds, k, activation, budget, |scored, _| {
        best = Some(match best.take() {
            None => scored,
            Some(b) => min_01(b, scored),
        });
        Ok(())
    })?;
    Ok(OracleOutcome { best: best.expect("budget check guarantees candidates"), candidates })
}

/// All configurations with loss strictly below `threshold`, each carrying
/// its direct-hyperplane normals and defining points.
pub fn enumerate_solutions(
    ds: &Dataset,
    k: usize,
    activation: Activation,
    threshold: u32,
    budget: u64,
) -> Result<SolutionSet> {
    // refit once up front so records can carry geometry
    check_budget(ds, k, budget)?;
    let planes = fit_all_planes(ds, DEFAULT_EPSILON)?;
    let mut solutions = Vec::new();
    let candidates = scan(ds, k, activation, budget, |scored, plane_order| {
        if scored.loss < threshold {
            solutions.push(SolutionRecord {
                normals: plane_order.iter().map(|&i| planes[i].normal.clone()).collect(),
                defining: plane_order.iter().map(|&i| planes[i].combo.clone()).collect(),
                scored,
            });
        }
        Ok(())
    })?;
    Ok(SolutionSet { solutions, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn candidate_counter_matches_closed_form() {
        let ds = synth::random_dataset(2, 6, 2);
        let out = oracle_exact(&ds, 2, Activation::Maxout, DEFAULT_BUDGET).unwrap();
        // C(C(6,2),2) * 2^2 = 105 * 4
        assert_eq!(out.candidates, 420);
    }

    #[test]
    fn two_point_all_positive_data_has_zero_loss() {
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[1, 1]).unwrap();
        let out = oracle_exact(&ds, 1, Activation::Maxout, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.best.loss, 0);
    }

    #[test]
    fn separable_k1_zero_loss() {
        let ds = synth::separable_dataset(5, 8, 2, 0.3);
        let out = oracle_exact(&ds, 1, Activation::Maxout, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.best.loss, 0);
    }

    #[test]
    fn budget_refusal() {
        let ds = synth::random_dataset(9, 30, 2);
        let err = oracle_exact(&ds, 3, Activation::Maxout, 1000).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }), "{err}");
    }

    #[test]
    fn threshold_zero_yields_nothing() {
        let ds = synth::random_dataset(3, 6, 2);
        let set = enumerate_solutions(&ds, 1, Activation::Maxout, 0, DEFAULT_BUDGET).unwrap();
        assert!(set.solutions.is_empty());
        assert_eq!(set.candidates, 30); // 15 planes * 2 assignments
    }

    #[test]
    fn vacuous_threshold_yields_all() {
        let ds = synth::random_dataset(3, 6, 2);
        let n = ds.len() as u32;
        let set =
            enumerate_solutions(&ds, 1, Activation::Maxout, n + 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(set.solutions.len() as u64, set.candidates);
    }

    #[test]
    fn optimum_is_always_enumerated() {
        for seed in 0..5 {
            let ds = synth::random_dataset(seed, 7, 2);
            for activation in [Activation::Maxout, Activation::Relu] {
                let best = oracle_exact(&ds, 2, activation, DEFAULT_BUDGET).unwrap().best;
                let set =
                    enumerate_solutions(&ds, 2, activation, best.loss + 1, DEFAULT_BUDGET)
                        .unwrap();
                assert!(set.solutions.iter().any(|s| s.scored == best));
                // the filter is exactly "loss below threshold"
                assert!(set.solutions.iter().all(|s| s.scored.loss <= best.loss));
            }
        }
    }

    #[test]
    fn solution_records_carry_refittable_geometry() {
        let ds = synth::random_dataset(8, 6, 2);
        let set = enumerate_solutions(&ds, 1, Activation::Maxout, 4, DEFAULT_BUDGET).unwrap();
        for sol in &set.solutions {
            for (normal, combo) in sol.normals.iter().zip(&sol.defining) {
                let refit = geometry::fit_hyperplane(&ds, combo, DEFAULT_EPSILON).unwrap();
                assert_eq!(&refit, normal);
            }
        }
    }
}

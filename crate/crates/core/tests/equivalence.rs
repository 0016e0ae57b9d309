//! The fused divide-and-conquer pipeline must agree candidate-for-candidate
//! with the one-by-one reference search.

use deep_ice::combinatorics::{binomial, count_candidates};
use deep_ice::driver::{self, FitParams, MemoryMode, SplitShape};
use deep_ice::evaluator::assignments_per_tuple;
use deep_ice::geometry;
use deep_ice::model::Activation;
use deep_ice::oracle;
use deep_ice::synth;
use num_bigint::BigUint;

#[test]
fn driver_matches_oracle_on_random_instances() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let n = 4 + (seed % 6) as usize; // 4..=9
        let d = if seed % 2 == 0 { 2 } else { 3 };
        let k = if seed % 3 == 0 { 2 } else { 1 };
        let ds = synth::random_dataset(1000 + seed, n, d);
        if binomial(n as u64, d as u64).unwrap() < k as u64 {
            continue;
        }
        for activation in [Activation::Maxout, Activation::Relu] {
            let fast = driver::deep_ice(&ds, k, activation).unwrap();
            let slow = oracle::oracle_exact(&ds, k, activation, oracle::DEFAULT_BUDGET).unwrap();
            assert_eq!(fast.loss, slow.best.loss, "loss mismatch on seed {seed} {activation}");
            assert_eq!(fast, slow.best, "tie-broken identity mismatch on seed {seed} {activation}");
            checked += 1;
        }
    }
    assert!(checked >= 60);
}

#[test]
fn counters_and_split_shapes() {
    for seed in 0..6u64 {
        let n = 5 + (seed % 4) as usize;
        let ds = synth::random_dataset(2000 + seed, n, 2);
        let planes = binomial(n as u64, 2).unwrap();
        for k in [1usize, 2] {
            for split in [SplitShape::Balanced, SplitShape::LeftDeep, SplitShape::RightDeep] {
                let params = FitParams { split, ..FitParams::new(k, Activation::Maxout) };
                let report = driver::fit(&ds, &params).unwrap();
                assert_eq!(report.hyperplanes_created, planes);
                assert_eq!(
                    BigUint::from(report.candidates_evaluated),
                    count_candidates(n, 2, k) * assignments_per_tuple(k, Activation::Maxout),
                );
            }
        }
    }
}

/// Fused negated-assignment losses must equal direct re-evaluation with
/// geometrically negated normals.
#[test]
fn symmetric_fusion_against_negated_geometry() {
    use deep_ice::evaluator::{maxout_loss_direct, maxout_losses_fused, CacheRow};

    let mut exercised = 0u64;
    for seed in 0..8u64 {
        let n = 5 + (seed % 4) as usize;
        let ds = synth::random_dataset(3000 + seed, n, 2);
        let eps = geometry::DEFAULT_EPSILON;

        // all hyperplanes, plus their negated-normal sign rows computed
        // independently through the geometry path
        let mut rows = Vec::new();
        let mut neg_rows = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let h = geometry::fit_and_sign(&ds, &[i, j], eps).unwrap();
                let negated: Vec<f64> = h.normal.iter().map(|v| -v).collect();
                let (nonneg, strictpos) = geometry::sign_row(&negated, &ds, eps);
                rows.push(CacheRow { nonneg: h.nonneg, strictpos: h.strictpos, dots: None });
                neg_rows.push(CacheRow { nonneg, strictpos, dots: None });
            }
        }

        let labels = ds.labels_pos();
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                for mask in 0..2u64 {
                    let signs = [1i8, if mask == 1 { -1 } else { 1 }];
                    let pair = [&rows[a], &rows[b]];
                    let (_, fused_neg) = maxout_losses_fused(&pair, &signs, labels);
                    // reversing the assignment equals reversing every normal
                    let neg_pair = [&neg_rows[a], &neg_rows[b]];
                    let direct = maxout_loss_direct(&neg_pair, &signs, labels);
                    assert_eq!(fused_neg, direct);
                    exercised += 1;
                }
            }
        }
    }
    assert!(exercised > 2000, "exercised only {exercised} configs");
}

#[test]
fn on_demand_and_materialized_agree_with_oracle() {
    let ds = synth::random_dataset(77, 8, 3);
    for activation in [Activation::Maxout, Activation::Relu] {
        let slow = oracle::oracle_exact(&ds, 2, activation, oracle::DEFAULT_BUDGET).unwrap().best;
        for mode in [MemoryMode::Materialize, MemoryMode::OnDemand] {
            let params = FitParams { memory_mode: mode, ..FitParams::new(2, activation) };
            let fast = driver::fit(&ds, &params).unwrap().best;
            assert_eq!(fast, slow);
        }
    }
}

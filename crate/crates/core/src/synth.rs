//! Seeded synthetic datasets in general position, for tests and the
//! `gen-data` command.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::Dataset;

/// Standard-normal point cloud with independent random ±1 labels.
/// Continuous coordinates put the points in general position almost surely.
pub fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let labels: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    Dataset::from_rows(&rows, &labels).expect("synthetic rows are well-formed")
}

/// Points labelled by a random affine separator, resampled until every
/// point clears the separator by `margin`.
pub fn separable_dataset(seed: u64, n: usize, d: usize, margin: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..=d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut w {
        *v /= norm;
    }
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let p: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let score: f64 = p.iter().zip(&w).map(|(x, c)| x * c).sum::<f64>() + w[d];
        if score.abs() < margin {
            continue;
        }
        labels.push(if score > 0.0 { 1 } else { -1 });
        rows.push(p);
    }
    Dataset::from_rows(&rows, &labels).expect("synthetic rows are well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let a = random_dataset(42, 10, 3);
        let b = random_dataset(42, 10, 3);
        assert_eq!(a.point(7), b.point(7));
        assert_eq!(a.labels(), b.labels());
        let c = random_dataset(43, 10, 3);
        assert_ne!(a.point(0), c.point(0));
    }

    #[test]
    fn separable_has_both_margins() {
        let ds = separable_dataset(1, 30, 2, 0.25);
        assert_eq!(ds.len(), 30);
        assert!(ds.labels().iter().any(|&l| l == 1));
        assert!(ds.labels().iter().any(|&l| l == -1));
    }
}

//! Shared domain types: datasets, hyperplanes, configurations, scores.

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};

/// Hidden-layer activation of the two-layer network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Maxout,
    Relu,
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Maxout => write!(f, "maxout"),
            Activation::Relu => write!(f, "relu"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "maxout" => Ok(Activation::Maxout),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation {other:?} (expected maxout or relu)")),
        }
    }
}

/// A labelled point list in R^D.
///
/// Points are stored row-major; labels are ±1 and mirrored into a
/// positive-label bitset so a 0-1 loss is one XOR plus a popcount.
/// General position (no D+1 points on a common affine subspace) is assumed,
/// not checked here; violations surface as fit errors.
#[derive(Clone, Debug)]
pub struct Dataset {
    coords: Vec<f64>,
    n: usize,
    dim: usize,
    labels: Vec<i8>,
    labels_pos: Bits,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>], labels: &[i8]) -> Result<Self> {
        let n = rows.len();
        if labels.len() != n {
            return Err(Error::InvalidParams(format!(
                "{} labels for {} points",
                labels.len(),
                n
            )));
        }
        let dim = rows.first().map_or(2, |r| r.len());
        if dim < 2 {
            return Err(Error::InvalidParams(format!("need dimension >= 2, got {dim}")));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParams(format!("point {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(row);
        }
        for (i, &l) in labels.iter().enumerate() {
            if l != 1 && l != -1 {
                return Err(Error::InvalidParams(format!("label {l} at row {i}; labels must be ±1")));
            }
        }
        let labels_pos = Bits::from_fn(n, |i| labels[i] == 1);
        Ok(Dataset { coords, n, dim, labels: labels.to_vec(), labels_pos })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Bitset with bit n set when label n is +1.
    pub fn labels_pos(&self) -> &Bits {
        &self.labels_pos
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.point(i).to_vec()).collect();
        let labels: Vec<i8> = indices.iter().map(|&i| self.label(i)).collect();
        Dataset::from_rows(&rows, &labels)
    }
}

/// A homogeneous hyperplane spanned by D data points.
///
/// `normal` has D+1 coordinates (the last is the bias) and is canonical:
/// unit length with positive first nonzero coordinate. The two masks hold
/// the sign row over the dataset the plane was fitted on.
#[derive(Clone, Debug)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    /// Colexicographic rank of the D point indices spanning the plane.
    pub defining_rank: u64,
    /// Bit n set when normal · x̄_n >= -ε.
    pub nonneg: Bits,
    /// Bit n set when normal · x̄_n > ε.
    pub strictpos: Bits,
}

impl Hyperplane {
    /// Signed homogeneous dot product with a point.
    pub fn dot(&self, point: &[f64]) -> f64 {
        dot_homogeneous(&self.normal, point)
    }
}

#[inline]
pub(crate) fn dot_homogeneous(normal: &[f64], point: &[f64]) -> f64 {
    debug_assert_eq!(normal.len(), point.len() + 1);
    let mut acc = normal[point.len()];
    for (w, x) in normal[..point.len()].iter().zip(point) {
        acc += w * x;
    }
    acc
}

/// Scales a normal to unit length and flips it so the first nonzero
/// coordinate is positive, giving one representative per parallel class.
pub fn canonicalize_normal(w: &[f64]) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    canonicalize_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn canonicalize_in_place(w: &mut [f64]) -> Result<()> {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateNormal);
    }
    for v in w.iter_mut() {
        *v /= norm;
    }
    let lead = w.iter().find(|v| **v != 0.0).copied().unwrap_or(0.0);
    if lead < 0.0 {
        for v in w.iter_mut() {
            *v = -*v;
        }
    }
    Ok(())
}

/// One searchable unit: K hyperplane ranks plus a length-K sign assignment.
///
/// For maxout the signs orient the normals; for relu they are the ±1 output
/// weights applied to each ReLU term.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Config {
    /// Strictly increasing hyperplane ranks.
    pub ranks: Vec<u64>,
    /// Signs in {+1, -1}, one per rank.
    pub signs: Vec<i8>,
    pub activation: Activation,
}

impl Config {
    pub fn new(ranks: Vec<u64>, signs: Vec<i8>, activation: Activation) -> Self {
        debug_assert_eq!(ranks.len(), signs.len());
        debug_assert!(ranks.windows(2).all(|w| w[0] < w[1]));
        Config { ranks, signs, activation }
    }

    pub fn k(&self) -> usize {
        self.ranks.len()
    }

    /// The same configuration with every sign flipped.
    pub fn negated(&self) -> Config {
        Config {
            ranks: self.ranks.clone(),
            signs: self.signs.iter().map(|s| -s).collect(),
            activation: self.activation,
        }
    }
}

/// A configuration together with its 0-1 loss on a reference dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredConfig {
    pub config: Config,
    /// Misclassification count on the reference dataset.
    pub loss: u32,
    /// Block the configuration came from, for coreset filtering runs.
    pub source_block: Option<usize>,
}

impl ScoredConfig {
    pub fn new(config: Config, loss: u32) -> Self {
        ScoredConfig { config, loss, source_block: None }
    }

    /// Total order used everywhere a minimum is taken: loss first, then
    /// ranks, then signs (numeric, so -1 sorts before +1). Keeping this a
    /// total order makes the divide-and-conquer fold order-independent.
    pub fn key(&self) -> (u32, &[u64], &[i8]) {
        (self.loss, &self.config.ranks, &self.config.signs)
    }
}

impl PartialOrd for ScoredConfig {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoredConfig {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn canonicalize_sign_and_scale() {
        assert_eq!(canonicalize_normal(&[0.0, -2.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(canonicalize_normal(&[3.0, 4.0, 0.0]).unwrap(), vec![0.6, 0.8, 0.0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(&canonicalize_normal(&[-1.0, 1.0, 0.0]).unwrap(), &[r, -r, 0.0], 1e-15);
    }

    #[test]
    fn canonicalize_zero_vector_fails() {
        assert!(matches!(canonicalize_normal(&[0.0, 0.0, 0.0]), Err(Error::DegenerateNormal)));
    }

    #[test]
    fn canonicalize_idempotent_and_scale_invariant() {
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state as f64 / u64::MAX as f64) * 4.0 - 2.0
        };
        for _ in 0..200 {
            let w: Vec<f64> = (0..4).map(|_| next()).collect();
            if w.iter().all(|v| v.abs() < 1e-3) {
                continue;
            }
            let c = canonicalize_normal(&w).unwrap();
            let cc = canonicalize_normal(&c).unwrap();
            assert_close(&c, &cc, 1e-12);
            for scale in [2.0, -2.0, 3.7, -0.01] {
                let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
                assert_close(&canonicalize_normal(&scaled).unwrap(), &c, 1e-12);
            }
            let norm: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_validates_shapes() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let ds = Dataset::from_rows(&rows, &[1, -1]).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.point(1), &[2.0, 3.0]);
        assert!(ds.labels_pos().get(0));
        assert!(!ds.labels_pos().get(1));

        assert!(Dataset::from_rows(&rows, &[1]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0]], &[1]).is_err());
        assert!(Dataset::from_rows(&rows, &[1, 2]).is_err());
        assert!(Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0, 4.0]], &[1, -1]).is_err());
    }

    #[test]
    fn scored_config_ordering() {
        let mk = |ranks: Vec<u64>, signs: Vec<i8>, loss| {
            ScoredConfig::new(Config::new(ranks, signs, Activation::Maxout), loss)
        };
        let a = mk(vec![0, 4], vec![1, 1], 3);
        let b = mk(vec![1, 2], vec![1, 1], 5);
        assert!(a < b);
        let c = mk(vec![0, 4], vec![1, 1], 5);
        let d = mk(vec![1, 2], vec![1, 1], 5);
        assert!(c < d); // tie on loss, ranks decide
        let e = mk(vec![1, 2], vec![-1, 1], 5);
        assert!(e < d); // tie on ranks, numeric sign order decides
    }
}

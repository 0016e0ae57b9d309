//! Fitting the homogeneous hyperplane through D data points and computing
//! its sign row over a dataset.

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::{canonicalize_in_place, dot_homogeneous, Dataset, Hyperplane};
use crate::combinatorics::rank_combination;

/// Default on-plane tolerance on unit-normalized normals. Ingestion jitter
/// has standard deviation 1e-8, so at unit data scale non-defining points
/// clear this band by an order of magnitude.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Solves the one-dimensional null space of the D x (D+1) homogeneous
/// system whose rows are the given points, by elimination with partial
/// pivoting. The result is canonical (unit length, first nonzero
/// coordinate positive).
pub fn fit_from_points(points: &[&[f64]]) -> Result<Vec<f64>> {
    let d = points.len();
    let cols = d + 1;
    let degenerate = |reason: &str| Error::Degeneracy {
        combo: Vec::new(),
        reason: reason.to_string(),
    };
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
    }

    // rows are homogeneous points (x, 1)
    let mut a = vec![0.0f64; d * cols];
    for (r, p) in points.iter().enumerate() {
        a[r * cols..r * cols + d].copy_from_slice(p);
        a[r * cols + d] = 1.0;
    }

    let mut pivot_col = vec![usize::MAX; d];
    let mut is_pivot = vec![false; cols];
    let mut row = 0;
    for col in 0..cols {
        if row == d {
            break;
        }
        // partial pivoting: largest magnitude entry in this column
        let (best_row, best_val) = (row..d)
            .map(|r| (r, a[r * cols + col]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .unwrap();
        if best_val == 0.0 {
            continue;
        }
        if best_row != row {
            for c in 0..cols {
                a.swap(row * cols + c, best_row * cols + c);
            }
        }
        for r in row + 1..d {
            let factor = a[r * cols + col] / a[row * cols + col];
            if factor != 0.0 {
                a[r * cols + col] = 0.0;
                for c in col + 1..cols {
                    a[r * cols + c] -= factor * a[row * cols + c];
                }
            }
        }
        pivot_col[row] = col;
        is_pivot[col] = true;
        row += 1;
    }

    if row < d {
        return Err(degenerate(&format!(
            "points are affinely dependent (rank {row} of {d}); null space is not one-dimensional"
        )));
    }
    let free_col = (0..cols).find(|&c| !is_pivot[c]).expect("d pivots leave one free column");

    // back-substitute with the free coordinate set to one
    let mut w = vec![0.0f64; cols];
    w[free_col] = 1.0;
    for r in (0..d).rev() {
        let pc = pivot_col[r];
        let mut acc = 0.0;
        for c in pc + 1..cols {
            acc += a[r * cols + c] * w[c];
        }
        w[pc] = -acc / a[r * cols + pc];
    }

    canonicalize_in_place(&mut w).map_err(|_| degenerate("null space vector vanished"))?;
    Ok(w)
}

/// Fits the hyperplane spanned by the given D point indices.
///
/// The returned normal is canonical and satisfies |w · x̄_i| <= `epsilon`
/// for every selected point.
pub fn fit_hyperplane(ds: &Dataset, combo: &[usize], epsilon: f64) -> Result<Vec<f64>> {
    let d = ds.dim();
    if combo.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: combo.len() });
    }
    if combo.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCombination(combo.iter().map(|&i| i as u64).collect()));
    }
    if let Some(&bad) = combo.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidParams(format!(
            "point index {bad} out of range for {} points",
            ds.len()
        )));
    }
    let rows: Vec<&[f64]> = combo.iter().map(|&i| ds.point(i)).collect();
    let w = fit_from_points(&rows).map_err(|e| match e {
        Error::Degeneracy { reason, .. } => Error::Degeneracy { combo: combo.to_vec(), reason },
        other => other,
    })?;
    for &i in combo {
        let r = dot_homogeneous(&w, ds.point(i));
        if r.abs() > epsilon {
            return Err(Error::Degeneracy {
                combo: combo.to_vec(),
                reason: format!("residual {r:e} at defining point {i} exceeds {epsilon:e}"),
            });
        }
    }
    Ok(w)
}

/// Sign row of a normal over the dataset: bit n of `nonneg` is set when
/// w · x̄_n >= -ε, bit n of `strictpos` when w · x̄_n > ε.
pub fn sign_row(normal: &[f64], ds: &Dataset, epsilon: f64) -> (Bits, Bits) {
    let n = ds.len();
    let mut nonneg = Bits::zeros(n);
    let mut strictpos = Bits::zeros(n);
    for i in 0..n {
        let d = dot_homogeneous(normal, ds.point(i));
        if d >= -epsilon {
            nonneg.set(i, true);
        }
        if d > epsilon {
            strictpos.set(i, true);
        }
    }
    (nonneg, strictpos)
}

/// Raw homogeneous dot products of a normal with every point.
pub fn dot_row(normal: &[f64], ds: &Dataset) -> Vec<f64> {
    (0..ds.len()).map(|i| dot_homogeneous(normal, ds.point(i))).collect()
}

/// Fits a hyperplane and its sign row, then checks the general-position
/// contract: the on-plane band must contain exactly the D defining points.
pub fn fit_and_sign(ds: &Dataset, combo: &[usize], epsilon: f64) -> Result<Hyperplane> {
    let normal = fit_hyperplane(ds, combo, epsilon)?;
    let (nonneg, strictpos) = sign_row(&normal, ds, epsilon);
    let mut on_plane = 0usize;
    for i in 0..ds.len() {
        if nonneg.get(i) && !strictpos.get(i) {
            on_plane += 1;
            if !combo.contains(&i) {
                return Err(Error::Degeneracy {
                    combo: combo.to_vec(),
                    reason: format!(
                        "point {i} lies on the plane but is not a defining point; \
                         the dataset is not in general position at epsilon {epsilon:e}"
                    ),
                });
            }
        }
    }
    if on_plane != ds.dim() {
        return Err(Error::Degeneracy {
            combo: combo.to_vec(),
            reason: format!("{on_plane} on-plane points, expected exactly {}", ds.dim()),
        });
    }
    let rank_combo: Vec<u64> = combo.iter().map(|&i| i as u64).collect();
    Ok(Hyperplane {
        normal,
        defining_rank: rank_combination(&rank_combo)?,
        nonneg,
        strictpos,
    })
}

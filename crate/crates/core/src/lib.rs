//! Exact 0-1 loss training of two-layer maxout and ReLU networks.
//!
//! Every decision boundary of a two-layer network with K hidden units is
//! governed by a K-combination of hyperplanes, and over a finite dataset in
//! general position every relevant hyperplane is spanned by D data points.
//! The trainer enumerates all C(C(N,D),K) combinations with a recursive
//! divide-and-conquer generator that merges combination tables across data
//! segments, fits each hyperplane exactly once, streams completed size-K
//! combinations through sign-assignment evaluation, and folds a global
//! minimum. A symmetric-fusion identity halves the maxout assignment
//! enumeration; a coreset filter makes larger datasets tractable by solving
//! shuffled blocks exactly and keeping the best configurations in a bounded
//! heap until the survivor set fits the exact solver.
//!
//! Entry points: [`driver::fit`] / [`driver::deep_ice`] for exact training,
//! [`coreset::coreset_fit`] for the filtering wrapper, and
//! [`oracle::oracle_exact`] for the slow one-by-one reference search.

pub mod bits;
pub mod combinatorics;
pub mod coreset;
pub mod driver;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod model;
pub mod oracle;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Activation, Config, Dataset, Hyperplane, ScoredConfig};

use thiserror::Error;

/// Errors produced by the training library.
#[derive(Debug, Error)]
pub enum Error {
    /// A zero vector has no canonical hyperplane normal.
    #[error("cannot canonicalize a zero normal vector")]
    DegenerateNormal,

    /// The selected points do not span a unique hyperplane, or a fitted
    /// hyperplane violates the general-position assumption on the dataset.
    #[error("degenerate point combination {combo:?}: {reason}")]
    Degeneracy { combo: Vec<usize>, reason: String },

    /// A combination argument was not strictly increasing.
    #[error("combination {0:?} is not strictly increasing")]
    InvalidCombination(Vec<u64>),

    /// Two tables being merged share an element; merge inputs must cover
    /// disjoint segments.
    #[error("cannot merge tables with overlapping element {0}")]
    OverlappingSegments(u64),

    /// The dataset cannot support a single configuration of k distinct
    /// hyperplanes (requires C(n, d) >= k).
    #[error("no configuration exists: n={n}, d={d} gives {planes} hyperplanes, need at least k={k}")]
    NoConfig { n: usize, d: usize, planes: u64, k: usize },

    /// A hyperplane rank was requested that has not been created.
    #[error("hyperplane rank {0} is not present in the prediction cache")]
    CacheMiss(u64),

    /// ReLU evaluation needs raw dot products, which this cache was built
    /// without.
    #[error("prediction cache holds no dot products; rebuild it in relu mode")]
    MissingDots,

    /// The requested enumeration exceeds the configured candidate budget.
    #[error("candidate budget exceeded: {candidates} candidates > budget {budget}")]
    BudgetExceeded { candidates: num_bigint::BigUint, budget: u64 },

    /// The requested run does not fit in the configured memory cap.
    #[error("memory cap exceeded: run needs about {needed} bytes, cap is {cap}")]
    MemoryCapExceeded { needed: u128, cap: u64 },

    /// Invalid filter or fit parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Coreset filtering produced an empty survivor set.
    #[error("coreset filtering collapsed at layer {layer}: empty survivor set (heap size {heap}, block size {block})")]
    FilteringCollapse { layer: usize, heap: usize, block: usize },

    /// Coreset filtering stopped shrinking while still above the exact-solver
    /// bound; the given parameters cannot terminate.
    #[error("coreset filtering stalled at layer {layer}: survivor set stuck at {size} points (> bmax {bmax})")]
    FilteringStalled { layer: usize, size: usize, bmax: usize },

    /// A stored configuration references points that are missing from the
    /// dataset it is being rescored on.
    #[error("configuration integrity violation: {0}")]
    Integrity(String),

    /// Point dimensionality does not match the model or dataset.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

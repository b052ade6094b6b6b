//! Graph-structured sparse linear algebra.
//!
//! A linear system `A·x = b` is solved in three graph stages:
//!
//! 1. **Structure analysis** ([`order`], [`symbolic_analyze`]): a minimum-degree
//!    ordering of the adjacency graph of `A`, the elimination tree of the
//!    permuted matrix, the fill pattern of `L + U`, and a level schedule that
//!    groups tree vertices with no ancestor/descendant relation.
//! 2. **Numeric factorization** ([`factorize`]): left-looking LU without
//!    pivoting on the precomputed fill pattern, processed level by level.
//!    Vertices inside a level only read columns from lower levels, so a level
//!    may be computed concurrently; levels act as barriers.
//! 3. **Solving** ([`solve`]): forward and backward substitution on the
//!    factors.
//!
//! The symbolic stage depends only on the nonzero pattern. Any matrix whose
//! pattern is contained in the analysed fill pattern can be refactorized with
//! the same [`SymbolicStructure`]; this is how temporal snapshots and
//! contingency cases avoid repeated structure analysis.
//!
//! [`pcg_solve`] adds a conjugate-gradient solver that uses the factors of a
//! nearby matrix (typically the base case) as preconditioner.

mod coordinate;
mod numeric;
mod ordering;
mod pcg;
mod sparse;
mod symbolic;

pub use coordinate::{read_coordinate, write_coordinate};
pub use numeric::{factorize, factorize_with, solve, NumericFactors, Parallelism};
pub use ordering::{order, Permutation};
pub use pcg::{pcg_solve, PcgSolution};
pub use sparse::{SparseSystem, Symmetry};
pub use symbolic::{symbolic_analyze, SymbolicStructure};

use thiserror::Error;

/// Errors raised by the sparse solver stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("sparse system must have dimension >= 1")]
    EmptySystem,
    #[error("entry ({row}, {col}) lies outside a {n}x{n} system")]
    OutOfBounds { row: usize, col: usize, n: usize },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("invalid permutation for dimension {n}")]
    InvalidPermutation { n: usize },
    #[error("entry ({row}, {col}) is outside the symbolic fill pattern")]
    PatternMismatch { row: usize, col: usize },
    #[error("zero pivot at vertex {vertex} (|pivot| = {magnitude:e})")]
    SingularPivot { vertex: usize, magnitude: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("conjugate gradient breakdown at iteration {iteration}: matrix is not positive definite")]
    Breakdown { iteration: usize },
    #[error("coordinate format, line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = FactorError> = std::result::Result<T, E>;

/// Relative pivot threshold: a pivot is treated as zero below this fraction of `‖A‖_max`.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

//! Entropic optimal transport between destination and source token sets.
//!
//! [`build_cost_matrix`] mixes cosine feature distance with spatial distance
//! on the token grid; [`sinkhorn`] solves the entropy-regularized balanced
//! problem with uniform marginals and returns the coupling.

mod cost;
mod sinkhorn;

use thiserror::Error;

pub use cost::{build_cost_matrix, dot, feature_distance, spatial_distance, CostMatrix, CostParams};
pub use sinkhorn::{entropic_objective, row_normalize, sinkhorn, SinkhornConfig, TransportPlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite or negative cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("kernel scaling overflowed at iteration {iteration}; use the log-domain solver")]
    NumericalOverflow { iteration: usize },
    #[error("row {0} of the transport plan has zero mass")]
    ZeroRow(usize),
}

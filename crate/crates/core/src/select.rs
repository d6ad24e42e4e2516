//! Head averaging and percentile thresholding of cross-attention maps.
//!
//! A position joins the source set when the blend-prompt map reaches its
//! `tau_source` percentile, and the destination set when the replaced-prompt
//! map reaches its `tau_dest` percentile. The two sets are built independently
//! and may overlap.

use ndarray::Array3;
use thiserror::Error;

use crate::types::Grid;

/// Tolerance on softmax row sums for loaded attention.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("token index {index} out of range for {len} text tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("percentile of an empty vector")]
    EmptyVector,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("percentile {0} outside [0, 100]")]
    InvalidPercentile(f64),
    #[error("token selector is empty")]
    EmptySelector,
    #[error("attention stack has {tokens} spatial tokens but grid {grid} holds {}", grid.len())]
    GridMismatch { tokens: usize, grid: Grid },
    #[error("invalid attention stack: {0}")]
    InvalidStack(String),
    #[error("{0} set is empty after thresholding")]
    EmptySet(&'static str),
}

/// Per-head cross-attention weights `H × N × M`.
#[derive(Debug, Clone)]
pub struct AttentionStack {
    weights: Array3<f64>,
    grid: Grid,
}

/// Softmax-row violations found in a stack.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StackReport {
    pub rows_checked: usize,
    pub rows_off_simplex: usize,
    pub entries_out_of_range: usize,
    pub max_row_error: f64,
}

impl StackReport {
    pub fn is_clean(&self) -> bool {
        self.rows_off_simplex == 0 && self.entries_out_of_range == 0
    }
}

impl AttentionStack {
    /// Checks structure only; softmax validity is reported by
    /// [`AttentionStack::check_rows`] so callers decide whether it is fatal.
    pub fn new(weights: Array3<f64>, grid: Grid) -> Result<Self, SelectError> {
        let (heads, tokens, text) = weights.dim();
        if heads == 0 || text == 0 {
            return Err(SelectError::InvalidStack(format!(
                "shape ({heads}, {tokens}, {text}) has an empty axis"
            )));
        }
        if tokens != grid.len() || tokens == 0 {
            return Err(SelectError::GridMismatch { tokens, grid });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(SelectError::InvalidStack("non-finite weight".into()));
        }
        Ok(AttentionStack { weights, grid })
    }

    pub fn heads(&self) -> usize {
        self.weights.dim().0
    }

    pub fn tokens(&self) -> usize {
        self.weights.dim().1
    }

    pub fn text_tokens(&self) -> usize {
        self.weights.dim().2
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn weights(&self) -> &Array3<f64> {
        &self.weights
    }

    pub fn check_rows(&self, tolerance: f64) -> StackReport {
        let mut report = StackReport::default();
        for head in self.weights.outer_iter() {
            for row in head.outer_iter() {
                report.rows_checked += 1;
                let sum: f64 = row.iter().sum();
                let err = (sum - 1.0).abs();
                report.max_row_error = report.max_row_error.max(err);
                if err > tolerance {
                    report.rows_off_simplex += 1;
                }
                report.entries_out_of_range +=
                    row.iter().filter(|w| !(0.0..=1.0).contains(*w)).count();
            }
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// Text-token columns naming one object phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSelector {
    indices: Vec<usize>,
    pooling: Pooling,
}

impl TokenSelector {
    pub fn new(indices: Vec<usize>, pooling: Pooling) -> Result<Self, SelectError> {
        if indices.is_empty() {
            return Err(SelectError::EmptySelector);
        }
        Ok(TokenSelector { indices, pooling })
    }

    pub fn single(index: usize) -> Self {
        TokenSelector {
            indices: vec![index],
            pooling: Pooling::Mean,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }
}

/// Head-averaged attention of the selected phrase at every spatial position.
pub fn head_average(stack: &AttentionStack, selector: &TokenSelector) -> Result<Vec<f64>, SelectError> {
    let (heads, tokens, text) = stack.weights.dim();
    if let Some(&index) = selector.indices.iter().find(|&&i| i >= text) {
        return Err(SelectError::IndexOutOfRange { index, len: text });
    }
    let scale = 1.0 / heads as f64;
    let mut out = Vec::with_capacity(tokens);
    for i in 0..tokens {
        let column_mean = |col: usize| {
            let mut s = 0.0;
            for h in 0..heads {
                s += stack.weights[[h, i, col]];
            }
            s * scale
        };
        let pooled = match selector.pooling {
            Pooling::Mean => {
                let total: f64 = selector.indices.iter().map(|&c| column_mean(c)).sum();
                total / selector.indices.len() as f64
            }
            Pooling::Max => selector
                .indices
                .iter()
                .map(|&c| column_mean(c))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        out.push(pooled);
    }
    Ok(out)
}

/// Nearest-rank percentile: the element at sorted position
/// `ceil(tau/100 · n) − 1`, clamped to the valid range.
pub fn percentile_value(v: &[f64], tau: f64) -> Result<f64, SelectError> {
    if v.is_empty() {
        return Err(SelectError::EmptyVector);
    }
    if !(0.0..=100.0).contains(&tau) {
        return Err(SelectError::InvalidPercentile(tau));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (tau * n as f64 / 100.0).ceil() as usize;
    Ok(sorted[rank.saturating_sub(1).min(n - 1)])
}

/// Source (`S`) and destination (`D`) token sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    source: Vec<usize>,
    dest: Vec<usize>,
    grid: Grid,
}

impl IndexSets {
    pub fn new(source: Vec<usize>, dest: Vec<usize>, grid: Grid) -> Result<Self, SelectError> {
        if source.is_empty() {
            return Err(SelectError::EmptySet("source"));
        }
        if dest.is_empty() {
            return Err(SelectError::EmptySet("destination"));
        }
        let n = grid.len();
        if let Some(&index) = source.iter().chain(&dest).find(|&&i| i >= n) {
            return Err(SelectError::IndexOutOfRange { index, len: n });
        }
        let mut source = source;
        let mut dest = dest;
        source.sort_unstable();
        source.dedup();
        dest.sort_unstable();
        dest.dedup();
        Ok(IndexSets { source, dest, grid })
    }

    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn dest(&self) -> &[usize] {
        &self.dest
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
}

fn threshold(v: &[f64], tau: f64) -> Result<Vec<usize>, SelectError> {
    let q = percentile_value(v, tau)?;
    Ok((0..v.len()).filter(|&i| v[i] >= q).collect())
}

pub fn build_index_sets(
    a_blend: &[f64],
    a_replaced: &[f64],
    tau_source: f64,
    tau_dest: f64,
    grid: Grid,
) -> Result<IndexSets, SelectError> {
    let n = grid.len();
    for v in [a_blend, a_replaced] {
        if v.len() != n {
            return Err(SelectError::LengthMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    let source = threshold(a_blend, tau_source)?;
    let dest = threshold(a_replaced, tau_dest)?;
    IndexSets::new(source, dest, grid)
}

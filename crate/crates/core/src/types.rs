//! Types shared by the fusion pipelines.

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

/// Spatial layout of the N image tokens as a `rows × cols` raster,
/// flattened row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Grid { rows, cols }
    }

    /// A square grid for `n` tokens, if `n` is a perfect square.
    pub fn square(n: usize) -> Option<Self> {
        let side = (n as f64).sqrt().round() as usize;
        (side * side == n).then(|| Grid::new(side, side))
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of a flat token index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Cell centre in normalized coordinates, both in `(0, 1)`.
    pub fn center(&self, index: usize) -> (f64, f64) {
        let (r, c) = self.coords(index);
        (
            (r as f64 + 0.5) / self.rows as f64,
            (c as f64 + 0.5) / self.cols as f64,
        )
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("feature matrix has no channels")]
    NoChannels,
    #[error("non-finite feature at token {row}, channel {col}")]
    NonFinite { row: usize, col: usize },
}

/// Token-wise features, `N × D`: one row per spatial token, `D = H·d_k`
/// channels from the concatenated attention heads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, FeatureError> {
        if values.ncols() == 0 {
            return Err(FeatureError::NoChannels);
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row, col });
        }
        Ok(FeatureMatrix(values))
    }

    pub fn tokens(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

impl AsRef<Array2<f64>> for FeatureMatrix {
    fn as_ref(&self) -> &Array2<f64> {
        &self.0
    }
}

//! Edit-quality scores.
//!
//! [`composite`] turns raw CLIP/LPIPS scores into the blend (BOM) and
//! blend-plus-style (BOSM) harmonic means; [`texture`] measures texture
//! richness of grayscale images.

pub mod composite;
pub mod texture;

use thiserror::Error;

pub use composite::{
    bom, bosm, normalize_scores, normalize_value, score_table, BosmNumerator, ColumnRange, MetricWeights,
    NormalizationSpec, NormalizedRecord, ScoreColumn, ScoredRecord,
};
pub use texture::{
    fft_high_frequency_sum, glcm_contrast, laplacian_variance, GrayImage, TextureMetrics, DEFAULT_HFS_CUTOFF,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("column {0} has no spread (min == max); cannot normalize")]
    DegenerateRange(&'static str),
    #[error("column {column}: {value} lies outside the normalization range [{min}, {max}]")]
    OutsideRange {
        column: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("harmonic-mean input {0} is not positive")]
    NonPositiveInput(f64),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid normalization: {0}")]
    InvalidNormalization(String),
    #[error("image is {rows}x{cols}; at least {min}x{min} required")]
    TooSmall { rows: usize, cols: usize, min: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("HFS cutoff must lie in [0, 1), got {0}")]
    InvalidCutoff(f64),
}

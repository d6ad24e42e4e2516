//! Fixture builders shared by the criterion benches.

use attnblend_core::synthetic::{style_injection_fixture, SyntheticSpec};
use attnblend_core::{FeatureMatrix, Grid};
use ndarray::Array2;

/// Deterministic pseudo-random matrix with entries in `[-1, 1)`.
pub fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Array2::from_shape_fn((rows, cols), |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}

pub fn features(tokens: usize, channels: usize, seed: u64) -> FeatureMatrix {
    FeatureMatrix::new(lcg_matrix(tokens, channels, seed)).expect("finite")
}

/// SD-XL-sized synthetic spec with `side × side` tokens.
pub fn sdxl_spec(side: usize) -> SyntheticSpec {
    SyntheticSpec {
        grid: Grid::new(side, side),
        samples: 0,
        ..Default::default()
    }
}

pub fn style_pair(side: usize) -> (FeatureMatrix, FeatureMatrix, Grid) {
    style_injection_fixture(7, side, 16)
}

pub mod caof;
pub mod metrics;
pub mod sasf;
pub mod synth;

use std::path::{Path, PathBuf};

use attnblend_core::io::{atomic_write, load_array, DenseArray, Dtype};
use attnblend_core::{AttentionStack, FeatureMatrix, Grid};

use crate::error::CliError;

pub fn load_features(path: &Path) -> Result<(FeatureMatrix, Dtype), CliError> {
    let arr = load_array(path)?;
    let dtype = arr.dtype();
    let m = arr.to_matrix().map_err(|e| {
        CliError::validation("SHAPE_MISMATCH", format!("{}: {e}", path.display()))
    })?;
    Ok((FeatureMatrix::new(m)?, dtype))
}

/// Loads an `H × N × M` stack; without an explicit grid, `N` must be a
/// perfect square.
pub fn load_stack(path: &Path, grid: Option<Grid>) -> Result<AttentionStack, CliError> {
    let arr = load_array(path)?;
    let weights = arr.to_array3().map_err(|e| {
        CliError::validation("SHAPE_MISMATCH", format!("{}: {e}", path.display()))
    })?;
    let tokens = weights.dim().1;
    let grid = match grid {
        Some(g) => g,
        None => Grid::square(tokens).ok_or_else(|| {
            CliError::validation(
                "GRID_REQUIRED",
                format!("{}: {tokens} tokens is not a square grid; pass --grid RxC", path.display()),
            )
        })?,
    };
    Ok(AttentionStack::new(weights, grid)?)
}

pub fn save_features(f: &FeatureMatrix, dtype: Dtype, path: &Path) -> Result<(), CliError> {
    let bytes = attnblend_core::io::encode_npy(&DenseArray::from_matrix(f.values(), dtype));
    Ok(atomic_write(path, &bytes)?)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialize");
    text.push('\n');
    Ok(atomic_write(path, text.as_bytes())?)
}

/// `<out>.json` unless a path was given.
pub fn sidecar_path(out: &Path, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = out.as_os_str().to_owned();
            s.push(".json");
            PathBuf::from(s)
        }
    }
}

pub fn warn(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "warning": kind, "message": message }));
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

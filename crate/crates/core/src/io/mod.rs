//! File interchange: `.npy` (version 1.0) arrays and score tables.
//!
//! The core never depends on an ML framework; everything it consumes or
//! produces passes through these two formats.

mod npy;
mod scores;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use npy::{
    decode_npy, encode_npy, load_array, load_array_with, save_array, ArrayData, DenseArray, Dtype,
    LoadOptions, NPY_MAGIC,
};
pub use scores::{load_scores, parse_scores, save_scores, ScoreRecord, ScoreTable, SCORE_COLUMNS};

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file does not start with the \\x93NUMPY magic")]
    MagicMismatch,
    #[error("unsupported npy format version {major}.{minor}")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("unsupported dtype {0:?}; only '<f4' and '<f8' are accepted")]
    UnsupportedDtype(String),
    #[error("malformed npy header: {0}")]
    HeaderParse(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("payload has {found} bytes, expected exactly {expected}")]
    TrailingData { expected: usize, found: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape {shape:?} holds {expected} elements but {found} were supplied")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("score table is missing column {0:?}")]
    MissingColumn(String),
    #[error("score table has unexpected column {0:?}")]
    UnexpectedColumn(String),
    #[error("row {row}, column {column}: {value:?} is not a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: {value} outside [{min}, {max}]")]
    ValueOutOfRange {
        row: usize,
        column: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("duplicate sample_id {0:?}")]
    DuplicateSampleId(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl TensorIoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TensorIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), TensorIoError> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| TensorIoError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| TensorIoError::io(path, e))?;
    // temp files are created 0600; keep an existing file's mode, else 0644
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::metadata(path)
            .map(|m| m.permissions())
            .unwrap_or_else(|_| std::fs::Permissions::from_mode(0o644));
        tmp.as_file()
            .set_permissions(perms)
            .map_err(|e| TensorIoError::io(path, e))?;
    }
    tmp.as_file()
        .sync_all()
        .map_err(|e| TensorIoError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| TensorIoError::io(path, e.error))?;
    Ok(())
}

//! `--config` files. Every field is optional; a value given on the command
//! line wins over the file, and the file wins over the built-in default.

use std::path::Path;

use attnblend_core::Grid;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tau_source: Option<f64>,
    pub tau_dest: Option<f64>,
    pub lambda_feature: Option<f64>,
    pub lambda_spatial: Option<f64>,
    pub gamma: Option<f64>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub log_domain: Option<bool>,
    pub w0: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub kernel_size: Option<usize>,
    pub weights: Option<[f64; 4]>,
    pub norm_scope: Option<String>,
    pub epsilon: Option<f64>,
    pub hfs_cutoff: Option<f64>,
    pub seed: Option<u64>,
    pub strict: Option<bool>,
    pub allow_empty: Option<bool>,
    pub three_term_numerator: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = read_text(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation("CONFIG_PARSE", format!("{}: {e}", path.display())))
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::NotFound {
            "ENOENT"
        } else {
            "EIO"
        };
        CliError::validation(code, format!("{}: {e}", path.display()))
    })
}

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// A switch that is on when set by either the flag or the file.
pub fn pick_switch(flag: bool, file: Option<bool>) -> bool {
    flag || file.unwrap_or(false)
}

/// `RxC`, or a single number for a square grid.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("bad grid extent {p:?}: {e}"));
    let grid = match s.split_once(['x', 'X']) {
        Some((r, c)) => Grid::new(parse(r)?, parse(c)?),
        None => {
            let side = parse(s)?;
            Grid::new(side, side)
        }
    };
    if grid.is_empty() {
        return Err(format!("grid {s:?} is empty"));
    }
    Ok(grid)
}

pub fn parse_weights(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected wR,wB,wS,wL, got {s:?}"));
    }
    let mut out = [0.0; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("bad weight {p:?}: {e}"))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("64x48").unwrap(), Grid::new(64, 48));
        assert_eq!(parse_grid("8").unwrap(), Grid::new(8, 8));
        assert!(parse_grid("0x4").is_err());
        assert!(parse_grid("ax4").is_err());
    }

    #[test]
    fn weights_need_four_values() {
        assert_eq!(parse_weights("1,2,3,0.5").unwrap(), [1.0, 2.0, 3.0, 0.5]);
        assert!(parse_weights("1,2,3").is_err());
    }

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"gama": 0.1}"#).is_err());
        let c: FileConfig = serde_json::from_str(r#"{"gamma": 0.2, "weights": [1, 1, 2, 1]}"#).unwrap();
        assert_eq!(c.gamma, Some(0.2));
    }
}

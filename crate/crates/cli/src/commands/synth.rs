use std::path::{Path, PathBuf};

use attnblend_core::io::{encode_npy, save_scores, atomic_write, DenseArray, Dtype};
use attnblend_core::synthetic::{generate, SyntheticSpec, GENERATOR};
use attnblend_core::Grid;
use clap::Args;
use ndarray::Array2;
use serde_json::json;

use super::write_json;
use crate::config::{parse_grid, pick, FileConfig};
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Token grid as RxC or a single side length
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub text_tokens: Option<usize>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    /// 0 keeps the two objects apart, 1 puts their attention on the same region
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub replaced_token: Option<usize>,
    #[arg(long)]
    pub blend_token: Option<usize>,
    /// Rows in the generated score table
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also write target and style key/value matrices
    #[arg(long)]
    pub kv: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

struct Entry {
    name: &'static str,
    shape: Vec<usize>,
}

fn write_array(dir: &Path, name: &'static str, arr: DenseArray, entries: &mut Vec<Entry>) -> Result<(), CliError> {
    atomic_write(&dir.join(format!("{name}.npy")), &encode_npy(&arr))?;
    entries.push(Entry {
        name,
        shape: arr.shape().to_vec(),
    });
    Ok(())
}

fn matrix(m: &Array2<f64>) -> DenseArray {
    DenseArray::from_matrix(m, Dtype::F32)
}

pub fn run(a: SynthArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        seed: pick(a.seed, file.seed, d.seed),
        heads: a.heads.unwrap_or(d.heads),
        grid: a.grid.unwrap_or(d.grid),
        text_tokens: a.text_tokens.unwrap_or(d.text_tokens),
        head_dim: a.head_dim.unwrap_or(d.head_dim),
        overlap: a.overlap.unwrap_or(d.overlap),
        replaced_token: a.replaced_token.unwrap_or(d.replaced_token),
        blend_token: a.blend_token.unwrap_or(d.blend_token),
        samples: a.samples.unwrap_or(d.samples),
        with_kv: a.kv,
    };
    let fx = generate(&spec)?;

    std::fs::create_dir_all(&a.out_dir).map_err(|e| {
        CliError::validation("EIO", format!("{}: {e}", a.out_dir.display()))
    })?;
    let dir = a.out_dir.as_path();
    let mut entries = Vec::new();
    let stack = |s: &ndarray::Array3<f64>| {
        let shape = s.shape().to_vec();
        let data = s.iter().map(|&x| x as f32).collect();
        DenseArray::from_f32(shape, data).expect("shape matches data")
    };
    write_array(dir, "stack_replaced", stack(&fx.stack_replaced), &mut entries)?;
    write_array(dir, "stack_blend", stack(&fx.stack_blend), &mut entries)?;
    write_array(dir, "o_replaced", matrix(fx.o_replaced.values()), &mut entries)?;
    write_array(dir, "o_blend", matrix(fx.o_blend.values()), &mut entries)?;
    write_array(dir, "f_style", matrix(fx.f_style.values()), &mut entries)?;
    if let Some(kv) = &fx.kv {
        write_array(dir, "k_target", matrix(&kv.k_target), &mut entries)?;
        write_array(dir, "v_target", matrix(&kv.v_target), &mut entries)?;
        write_array(dir, "k_style", matrix(&kv.k_style), &mut entries)?;
        write_array(dir, "v_style", matrix(&kv.v_style), &mut entries)?;
    }
    save_scores(&fx.scores, &dir.join("scores.csv"))?;

    let manifest = json!({
        "run_id": format!("synthetic-seed{}", spec.seed),
        "generator": GENERATOR,
        "seed": spec.seed,
        "prompts": {
            "replaced": format!("synthetic replaced object (token {})", spec.replaced_token),
            "blend": format!("synthetic blend object (token {})", spec.blend_token),
            "style": "synthetic style reference",
        },
        "parameters": {
            "heads": spec.heads,
            "grid": spec.grid.to_string(),
            "text_tokens": spec.text_tokens,
            "head_dim": spec.head_dim,
            "overlap": spec.overlap,
            "samples": spec.samples,
            "kv": spec.with_kv,
        },
        "entries": entries.iter().map(|e| json!({
            "name": e.name,
            "path": format!("{}.npy", e.name),
            "shape": e.shape,
            "dtype": "float32",
            "layer": "synthetic",
            "timestep": 0,
        })).collect::<Vec<_>>(),
        "scores": "scores.csv",
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

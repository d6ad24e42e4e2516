use std::path::PathBuf;

use attnblend_core::io::{load_array, save_array};
use attnblend_core::sasf::{dsin_inject, kv_substitute, DsinConfig};
use clap::Args;
use serde_json::json;

use super::{load_features, path_str, save_features, sidecar_path, write_json};
use crate::config::{pick, FileConfig};
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct SasfArgs {
    /// Features to restyle, N×D
    #[arg(long)]
    pub replaced: PathBuf,
    /// Style-reference features, N×D
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics sidecar; defaults to `<out>.json`
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Also substitute the style keys and values for the target's
    #[arg(long, requires_all = ["k_target", "v_target", "k_style", "v_style", "k_out", "v_out"])]
    pub kv: bool,
    #[arg(long)]
    pub k_target: Option<PathBuf>,
    #[arg(long)]
    pub v_target: Option<PathBuf>,
    #[arg(long)]
    pub k_style: Option<PathBuf>,
    #[arg(long)]
    pub v_style: Option<PathBuf>,
    #[arg(long)]
    pub k_out: Option<PathBuf>,
    #[arg(long)]
    pub v_out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(a: SasfArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let defaults = DsinConfig::default();
    let cfg = DsinConfig {
        alpha: pick(a.alpha, file.alpha, defaults.alpha),
        sigma: pick(a.sigma, file.sigma, defaults.sigma),
        kernel_size: pick(a.kernel_size, file.kernel_size, defaults.kernel_size),
    };
    cfg.kernel()?;

    let (replaced, dtype) = load_features(&a.replaced)?;
    let (style, _) = load_features(&a.style)?;
    let out = dsin_inject(&replaced, &style, &cfg)?;

    let kv = if a.kv {
        // clap guarantees all six paths are present with --kv
        let p = |o: &Option<PathBuf>| o.clone().expect("required with --kv");
        let (kt, vt, ks, vs) = (p(&a.k_target), p(&a.v_target), p(&a.k_style), p(&a.v_style));
        let (k, v) = kv_substitute(&load_array(&kt)?, &load_array(&vt)?, &load_array(&ks)?, &load_array(&vs)?)?;
        Some((k, v, kt, vt, ks, vs))
    } else {
        None
    };

    save_features(&out, dtype, &a.out)?;
    let kv_json = match &kv {
        Some((k, v, kt, vt, ks, vs)) => {
            let (k_out, v_out) = (a.k_out.clone().expect("required"), a.v_out.clone().expect("required"));
            save_array(k, &k_out)?;
            save_array(v, &v_out)?;
            json!({
                "k_target": path_str(kt),
                "v_target": path_str(vt),
                "k_style": path_str(ks),
                "v_style": path_str(vs),
                "k_out": path_str(&k_out),
                "v_out": path_str(&v_out),
            })
        }
        None => serde_json::Value::Null,
    };
    let sidecar = json!({
        "command": "sasf",
        "inputs": {
            "replaced": path_str(&a.replaced),
            "style": path_str(&a.style),
        },
        "output": path_str(&a.out),
        "parameters": {
            "alpha": cfg.alpha,
            "sigma": cfg.sigma,
            "kernel_size": cfg.kernel_size,
            "kv": a.kv,
            "dtype": dtype.descr(),
        },
        "kv": kv_json,
        "tokens": out.tokens(),
        "channels": out.channels(),
    });
    write_json(&sidecar_path(&a.out, a.diagnostics.as_deref()), &sidecar)
}

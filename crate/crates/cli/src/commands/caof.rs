use std::path::PathBuf;

use attnblend_core::caof::{run_caof, BlendConfig, CaofConfig, CaofDiagnostics};
use attnblend_core::ot::{CostParams, SinkhornConfig};
use attnblend_core::select::{Pooling, SelectError, TokenSelector, ROW_SUM_TOLERANCE};
use attnblend_core::{AttentionStack, CaofError, Grid};
use clap::{Args, ValueEnum};
use serde_json::json;

use super::{load_features, load_stack, path_str, save_features, sidecar_path, warn, write_json};
use crate::config::{parse_grid, pick, pick_switch, FileConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Max,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Max => Pooling::Max,
        }
    }
}

#[derive(Debug, Args)]
pub struct CaofArgs {
    /// Cross-attention stack of the replaced-object branch, H×N×M
    #[arg(long)]
    pub stack_replaced: PathBuf,
    /// Cross-attention stack of the blend-object branch, H×N×M
    #[arg(long)]
    pub stack_blend: PathBuf,
    /// Concatenated attention output of the replaced branch, N×D
    #[arg(long)]
    pub o_replaced: PathBuf,
    /// Concatenated attention output of the blend branch, N×D
    #[arg(long)]
    pub o_blend: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics sidecar; defaults to `<out>.json`
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Text-token columns of the replaced object, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub replaced_tokens: Vec<usize>,
    /// Text-token columns of the blend object, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub blend_tokens: Vec<usize>,
    #[arg(long, value_enum, default_value_t = PoolingArg::Mean)]
    pub pooling: PoolingArg,
    /// Token grid as RxC; inferred for square token counts
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub tau_source: Option<f64>,
    #[arg(long)]
    pub tau_dest: Option<f64>,
    #[arg(long)]
    pub lambda_feature: Option<f64>,
    #[arg(long)]
    pub lambda_spatial: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Plain-domain Sinkhorn scalings instead of log-domain updates
    #[arg(long)]
    pub direct: bool,
    #[arg(long)]
    pub w0: Option<f64>,
    /// Treat off-simplex attention rows as errors
    #[arg(long)]
    pub strict: bool,
    /// Pass features through unchanged when a token set comes out empty
    #[arg(long)]
    pub allow_empty: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

struct Resolved {
    cfg: CaofConfig,
    strict: bool,
    allow_empty: bool,
}

fn resolve(a: &CaofArgs, file: &FileConfig) -> Result<Resolved, CliError> {
    let defaults = CaofConfig::new(TokenSelector::single(0), TokenSelector::single(0));
    let selector = |idx: &[usize]| TokenSelector::new(idx.to_vec(), a.pooling.into());
    let cost = CostParams::new(
        pick(a.lambda_feature, file.lambda_feature, defaults.cost.lambda_feature),
        pick(a.lambda_spatial, file.lambda_spatial, defaults.cost.lambda_spatial),
        pick(a.gamma, file.gamma, defaults.cost.gamma),
    )?;
    let sinkhorn = SinkhornConfig {
        max_iterations: pick(a.max_iters, file.max_iters, defaults.sinkhorn.max_iterations),
        tolerance: pick(a.tolerance, file.tolerance, defaults.sinkhorn.tolerance),
        log_domain: !a.direct && file.log_domain.unwrap_or(defaults.sinkhorn.log_domain),
    };
    sinkhorn.validate()?;
    let blend = BlendConfig::new(pick(a.w0, file.w0, defaults.blend.w0))?;
    let cfg = CaofConfig {
        replaced_tokens: selector(&a.replaced_tokens)?,
        blend_tokens: selector(&a.blend_tokens)?,
        tau_source: pick(a.tau_source, file.tau_source, defaults.tau_source),
        tau_dest: pick(a.tau_dest, file.tau_dest, defaults.tau_dest),
        cost,
        sinkhorn,
        blend,
    };
    for (name, tau) in [("tau-source", cfg.tau_source), ("tau-dest", cfg.tau_dest)] {
        if !(0.0..=100.0).contains(&tau) {
            return Err(CliError::validation(
                "INVALID_PARAMETER",
                format!("--{name} must lie in [0, 100], got {tau}"),
            ));
        }
    }
    Ok(Resolved {
        cfg,
        strict: pick_switch(a.strict, file.strict),
        allow_empty: pick_switch(a.allow_empty, file.allow_empty),
    })
}

fn check_stack(name: &str, stack: &AttentionStack, strict: bool, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let report = stack.check_rows(ROW_SUM_TOLERANCE);
    if report.is_clean() {
        return Ok(());
    }
    let msg = format!(
        "{name}: {} of {} rows off the simplex (max |sum - 1| = {:e}), {} entries outside [0, 1]",
        report.rows_off_simplex, report.rows_checked, report.max_row_error, report.entries_out_of_range
    );
    if strict {
        return Err(CliError::validation("ROW_SUM", msg));
    }
    warn("ROW_SUM", &msg);
    warnings.push(msg);
    Ok(())
}

fn diagnostics_json(d: &CaofDiagnostics) -> serde_json::Value {
    json!({
        "source_size": d.source_size,
        "dest_size": d.dest_size,
        "overlap_size": d.overlap_size,
        "iterations": d.iterations,
        "marginal_error": d.marginal_error,
        "converged": d.converged,
    })
}

pub fn run(a: CaofArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let Resolved { cfg, strict, allow_empty } = resolve(&a, &file)?;

    let stack_replaced = load_stack(&a.stack_replaced, a.grid)?;
    let stack_blend = load_stack(&a.stack_blend, Some(stack_replaced.grid()))?;
    let (o_replaced, dtype) = load_features(&a.o_replaced)?;
    let (o_blend, _) = load_features(&a.o_blend)?;

    let mut warnings = Vec::new();
    check_stack("stack-replaced", &stack_replaced, strict, &mut warnings)?;
    check_stack("stack-blend", &stack_blend, strict, &mut warnings)?;

    let (features, diagnostics, pass_through) =
        match run_caof(&stack_replaced, &stack_blend, &o_replaced, &o_blend, &cfg) {
            Ok(out) => {
                let d = &out.diagnostics;
                if !d.converged && d.marginal_error > 100.0 * cfg.sinkhorn.tolerance {
                    return Err(CliError::numerical(
                        "NON_CONVERGENCE",
                        format!(
                            "Sinkhorn stopped after {} iterations with marginal error {:e} (tolerance {:e})",
                            d.iterations, d.marginal_error, cfg.sinkhorn.tolerance
                        ),
                    ));
                }
                if !d.converged {
                    let msg = format!(
                        "Sinkhorn hit --max-iters {} with marginal error {:e}",
                        d.iterations, d.marginal_error
                    );
                    warn("NON_CONVERGENCE", &msg);
                    warnings.push(msg);
                }
                (out.features, Some(out.diagnostics), false)
            }
            Err(CaofError::Select(SelectError::EmptySet(which))) if allow_empty => {
                let msg = format!("{which} set is empty; features passed through unchanged");
                warn("EMPTY_SET", &msg);
                warnings.push(msg);
                (o_replaced.clone(), None, true)
            }
            Err(e) => return Err(e.into()),
        };

    save_features(&features, dtype, &a.out)?;
    let sidecar = json!({
        "command": "caof",
        "inputs": {
            "stack_replaced": path_str(&a.stack_replaced),
            "stack_blend": path_str(&a.stack_blend),
            "o_replaced": path_str(&a.o_replaced),
            "o_blend": path_str(&a.o_blend),
        },
        "output": path_str(&a.out),
        "parameters": {
            "replaced_tokens": cfg.replaced_tokens.indices(),
            "blend_tokens": cfg.blend_tokens.indices(),
            "pooling": format!("{:?}", cfg.replaced_tokens.pooling()).to_lowercase(),
            "grid": stack_replaced.grid().to_string(),
            "tau_source": cfg.tau_source,
            "tau_dest": cfg.tau_dest,
            "lambda_feature": cfg.cost.lambda_feature,
            "lambda_spatial": cfg.cost.lambda_spatial,
            "gamma": cfg.cost.gamma,
            "max_iters": cfg.sinkhorn.max_iterations,
            "tolerance": cfg.sinkhorn.tolerance,
            "log_domain": cfg.sinkhorn.log_domain,
            "w0": cfg.blend.w0,
            "strict": strict,
            "allow_empty": allow_empty,
            "dtype": dtype.descr(),
        },
        "diagnostics": diagnostics.as_ref().map(diagnostics_json),
        "pass_through": pass_through,
        "warnings": warnings,
    });
    write_json(&sidecar_path(&a.out, a.diagnostics.as_deref()), &sidecar)
}

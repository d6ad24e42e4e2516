//! Cross-attention object fusion.
//!
//! Destination tokens (strong response to the replaced-object prompt) pull in
//! features from source tokens (strong response to the blend-object prompt),
//! weighted by a row-normalized entropic transport plan:
//!
//! ```text
//! f'[d_i] = (1 − w0)·f[d_i] + w0 · Σ_j T̂[i][j] · g[s_j]
//! ```
//!
//! Tokens outside the destination set are copied through unchanged.

use ndarray::{s, Array2};
use thiserror::Error;

use crate::ot::{self, CostParams, OtError, SinkhornConfig};
use crate::select::{self, AttentionStack, IndexSets, SelectError, TokenSelector};
use crate::types::{FeatureError, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaofError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("row {row} of the blending weights sums to {sum}, not 1")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("blend weight w0 must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Transport(#[from] OtError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

/// Relative influence of the transported blend features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendConfig {
    pub w0: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig { w0: 0.9 }
    }
}

impl BlendConfig {
    pub fn new(w0: f64) -> Result<Self, CaofError> {
        if !(0.0..=1.0).contains(&w0) {
            return Err(CaofError::InvalidWeight(w0));
        }
        Ok(BlendConfig { w0 })
    }
}

/// Concatenates per-head `N × d_k` outputs into one `N × (H·d_k)` matrix.
pub fn concat_heads(per_head: &[Array2<f64>]) -> Result<FeatureMatrix, CaofError> {
    let first = per_head
        .first()
        .ok_or_else(|| CaofError::ShapeMismatch("no heads given".into()))?;
    let (n, dk) = first.dim();
    if let Some((h, a)) = per_head.iter().enumerate().find(|(_, a)| a.dim() != (n, dk)) {
        return Err(CaofError::ShapeMismatch(format!(
            "head {h} is {:?}, head 0 is {:?}",
            a.dim(),
            (n, dk)
        )));
    }
    let mut out = Array2::zeros((n, dk * per_head.len()));
    for (h, a) in per_head.iter().enumerate() {
        out.slice_mut(s![.., h * dk..(h + 1) * dk]).assign(a);
    }
    Ok(FeatureMatrix::new(out)?)
}

const STOCHASTIC_TOLERANCE: f64 = 1e-9;

pub fn blend_features(
    o_replaced: &FeatureMatrix,
    o_blend: &FeatureMatrix,
    sets: &IndexSets,
    weights: &Array2<f64>,
    cfg: &BlendConfig,
) -> Result<FeatureMatrix, CaofError> {
    BlendConfig::new(cfg.w0)?;
    if o_replaced.values().dim() != o_blend.values().dim() {
        return Err(CaofError::ShapeMismatch(format!(
            "replaced features {:?} vs blend features {:?}",
            o_replaced.values().dim(),
            o_blend.values().dim()
        )));
    }
    if o_replaced.tokens() != sets.grid().len() {
        return Err(CaofError::ShapeMismatch(format!(
            "{} feature rows for a {}-token grid",
            o_replaced.tokens(),
            sets.grid().len()
        )));
    }
    let (nd, ns) = (sets.dest().len(), sets.source().len());
    if weights.dim() != (nd, ns) {
        return Err(CaofError::ShapeMismatch(format!(
            "blend weights {:?}, expected ({nd}, {ns})",
            weights.dim()
        )));
    }
    for (row, w) in weights.rows().into_iter().enumerate() {
        let sum = w.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE || w.iter().any(|x| *x < 0.0) {
            return Err(CaofError::NonStochasticRow { row, sum });
        }
    }

    let mut out = o_replaced.values().clone();
    if cfg.w0 == 0.0 {
        return Ok(FeatureMatrix::new(out)?);
    }
    let w0 = cfg.w0;
    let keep = 1.0 - w0;
    let d = o_replaced.channels();
    let mut gathered: Vec<f64> = Vec::with_capacity(ns * d);
    for &sj in sets.source() {
        gathered.extend(o_blend.row(sj).iter());
    }
    let weights = weights.as_standard_layout();
    let mut mixed = vec![0.0; d];
    for (i, &di) in sets.dest().iter().enumerate() {
        mixed.iter_mut().for_each(|x| *x = 0.0);
        let w_row = weights.row(i);
        let w_row = w_row.as_slice().expect("standard layout");
        for (&t, g) in w_row.iter().zip(gathered.chunks_exact(d)) {
            for (acc, &g) in mixed.iter_mut().zip(g) {
                *acc += t * g;
            }
        }
        for (o, m) in out.row_mut(di).iter_mut().zip(&mixed) {
            *o = keep * *o + w0 * m;
        }
    }
    Ok(FeatureMatrix::new(out)?)
}

/// Everything [`run_caof`] needs besides the tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CaofConfig {
    pub replaced_tokens: TokenSelector,
    pub blend_tokens: TokenSelector,
    pub tau_source: f64,
    pub tau_dest: f64,
    pub cost: CostParams,
    pub sinkhorn: SinkhornConfig,
    pub blend: BlendConfig,
}

impl CaofConfig {
    pub fn new(replaced_tokens: TokenSelector, blend_tokens: TokenSelector) -> Self {
        CaofConfig {
            replaced_tokens,
            blend_tokens,
            tau_source: 60.0,
            tau_dest: 60.0,
            cost: CostParams::default(),
            sinkhorn: SinkhornConfig::default(),
            blend: BlendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaofDiagnostics {
    pub source_size: usize,
    pub dest_size: usize,
    pub overlap_size: usize,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CaofOutput {
    pub features: FeatureMatrix,
    pub sets: IndexSets,
    pub diagnostics: CaofDiagnostics,
}

/// Head averaging → percentile sets → cost → Sinkhorn → row normalization →
/// blending, in that order.
pub fn run_caof(
    stack_replaced: &AttentionStack,
    stack_blend: &AttentionStack,
    o_replaced: &FeatureMatrix,
    o_blend: &FeatureMatrix,
    cfg: &CaofConfig,
) -> Result<CaofOutput, CaofError> {
    let grid = stack_replaced.grid();
    if stack_blend.grid() != grid {
        return Err(CaofError::ShapeMismatch(format!(
            "replaced stack grid {grid} vs blend stack grid {}",
            stack_blend.grid()
        )));
    }
    if o_replaced.tokens() != grid.len() || o_blend.tokens() != grid.len() {
        return Err(CaofError::ShapeMismatch(format!(
            "feature rows ({}, {}) do not match {} attention positions",
            o_replaced.tokens(),
            o_blend.tokens(),
            grid.len()
        )));
    }
    cfg.cost.validate()?;
    cfg.sinkhorn.validate()?;
    BlendConfig::new(cfg.blend.w0)?;

    let a_replaced = select::head_average(stack_replaced, &cfg.replaced_tokens)?;
    let a_blend = select::head_average(stack_blend, &cfg.blend_tokens)?;
    let sets = select::build_index_sets(&a_blend, &a_replaced, cfg.tau_source, cfg.tau_dest, grid)?;
    let cost = ot::build_cost_matrix(o_replaced, o_blend, &sets, &cfg.cost)?;
    let plan = ot::sinkhorn(&cost, cfg.cost.gamma, &cfg.sinkhorn)?;
    let weights = plan.row_normalized()?;
    let features = blend_features(o_replaced, o_blend, &sets, &weights, &cfg.blend)?;

    let overlap_size = sets
        .dest()
        .iter()
        .filter(|d| sets.source().binary_search(d).is_ok())
        .count();
    let diagnostics = CaofDiagnostics {
        source_size: sets.source().len(),
        dest_size: sets.dest().len(),
        overlap_size,
        iterations: plan.iterations(),
        marginal_error: plan.marginal_error(),
        converged: plan.converged(),
    };
    Ok(CaofOutput {
        features,
        sets,
        diagnostics,
    })
}

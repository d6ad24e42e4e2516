//! Deterministic synthetic fixtures, so every pipeline can run without a
//! diffusion model.
//!
//! All randomness comes from one `u64` seed fed to ChaCha8 (generator tag
//! [`GENERATOR`]). Gaussian draws use Box–Muller through `libm`, and every
//! generated tensor is rounded to `f32`, so the in-memory fixture equals what
//! is written to disk and is identical across platforms.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::caof::concat_heads;
use crate::io::{ScoreRecord, ScoreTable};
use crate::metrics::GrayImage;
use crate::types::{FeatureMatrix, Grid};

/// Name and version of the fixture generator; bump when output changes.
pub const GENERATOR: &str = "chacha8-boxmuller-v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub heads: usize,
    pub grid: Grid,
    pub text_tokens: usize,
    pub head_dim: usize,
    /// 0 places the two objects' attention peaks far apart, 1 on top of each
    /// other (identical maps when the token indices also agree).
    pub overlap: f64,
    pub replaced_token: usize,
    pub blend_token: usize,
    pub samples: usize,
    pub with_kv: bool,
}

impl Default for SyntheticSpec {
    /// SD-XL-like shapes: 10 heads of 64 channels on a 64×64 latent, 77 text
    /// tokens.
    fn default() -> Self {
        SyntheticSpec {
            seed: 42,
            heads: 10,
            grid: Grid::new(64, 64),
            text_tokens: 77,
            head_dim: 64,
            overlap: 0.5,
            replaced_token: 2,
            blend_token: 2,
            samples: 100,
            with_kv: false,
        }
    }
}

impl SyntheticSpec {
    pub fn feature_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidShape(m));
        if self.heads == 0 || self.head_dim == 0 || self.grid.is_empty() {
            return bad(format!(
                "heads={}, head_dim={}, grid={} must all be nonzero",
                self.heads, self.head_dim, self.grid
            ));
        }
        if self.text_tokens < 2 {
            return bad(format!("need at least 2 text tokens, got {}", self.text_tokens));
        }
        if self.replaced_token >= self.text_tokens || self.blend_token >= self.text_tokens {
            return bad(format!(
                "object tokens ({}, {}) must be below {}",
                self.replaced_token, self.blend_token, self.text_tokens
            ));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return bad(format!("overlap must lie in [0, 1], got {}", self.overlap));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KvArrays {
    pub k_target: Array2<f64>,
    pub v_target: Array2<f64>,
    pub k_style: Array2<f64>,
    pub v_style: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub stack_replaced: Array3<f64>,
    pub stack_blend: Array3<f64>,
    pub o_replaced: FeatureMatrix,
    pub o_blend: FeatureMatrix,
    pub f_style: FeatureMatrix,
    pub kv: Option<KvArrays>,
    pub scores: ScoreTable,
}

struct Source(ChaCha8Rng);

impl Source {
    fn new(seed: u64) -> Self {
        Source(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn normal(&mut self) -> f64 {
        // 1 − u keeps the log argument in (0, 1]
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }
}

fn round_f32(x: f64) -> f64 {
    f64::from(x as f32)
}

fn softmax_row(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = libm::exp(*l - max);
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l = round_f32(*l / sum);
    }
}

/// Gaussian bump on normalized grid coordinates.
fn bump(grid: Grid, i: usize, center: (f64, f64), width: f64) -> f64 {
    let (r, c) = grid.center(i);
    let d2 = (r - center.0).powi(2) + (c - center.1).powi(2);
    libm::exp(-d2 / (2.0 * width * width))
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticFixture, SyntheticError> {
    spec.validate()?;
    let mut rng = Source::new(spec.seed);
    let (h, n, m, dk) = (spec.heads, spec.grid.len(), spec.text_tokens, spec.head_dim);

    // object placement
    let center_rep = (rng.range(0.25, 0.75), rng.range(0.25, 0.75));
    let center_far = (1.0 - center_rep.0, 1.0 - center_rep.1);
    let t = spec.overlap;
    let center_blend = (
        center_far.0 + t * (center_rep.0 - center_far.0),
        center_far.1 + t * (center_rep.1 - center_far.1),
    );
    let width = rng.range(0.12, 0.2);
    let amplitudes: Vec<f64> = (0..h).map(|_| rng.range(3.0, 5.0)).collect();

    // logits shared by both branches; only the object column differs
    let base: Vec<f64> = (0..h * n * m).map(|_| 0.5 * rng.normal()).collect();
    let stack_for = |token: usize, center: (f64, f64)| {
        let mut out = Array3::zeros((h, n, m));
        let mut row = vec![0.0; m];
        for hh in 0..h {
            for i in 0..n {
                let off = (hh * n + i) * m;
                row.copy_from_slice(&base[off..off + m]);
                row[token] += amplitudes[hh] * bump(spec.grid, i, center, width);
                softmax_row(&mut row);
                for (k, &w) in row.iter().enumerate() {
                    out[[hh, i, k]] = w;
                }
            }
        }
        out
    };
    let stack_replaced = stack_for(spec.replaced_token, center_rep);
    let stack_blend = stack_for(spec.blend_token, center_blend);

    // value matrices: prompts differ only at their object tokens
    let values_rep: Vec<Array2<f64>> = (0..h)
        .map(|_| Array2::from_shape_fn((m, dk), |_| round_f32(rng.normal())))
        .collect();
    let mut values_blend = values_rep.clone();
    for v in values_blend.iter_mut() {
        for k in 0..dk {
            v[[spec.blend_token, k]] = round_f32(rng.normal());
        }
    }
    let o_replaced = head_outputs(&stack_replaced, &values_rep)?;
    let o_blend = head_outputs(&stack_blend, &values_blend)?;

    let d = spec.feature_dim();
    let phases: Vec<f64> = (0..d).map(|_| rng.range(0.0, 2.0 * PI)).collect();
    let f_style = Array2::from_shape_fn((n, d), |(i, c)| {
        let (r, col) = spec.grid.center(i);
        round_f32(libm::sin(2.0 * PI * (r + col) + phases[c]) + 0.5 * rng.normal())
    });
    let f_style = FeatureMatrix::new(f_style).expect("finite by construction");

    let kv = spec.with_kv.then(|| {
        let mut mat = || Array2::from_shape_fn((n, d), |_| round_f32(rng.normal()));
        KvArrays {
            k_target: mat(),
            v_target: mat(),
            k_style: mat(),
            v_style: mat(),
        }
    });

    let scores = ScoreTable {
        records: (0..spec.samples)
            .map(|s| {
                let mut cell = |lo: f64, hi: f64| (rng.range(lo, hi) * 1e4).round() / 1e4;
                ScoreRecord {
                    sample_id: format!("s{s:05}"),
                    clip_o: cell(0.10, 0.16),
                    clip_r: cell(0.20, 0.35),
                    clip_b: cell(0.15, 0.30),
                    clip_s: Some(cell(0.15, 0.25)),
                    lpips_o: cell(0.20, 0.60),
                }
            })
            .collect(),
    };

    Ok(SyntheticFixture {
        stack_replaced,
        stack_blend,
        o_replaced,
        o_blend,
        f_style,
        kv,
        scores,
    })
}

/// `Concat_h(A_h · V_h)` with a fixed accumulation order.
fn head_outputs(stack: &Array3<f64>, values: &[Array2<f64>]) -> Result<FeatureMatrix, SyntheticError> {
    let (h, n, m) = stack.dim();
    let dk = values[0].ncols();
    let per_head: Vec<Array2<f64>> = (0..h)
        .map(|hh| {
            let mut out = Array2::zeros((n, dk));
            for i in 0..n {
                let mut acc = vec![0.0; dk];
                for j in 0..m {
                    let a = stack[[hh, i, j]];
                    for (o, &v) in acc.iter_mut().zip(values[hh].row(j)) {
                        *o += a * v;
                    }
                }
                for (k, o) in acc.into_iter().enumerate() {
                    out[[i, k]] = round_f32(o);
                }
            }
            out
        })
        .collect();
    concat_heads(&per_head).map_err(|e| SyntheticError::InvalidShape(e.to_string()))
}

/// Smooth content and textured style features laid out on a square grid;
/// each token's channels all share the same spatial pattern plus a
/// per-channel offset. Used to check how injected detail shows up in the
/// texture metrics.
pub fn style_injection_fixture(seed: u64, side: usize, channels: usize) -> (FeatureMatrix, FeatureMatrix, Grid) {
    let grid = Grid::new(side, side);
    let mut rng = Source::new(seed);
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.normal()).collect();
    let offsets: Vec<f64> = (0..channels).map(|_| rng.range(-0.05, 0.05)).collect();
    let content = Array2::from_shape_fn((grid.len(), channels), |(i, c)| {
        let (r, col) = grid.center(i);
        0.5 + offsets[c] + 0.2 * libm::sin(2.0 * PI * r) * libm::cos(2.0 * PI * col)
    });
    let style = Array2::from_shape_fn((grid.len(), channels), |(i, c)| {
        let (r, col) = grid.center(i);
        0.5 + offsets[c] + 0.1 * libm::sin(4.0 * PI * (r + col)) + 0.12 * noise[i]
    });
    (
        FeatureMatrix::new(content).expect("finite"),
        FeatureMatrix::new(style).expect("finite"),
        grid,
    )
}

/// Channel mean of each token, clamped to `[0, 1]` and laid out on `grid`.
pub fn render_gray(features: &FeatureMatrix, grid: Grid) -> Result<GrayImage, SyntheticError> {
    if features.tokens() != grid.len() {
        return Err(SyntheticError::InvalidShape(format!(
            "{} tokens cannot fill grid {grid}",
            features.tokens()
        )));
    }
    let d = features.channels() as f64;
    let pixels = Array2::from_shape_fn((grid.rows, grid.cols), |(r, c)| {
        let row = features.row(r * grid.cols + c);
        (row.sum() / d).clamp(0.0, 1.0)
    });
    GrayImage::new(pixels).map_err(|e| SyntheticError::InvalidShape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::{head_average, AttentionStack, TokenSelector, ROW_SUM_TOLERANCE};

    fn small(seed: u64, overlap: f64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            heads: 2,
            grid: Grid::new(8, 8),
            text_tokens: 6,
            head_dim: 4,
            overlap,
            samples: 5,
            ..Default::default()
        }
    }

    #[test]
    fn stacks_are_softmax_rows() {
        let fx = generate(&small(1, 0.3)).unwrap();
        for s in [&fx.stack_replaced, &fx.stack_blend] {
            let stack = AttentionStack::new(s.clone(), Grid::new(8, 8)).unwrap();
            assert!(stack.check_rows(ROW_SUM_TOLERANCE).is_clean());
        }
        assert_eq!(fx.o_replaced.values().dim(), (64, 8));
        assert_eq!(fx.scores.len(), 5);
    }

    #[test]
    fn same_seed_same_fixture() {
        let a = generate(&small(9, 0.5)).unwrap();
        let b = generate(&small(9, 0.5)).unwrap();
        assert_eq!(a.o_blend, b.o_blend);
        assert_eq!(a.stack_blend, b.stack_blend);
        assert_eq!(a.scores, b.scores);
        let c = generate(&small(10, 0.5)).unwrap();
        assert_ne!(a.o_blend, c.o_blend);
    }

    #[test]
    fn full_overlap_gives_identical_maps() {
        let spec = small(3, 1.0);
        let fx = generate(&spec).unwrap();
        let g = spec.grid;
        let sel = TokenSelector::single(spec.replaced_token);
        let a_rep = head_average(&AttentionStack::new(fx.stack_replaced, g).unwrap(), &sel).unwrap();
        let a_blend = head_average(&AttentionStack::new(fx.stack_blend, g).unwrap(), &sel).unwrap();
        assert_eq!(a_rep, a_blend);
    }

    #[test]
    fn values_are_f32_exact() {
        let fx = generate(&small(4, 0.2)).unwrap();
        for x in fx.o_replaced.values().iter().chain(fx.stack_blend.iter()) {
            assert_eq!(*x, f64::from(*x as f32));
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = small(0, 0.5);
        s.replaced_token = 6;
        assert!(generate(&s).is_err());
        s = small(0, 1.5);
        assert!(generate(&s).is_err());
    }
}

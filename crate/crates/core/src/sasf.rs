//! Self-attention style fusion: detail-sensitive instance normalization
//! (AdaIN plus a high-frequency residual injection along the token axis) and
//! key/value substitution.

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::io::DenseArray;
use crate::types::{FeatureError, FeatureMatrix};

/// Below this standard deviation a channel counts as constant in AdaIN.
pub const ADAIN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SasfError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("feature matrix has no tokens")]
    EmptyMatrix,
    #[error("kernel of {taps} taps is wider than a {tokens}-token signal allows")]
    KernelWiderThanSignal { taps: usize, tokens: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

/// Normalized, truncated Gaussian with `2m + 1` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel1D {
    sigma: f64,
    taps: Vec<f64>,
}

impl GaussianKernel1D {
    pub fn new(sigma: f64, size: usize) -> Result<Self, SasfError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SasfError::InvalidKernel(format!("sigma must be positive, got {sigma}")));
        }
        if size < 3 || size % 2 == 0 {
            return Err(SasfError::InvalidKernel(format!(
                "kernel size must be odd and at least 3, got {size}"
            )));
        }
        let m = (size / 2) as f64;
        let raw: Vec<f64> = (0..size)
            .map(|t| {
                let x = t as f64 - m;
                libm::exp(-(x * x) / (2.0 * sigma * sigma))
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let taps = raw.iter().map(|w| w / total).collect();
        Ok(GaussianKernel1D { sigma, taps })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn half_width(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsinConfig {
    pub alpha: f64,
    pub sigma: f64,
    pub kernel_size: usize,
}

impl Default for DsinConfig {
    fn default() -> Self {
        DsinConfig {
            alpha: 0.5,
            sigma: 2.5,
            kernel_size: 5,
        }
    }
}

impl DsinConfig {
    pub fn kernel(&self) -> Result<GaussianKernel1D, SasfError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SasfError::InvalidAlpha(self.alpha));
        }
        GaussianKernel1D::new(self.sigma, self.kernel_size)
    }
}

/// Per-channel mean and population standard deviation over tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

pub fn channel_stats(f: &FeatureMatrix) -> Result<ChannelStats, SasfError> {
    let n = f.tokens();
    if n == 0 {
        return Err(SasfError::EmptyMatrix);
    }
    let values = f.values();
    let mean = values.sum_axis(Axis(0)) / n as f64;
    let mut var = Array1::zeros(f.channels());
    for row in values.rows() {
        for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - mu;
            *v += d * d;
        }
    }
    let std = var.mapv(|v: f64| (v / n as f64).sqrt());
    Ok(ChannelStats { mean, std })
}

fn check_same_shape(a: &FeatureMatrix, b: &FeatureMatrix, what: &str) -> Result<(), SasfError> {
    if a.values().dim() != b.values().dim() {
        return Err(SasfError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.values().dim(),
            b.values().dim()
        )));
    }
    Ok(())
}

/// Re-normalizes `content` so every channel has the mean and standard
/// deviation of `style`. Channels of `content` with deviation below `eps`
/// become the style mean.
pub fn adain(content: &FeatureMatrix, style: &FeatureMatrix, eps: f64) -> Result<FeatureMatrix, SasfError> {
    if content.channels() != style.channels() {
        return Err(SasfError::ShapeMismatch(format!(
            "content has {} channels, style has {}",
            content.channels(),
            style.channels()
        )));
    }
    let rep = channel_stats(content)?;
    let sty = channel_stats(style)?;
    let mut out = content.values().clone();
    for mut row in out.rows_mut() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = if rep.std[c] < eps {
                sty.mean[c]
            } else {
                (*x - rep.mean[c]) / rep.std[c] * sty.std[c] + sty.mean[c]
            };
        }
    }
    Ok(FeatureMatrix::new(out)?)
}

/// Reflect-padded index (`d c b | a b c d | c b a`); valid while the
/// overhang is shorter than the signal.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Per-channel Gaussian smoothing along the token axis.
pub fn lowpass_tokens(f: &FeatureMatrix, kernel: &GaussianKernel1D) -> Result<FeatureMatrix, SasfError> {
    let n = f.tokens();
    let taps = kernel.taps();
    if n == 0 || taps.len() > 2 * n - 1 {
        return Err(SasfError::KernelWiderThanSignal {
            taps: taps.len(),
            tokens: n,
        });
    }
    let m = kernel.half_width() as isize;
    let values = f.values();
    let mut out = Array2::zeros(values.dim());
    for i in 0..n {
        let mut acc = out.row_mut(i);
        for (t, &w) in taps.iter().enumerate() {
            let src = reflect(i as isize + t as isize - m, n);
            for (a, &x) in acc.iter_mut().zip(values.row(src)) {
                *a += w * x;
            }
        }
    }
    Ok(FeatureMatrix::new(out)?)
}

/// `(F_LF, F_HF)` with `F_HF = F − F_LF`.
pub fn split_frequencies(
    f: &FeatureMatrix,
    kernel: &GaussianKernel1D,
) -> Result<(FeatureMatrix, FeatureMatrix), SasfError> {
    let low = lowpass_tokens(f, kernel)?;
    let high = f.values() - low.values();
    Ok((low, FeatureMatrix::new(high)?))
}

/// AdaIN of `replaced` toward `style`, plus `alpha` times the difference of
/// their high-frequency residuals.
pub fn dsin_inject(
    replaced: &FeatureMatrix,
    style: &FeatureMatrix,
    cfg: &DsinConfig,
) -> Result<FeatureMatrix, SasfError> {
    check_same_shape(replaced, style, "replaced vs style features")?;
    let kernel = cfg.kernel()?;
    let base = adain(replaced, style, ADAIN_EPS)?;
    if cfg.alpha == 0.0 {
        return Ok(base);
    }
    let (_, hf_rep) = split_frequencies(replaced, &kernel)?;
    let (_, hf_sty) = split_frequencies(style, &kernel)?;
    let mut out = base.into_inner();
    ndarray::Zip::from(&mut out)
        .and(hf_sty.values())
        .and(hf_rep.values())
        .for_each(|o, &s, &r| *o += cfg.alpha * (s - r));
    Ok(FeatureMatrix::new(out)?)
}

/// Key/value substitution: the style stream's keys and values replace the
/// target's. The target arrays are only checked for compatible shapes.
pub fn kv_substitute(
    k_target: &DenseArray,
    v_target: &DenseArray,
    k_style: &DenseArray,
    v_style: &DenseArray,
) -> Result<(DenseArray, DenseArray), SasfError> {
    let check = |target: &DenseArray, style: &DenseArray, what: &str| -> Result<(), SasfError> {
        let (t, s) = (target.shape(), style.shape());
        if t.len() != s.len() || t.is_empty() || t.last() != s.last() {
            return Err(SasfError::ShapeMismatch(format!("{what}: target {t:?} vs style {s:?}")));
        }
        Ok(())
    };
    check(k_target, k_style, "keys")?;
    check(v_target, v_style, "values")?;
    let (ks, vs) = (k_style.shape(), v_style.shape());
    if ks[..ks.len() - 1] != vs[..vs.len() - 1] {
        return Err(SasfError::ShapeMismatch(format!(
            "style keys {ks:?} and values {vs:?} disagree on token count"
        )));
    }
    Ok((k_style.clone(), v_style.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn fm(a: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(a).unwrap()
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
        let mut s = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        fm(Array2::from_shape_fn((rows, cols), |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        }))
    }

    #[test]
    fn kernel_shape() {
        let k = GaussianKernel1D::new(2.5, 5).unwrap();
        let t = k.taps();
        assert_eq!(t.len(), 5);
        assert_eq!(k.half_width(), 2);
        for i in 0..5 {
            assert_eq!(t[i], t[4 - i]);
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ratio = t[1] / t[2];
        assert!((ratio - (-1.0f64 / 12.5).exp()).abs() < 1e-14);
        assert!(GaussianKernel1D::new(1.0, 4).is_err());
        assert!(GaussianKernel1D::new(0.0, 5).is_err());
    }

    #[test]
    fn stats_of_constant_and_two_token_columns() {
        let s = channel_stats(&fm(array![[3.0, 0.0], [3.0, 2.0]])).unwrap();
        assert_eq!(s.mean, array![3.0, 1.0]);
        assert_eq!(s.std, array![0.0, 1.0]);
        assert_eq!(channel_stats(&fm(Array2::zeros((0, 2)))), Err(SasfError::EmptyMatrix));
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let f = lcg_matrix(8, 3, 7);
        let s = channel_stats(&f).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..8).map(|i| f.values()[[i, c]]).collect();
            let mean = col.iter().sum::<f64>() / 8.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 8.0;
            assert!((s.mean[c] - mean).abs() < 1e-15);
            assert!((s.std[c] - var.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn adain_self_is_identity() {
        let f = lcg_matrix(6, 2, 1);
        let out = adain(&f, &f, ADAIN_EPS).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn adain_constant_channel_takes_style_mean() {
        let content = fm(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]);
        let style = fm(array![[0.0, 1.0], [4.0, 2.0], [8.0, 6.0]]);
        let out = adain(&content, &style, ADAIN_EPS).unwrap();
        for i in 0..3 {
            assert_eq!(out.values()[[i, 1]], 3.0);
        }
    }

    #[test]
    fn adain_matches_style_moments() {
        let content = lcg_matrix(6, 2, 11);
        let style = lcg_matrix(6, 2, 12);
        let out = channel_stats(&adain(&content, &style, ADAIN_EPS).unwrap()).unwrap();
        let target = channel_stats(&style).unwrap();
        for c in 0..2 {
            assert!((out.mean[c] - target.mean[c]).abs() < 1e-6);
            assert!((out.std[c] - target.std[c]).abs() < 1e-6);
        }
        let wrong = lcg_matrix(6, 3, 1);
        assert!(matches!(adain(&content, &wrong, ADAIN_EPS), Err(SasfError::ShapeMismatch(_))));
    }

    #[test]
    fn constant_signal_passes_lowpass() {
        let f = fm(Array2::from_elem((7, 2), 0.3));
        let k = GaussianKernel1D::new(2.5, 5).unwrap();
        let (low, high) = split_frequencies(&f, &k).unwrap();
        for (l, h) in low.values().iter().zip(high.values()) {
            assert!((l - 0.3).abs() < 1e-15);
            assert!(h.abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let mut a = Array2::zeros((9, 1));
        a[[4, 0]] = 1.0;
        let k = GaussianKernel1D::new(1.3, 5).unwrap();
        let out = lowpass_tokens(&fm(a), &k).unwrap();
        for t in 0..5 {
            assert_eq!(out.values()[[2 + t, 0]], k.taps()[t]);
        }
        assert_eq!(out.values()[[0, 0]], 0.0);
    }

    #[test]
    fn matches_naive_sliding_window() {
        let f = lcg_matrix(16, 2, 3);
        let k = GaussianKernel1D::new(2.5, 5).unwrap();
        let out = lowpass_tokens(&f, &k).unwrap();
        for c in 0..2 {
            // explicitly padded signal: 2 reflected samples on each side
            let x: Vec<f64> = (0..16).map(|i| f.values()[[i, c]]).collect();
            let mut padded = vec![x[2], x[1]];
            padded.extend_from_slice(&x);
            padded.extend_from_slice(&[x[14], x[13]]);
            for i in 0..16 {
                let want: f64 = (0..5).map(|t| k.taps()[t] * padded[i + t]).sum();
                assert!((out.values()[[i, c]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_wider_than_signal() {
        let f = lcg_matrix(2, 1, 0);
        let k = GaussianKernel1D::new(1.0, 5).unwrap();
        assert_eq!(
            lowpass_tokens(&f, &k),
            Err(SasfError::KernelWiderThanSignal { taps: 5, tokens: 2 })
        );
        let k3 = GaussianKernel1D::new(1.0, 3).unwrap();
        assert!(lowpass_tokens(&f, &k3).is_ok());
    }

    #[test]
    fn wider_sigma_moves_more_energy_into_high_band() {
        let f = lcg_matrix(64, 4, 5);
        let hf_norm = |sigma: f64| {
            let k = GaussianKernel1D::new(sigma, 7).unwrap();
            let (_, h) = split_frequencies(&f, &k).unwrap();
            h.values().mapv(|x| x * x).sum().sqrt()
        };
        assert!(hf_norm(0.5) < hf_norm(2.5));
    }

    #[test]
    fn alpha_zero_is_adain() {
        let a = lcg_matrix(10, 3, 21);
        let b = lcg_matrix(10, 3, 22);
        let cfg = DsinConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert_eq!(dsin_inject(&a, &b, &cfg).unwrap(), adain(&a, &b, ADAIN_EPS).unwrap());
    }

    #[test]
    fn injecting_self_is_identity() {
        let a = lcg_matrix(10, 3, 23);
        let out = dsin_inject(&a, &a, &DsinConfig::default()).unwrap();
        for (x, y) in out.values().iter().zip(a.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn half_alpha_moves_half_the_residual_difference() {
        let a = lcg_matrix(16, 4, 31);
        let b = lcg_matrix(16, 4, 32);
        let cfg = DsinConfig::default();
        let out = dsin_inject(&a, &b, &cfg).unwrap();
        let base = adain(&a, &b, ADAIN_EPS).unwrap();
        let k = cfg.kernel().unwrap();
        let delta = split_frequencies(&b, &k).unwrap().1.values() - split_frequencies(&a, &k).unwrap().1.values();
        let moved = (out.values() - base.values()).mapv(|x| x * x).sum().sqrt();
        let full = delta.mapv(|x| x * x).sum().sqrt();
        assert!((moved - 0.5 * full).abs() < 1e-12);
    }

    #[test]
    fn kv_substitution_returns_style_arrays() {
        let mk = |rows: usize, cols: usize, v: f64| DenseArray::from_f64(vec![rows, cols], vec![v; rows * cols]).unwrap();
        let (kt, vt, ks, vs) = (mk(4, 8, 1.0), mk(4, 8, 2.0), mk(4, 8, 3.0), mk(4, 8, 4.0));
        let (k, v) = kv_substitute(&kt, &vt, &ks, &vs).unwrap();
        assert_eq!(k.payload_bytes(), ks.payload_bytes());
        assert_eq!(v.payload_bytes(), vs.payload_bytes());
        let (k, _) = kv_substitute(&kt, &vt, &kt, &vs).unwrap();
        assert_eq!(k, kt);
        assert!(matches!(
            kv_substitute(&kt, &vt, &mk(4, 6, 3.0), &vs),
            Err(SasfError::ShapeMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn frequency_split_reconstructs_to_rounding(seed in any::<u64>(), rows in 3usize..24, cols in 1usize..5) {
            let f = lcg_matrix(rows, cols, seed);
            let k = GaussianKernel1D::new(2.5, 5).unwrap();
            let (low, high) = split_frequencies(&f, &k).unwrap();
            for ((l, h), x) in low.values().iter().zip(high.values()).zip(f.values()) {
                // one rounding in the subtraction, one in the sum
                let bound = 2.0 * f64::EPSILON * (l.abs() + x.abs());
                prop_assert!((l + h - x).abs() <= bound);
                prop_assert_eq!(h.to_bits(), (x - l).to_bits());
            }
        }

        #[test]
        fn injection_is_affine_in_alpha(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
            let a = lcg_matrix(12, 3, seed);
            let b = lcg_matrix(12, 3, seed ^ 0xABCD);
            let at = |alpha: f64| dsin_inject(&a, &b, &DsinConfig { alpha, ..Default::default() }).unwrap();
            let (o0, o1, oa) = (at(0.0), at(1.0), at(alpha));
            for ((x0, x1), xa) in o0.values().iter().zip(o1.values()).zip(oa.values()) {
                prop_assert!(((xa - x0) - alpha * (x1 - x0)).abs() < 1e-9);
            }
        }
    }
}

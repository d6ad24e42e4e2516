//! Texture-richness metrics on grayscale images with pixels in `[0, 1]`.
//! All three rescale pixels to `[0, 255]` first.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::MetricsError;

pub const DEFAULT_HFS_CUTOFF: f64 = 0.25;

const GRAY_LEVELS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Array2<f64>);

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Result<Self, MetricsError> {
        if let Some(((r, c), v)) = pixels
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(MetricsError::InvalidImage(format!(
                "pixel ({r}, {c}) = {v} is outside [0, 1]"
            )));
        }
        Ok(GrayImage(pixels))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.0
    }

    fn require(&self, min: usize) -> Result<(), MetricsError> {
        if self.rows() < min || self.cols() < min {
            return Err(MetricsError::TooSmall {
                rows: self.rows(),
                cols: self.cols(),
                min,
            });
        }
        Ok(())
    }

    fn scaled(&self) -> Array2<f64> {
        self.0.mapv(|p| p * 255.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureMetrics {
    pub lv: f64,
    pub gc: f64,
    pub hfs: f64,
}

impl TextureMetrics {
    pub fn compute(img: &GrayImage, hfs_cutoff: f64) -> Result<Self, MetricsError> {
        Ok(TextureMetrics {
            lv: laplacian_variance(img)?,
            gc: glcm_contrast(img)?,
            hfs: fft_high_frequency_sum(img, hfs_cutoff)?,
        })
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if i < 0 {
        (-i) as usize
    } else if i >= n {
        (2 * (n - 1) - i) as usize
    } else {
        i as usize
    }
}

/// Population variance of the 4-neighbour Laplacian response, with
/// reflect padding at the borders.
pub fn laplacian_variance(img: &GrayImage) -> Result<f64, MetricsError> {
    img.require(3)?;
    let p = img.scaled();
    let (rows, cols) = p.dim();
    let mut response = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (ri, ci) = (r as isize, c as isize);
            let up = p[[reflect(ri - 1, rows), c]];
            let down = p[[reflect(ri + 1, rows), c]];
            let left = p[[r, reflect(ci - 1, cols)]];
            let right = p[[r, reflect(ci + 1, cols)]];
            response.push((up + down + left + right) - 4.0 * p[[r, c]]);
        }
    }
    let n = response.len() as f64;
    let mean = response.iter().sum::<f64>() / n;
    Ok(response.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

fn quantize(p: f64) -> usize {
    ((p * 255.0).round() as usize).min(GRAY_LEVELS - 1)
}

/// Haralick contrast of the symmetric co-occurrence matrix built from the
/// right and down neighbours at 256 gray levels.
pub fn glcm_contrast(img: &GrayImage) -> Result<f64, MetricsError> {
    img.require(2)?;
    let q = img.pixels().mapv(quantize);
    let (rows, cols) = q.dim();
    let mut counts = vec![0u64; GRAY_LEVELS * GRAY_LEVELS];
    let mut add = |a: usize, b: usize| {
        counts[a * GRAY_LEVELS + b] += 1;
        counts[b * GRAY_LEVELS + a] += 1;
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                add(q[[r, c]], q[[r, c + 1]]);
            }
            if r + 1 < rows {
                add(q[[r, c]], q[[r + 1, c]]);
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let mut contrast = 0.0;
    for a in 0..GRAY_LEVELS {
        for b in 0..GRAY_LEVELS {
            let n = counts[a * GRAY_LEVELS + b];
            if n > 0 {
                let d = a as f64 - b as f64;
                contrast += d * d * n as f64;
            }
        }
    }
    Ok(contrast / total as f64)
}

/// Signed frequency of DFT bin `k` in cycles per sample, in `[-0.5, 0.5)`.
fn bin_frequency(k: usize, n: usize) -> f64 {
    let signed = if k <= (n - 1) / 2 { k as f64 } else { k as f64 - n as f64 };
    signed / n as f64
}

/// Normalized radial frequency: 0 at DC, 1 at the Nyquist corner.
pub(crate) fn radial_frequency(u: usize, v: usize, rows: usize, cols: usize) -> f64 {
    let fy = bin_frequency(u, rows);
    let fx = bin_frequency(v, cols);
    (fy * fy + fx * fx).sqrt() / 0.5f64.sqrt()
}

/// Sum of spectral magnitudes at normalized radius above `cutoff`.
pub fn fft_high_frequency_sum(img: &GrayImage, cutoff: f64) -> Result<f64, MetricsError> {
    if !(0.0..1.0).contains(&cutoff) {
        return Err(MetricsError::InvalidCutoff(cutoff));
    }
    img.require(4)?;
    let p = img.scaled();
    let (rows, cols) = p.dim();
    // DC never counts, so removing the mean changes nothing but exact zeros
    let mean = p.sum() / (rows * cols) as f64;
    let mut buf: Vec<Complex<f64>> = p.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(cols);
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(rows);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }

    let mut total = 0.0;
    for u in 0..rows {
        for v in 0..cols {
            if radial_frequency(u, v, rows, cols) > cutoff {
                total += buf[u * cols + v].norm();
            }
        }
    }
    Ok(total)
}

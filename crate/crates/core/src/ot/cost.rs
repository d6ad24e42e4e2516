use ndarray::Array2;

use super::OtError;
use crate::select::IndexSets;
use crate::types::{FeatureMatrix, Grid};

/// Below this norm a feature vector is treated as zero.
const ZERO_NORM: f64 = 1e-12;

/// Weights of the two cost terms and the entropic regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub lambda_feature: f64,
    pub lambda_spatial: f64,
    pub gamma: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            lambda_feature: 0.7,
            lambda_spatial: 0.3,
            gamma: 0.1,
        }
    }
}

impl CostParams {
    pub fn new(lambda_feature: f64, lambda_spatial: f64, gamma: f64) -> Result<Self, OtError> {
        let p = CostParams {
            lambda_feature,
            lambda_spatial,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OtError> {
        let ok = self.lambda_feature >= 0.0
            && self.lambda_spatial >= 0.0
            && self.lambda_feature + self.lambda_spatial > 0.0
            && self.lambda_feature.is_finite()
            && self.lambda_spatial.is_finite();
        if !ok {
            return Err(OtError::InvalidParams(format!(
                "cost weights must be nonnegative with a positive sum, got feature={} spatial={}",
                self.lambda_feature, self.lambda_spatial
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(OtError::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `|D| × |S|` transport costs; row `i` is destination `d_i`, column `j`
/// is source `s_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, OtError> {
        if values.is_empty() {
            return Err(OtError::ShapeMismatch(format!(
                "cost matrix {:?} is empty",
                values.dim()
            )));
        }
        if let Some(((row, col), _)) = values
            .indexed_iter()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            return Err(OtError::NonFiniteCost { row, col });
        }
        Ok(CostMatrix(values.as_standard_layout().into_owned()))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Dot product with a fixed four-lane summation order, so results do not
/// depend on how the compiler vectorizes the loop.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_distance(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
    if norm_a < ZERO_NORM || norm_b < ZERO_NORM {
        return 1.0;
    }
    (1.0 - dot(a, b) / (norm_a * norm_b)).clamp(0.0, 2.0)
}

/// Cosine distance `1 − cos(a, b)` in `[0, 2]`; 1 when either vector is zero.
pub fn feature_distance(a: &[f64], b: &[f64]) -> Result<f64, OtError> {
    if a.len() != b.len() {
        return Err(OtError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(cosine_distance(a, b, norm(a), norm(b)))
}

/// Euclidean distance between the normalized cell centres of two tokens.
pub fn spatial_distance(i: usize, j: usize, grid: Grid) -> Result<f64, OtError> {
    for index in [i, j] {
        if index >= grid.len() {
            return Err(OtError::IndexOutOfRange {
                index,
                len: grid.len(),
            });
        }
    }
    Ok(center_distance(grid.center(i), grid.center(j)))
}

fn center_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dr = a.0 - b.0;
    let dc = a.1 - b.1;
    (dr * dr + dc * dc).sqrt()
}

/// Destination features come from the replaced branch, source features from
/// the blend branch.
pub fn build_cost_matrix(
    o_replaced: &FeatureMatrix,
    o_blend: &FeatureMatrix,
    sets: &IndexSets,
    params: &CostParams,
) -> Result<CostMatrix, OtError> {
    params.validate()?;
    if o_replaced.values().dim() != o_blend.values().dim() {
        return Err(OtError::ShapeMismatch(format!(
            "replaced features {:?} vs blend features {:?}",
            o_replaced.values().dim(),
            o_blend.values().dim()
        )));
    }
    let grid = sets.grid();
    if o_replaced.tokens() != grid.len() {
        return Err(OtError::ShapeMismatch(format!(
            "{} feature rows for grid {grid}",
            o_replaced.tokens()
        )));
    }

    let rows = |m: &FeatureMatrix, idx: &[usize]| -> Vec<(Vec<f64>, f64)> {
        idx.iter()
            .map(|&i| {
                let r = m.row(i).to_vec();
                let n = norm(&r);
                (r, n)
            })
            .collect()
    };
    let dest = rows(o_replaced, sets.dest());
    let source = rows(o_blend, sets.source());
    let source_centers: Vec<(f64, f64)> = sets.source().iter().map(|&j| grid.center(j)).collect();

    let mut c = Array2::zeros((dest.len(), source.len()));
    for (i, (&d, (fd, nd))) in sets.dest().iter().zip(&dest).enumerate() {
        let dc = grid.center(d);
        for (j, ((fs, ns), &sc)) in source.iter().zip(&source_centers).enumerate() {
            let mut v = 0.0;
            if params.lambda_feature != 0.0 {
                v += params.lambda_feature * cosine_distance(fd, fs, *nd, *ns);
            }
            if params.lambda_spatial != 0.0 {
                v += params.lambda_spatial * center_distance(dc, sc);
            }
            c[[i, j]] = v;
        }
    }
    CostMatrix::new(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_and_antipodal_vectors() {
        let f = [0.3, -1.2, 2.5, 0.7, 0.1];
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        assert!(feature_distance(&f, &f).unwrap().abs() < 1e-15);
        assert!((feature_distance(&f, &neg).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_pair_matches_scalar_arithmetic() {
        let a = [0.81, -0.35, 0.12, 1.44, -0.67];
        let b = [-0.22, 0.93, 0.58, 0.31, -1.05];
        let mut ab = 0.0;
        let mut aa = 0.0f64;
        let mut bb = 0.0f64;
        for k in 0..5 {
            ab += a[k] * b[k];
            aa += a[k] * a[k];
            bb += b[k] * b[k];
        }
        let expected = 1.0 - ab / (aa.sqrt() * bb.sqrt());
        assert!((feature_distance(&a, &b).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_vector_distance_is_one() {
        assert_eq!(feature_distance(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(
            feature_distance(&[1.0], &[1.0, 2.0]),
            Err(OtError::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn spatial_examples() {
        let g = Grid::new(2, 2);
        assert_eq!(spatial_distance(3, 3, g).unwrap(), 0.0);
        assert!((spatial_distance(0, 3, g).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(spatial_distance(1, 2, Grid::new(1, 4)).unwrap(), 0.25);
        assert_eq!(
            spatial_distance(0, 4, g),
            Err(OtError::IndexOutOfRange { index: 4, len: 4 })
        );
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
    }

    fn toy() -> (FeatureMatrix, FeatureMatrix) {
        let rep = array![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [-1.0, 0.2], [0.3, 0.9], [0.8, -0.1]];
        let blend = array![[0.9, 0.1], [1.0, 0.0], [0.2, 0.8], [0.4, 0.4], [-0.5, 1.0], [0.7, 0.7]];
        (FeatureMatrix::new(rep).unwrap(), FeatureMatrix::new(blend).unwrap())
    }

    #[test]
    fn toy_cost_matches_scalar_oracle() {
        let (rep, blend) = toy();
        let grid = Grid::new(2, 3);
        let sets = IndexSets::new(vec![1, 2, 4], vec![0, 5], grid).unwrap();
        let params = CostParams::new(0.7, 0.3, 0.1).unwrap();
        let c = build_cost_matrix(&rep, &blend, &sets, &params).unwrap();
        assert_eq!(c.dim(), (2, 3));
        for (i, &d) in [0usize, 5].iter().enumerate() {
            for (j, &s) in [1usize, 2, 4].iter().enumerate() {
                let (a, b) = (rep.row(d), blend.row(s));
                let cos = (a[0] * b[0] + a[1] * b[1])
                    / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt());
                let (rd, cd) = ((d / 3) as f64, (d % 3) as f64);
                let (rs, cs) = ((s / 3) as f64, (s % 3) as f64);
                let spatial = (((rd - rs) / 2.0).powi(2) + ((cd - cs) / 3.0).powi(2)).sqrt();
                let expected = 0.7 * (1.0 - cos) + 0.3 * spatial;
                assert!((c.values()[[i, j]] - expected).abs() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn matching_rows_cost_nothing_without_spatial_term() {
        let f = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [2.0, 2.0]];
        let m = FeatureMatrix::new(f).unwrap();
        let sets = IndexSets::new(vec![2], vec![2], Grid::new(2, 2)).unwrap();
        let c = build_cost_matrix(&m, &m, &sets, &CostParams::new(1.0, 0.0, 0.1).unwrap()).unwrap();
        assert!(c.values()[[0, 0]].abs() < 1e-15);
    }

    #[test]
    fn spatial_only_cost_is_symmetric_under_swap() {
        let (rep, blend) = toy();
        let grid = Grid::new(2, 3);
        let params = CostParams::new(0.0, 1.0, 0.1).unwrap();
        let ab = IndexSets::new(vec![0, 1, 4], vec![2, 3], grid).unwrap();
        let ba = IndexSets::new(vec![2, 3], vec![0, 1, 4], grid).unwrap();
        let c1 = build_cost_matrix(&rep, &blend, &ab, &params).unwrap();
        let c2 = build_cost_matrix(&blend, &rep, &ba, &params).unwrap();
        assert_eq!(c1.values(), &c2.values().t().to_owned());
    }

    #[test]
    fn params_validation() {
        assert!(CostParams::new(0.0, 0.0, 0.1).is_err());
        assert!(CostParams::new(-0.1, 1.0, 0.1).is_err());
        assert!(CostParams::new(0.7, 0.3, 0.0).is_err());
        assert!(CostMatrix::new(array![[0.0, f64::NAN]]).is_err());
    }
}

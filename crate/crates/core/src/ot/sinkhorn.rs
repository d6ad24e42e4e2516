use ndarray::Array2;

use super::{CostMatrix, OtError};

/// Stopping rule and numerical mode for [`sinkhorn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub max_iterations: usize,
    /// Target L1 deviation of the plan's row and column sums from the marginals.
    pub tolerance: f64,
    /// Keep the scalings as log-potentials; the direct form underflows once
    /// `cost / gamma` exceeds ~700.
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            max_iterations: 1000,
            tolerance: 1e-6,
            log_domain: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<(), OtError> {
        if self.max_iterations == 0 {
            return Err(OtError::InvalidParams("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(OtError::InvalidParams(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    values: Array2<f64>,
    marginal_error: f64,
    iterations: usize,
    converged: bool,
}

impl TransportPlan {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `‖T·1 − μ‖₁ + ‖Tᵀ·1 − ν‖₁` of the returned plan.
    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn row_normalized(&self) -> Result<Array2<f64>, OtError> {
        row_normalize(&self.values)
    }
}

/// Entropy-regularized transport with uniform marginals `1/|D|` on rows and
/// `1/|S|` on columns. Returns `T = diag(u) K diag(v)` with `K = exp(−C/γ)`.
pub fn sinkhorn(cost: &CostMatrix, gamma: f64, config: &SinkhornConfig) -> Result<TransportPlan, OtError> {
    config.validate()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(OtError::InvalidParams(format!("gamma must be positive, got {gamma}")));
    }
    if config.log_domain {
        Ok(solve_log(cost.values(), gamma, config))
    } else {
        solve_direct(cost.values(), gamma, config)
    }
}

/// Scales each row to sum to one.
pub fn row_normalize(plan: &Array2<f64>) -> Result<Array2<f64>, OtError> {
    let mut out = plan.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(OtError::ZeroRow(i));
        }
        row.mapv_inplace(|x| x / sum);
    }
    Ok(out)
}

/// `Σ T∘C − γ·H(T)` with `H(T) = −Σ T log T` (and `0 log 0 = 0`).
pub fn entropic_objective(plan: &Array2<f64>, cost: &Array2<f64>, gamma: f64) -> f64 {
    plan.iter()
        .zip(cost.iter())
        .map(|(&t, &c)| {
            let ent = if t > 0.0 { t * t.ln() } else { 0.0 };
            t * c + gamma * ent
        })
        .sum()
}

/// `log Σ exp(x_k + y_k)` over paired slices, stable for large magnitudes.
fn log_sum_exp(x: &[f64], y: &[f64], scratch: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for ((s, a), b) in scratch.iter_mut().zip(x).zip(y) {
        *s = a + b;
        if *s > max {
            max = *s;
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for &s in scratch.iter() {
        sum += libm::exp(s - max);
    }
    max + libm::log(sum)
}

fn solve_log(cost: &Array2<f64>, gamma: f64, config: &SinkhornConfig) -> TransportPlan {
    let (n, m) = cost.dim();
    let log_k: Array2<f64> = cost.mapv(|c| -c / gamma);
    let log_k_t: Array2<f64> = log_k.t().as_standard_layout().into_owned();
    let log_k = log_k.as_standard_layout().into_owned();
    let row_slice = |a: &Array2<f64>, i: usize| -> Vec<f64> { a.row(i).to_vec() };
    let log_k_rows: Vec<Vec<f64>> = (0..n).map(|i| row_slice(&log_k, i)).collect();
    let log_k_cols: Vec<Vec<f64>> = (0..m).map(|j| row_slice(&log_k_t, j)).collect();

    let mu = 1.0 / n as f64;
    let log_mu = libm::log(mu);
    let log_nu = libm::log(1.0 / m as f64);

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut scratch = vec![0.0; n.max(m)];
    let mut row_lse: Vec<f64> = log_k_rows
        .iter()
        .map(|r| log_sum_exp(r, &g, &mut scratch[..m]))
        .collect();

    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        for i in 0..n {
            f[i] = log_mu - row_lse[i];
        }
        for j in 0..m {
            g[j] = log_nu - log_sum_exp(&log_k_cols[j], &f, &mut scratch[..n]);
        }
        for i in 0..n {
            row_lse[i] = log_sum_exp(&log_k_rows[i], &g, &mut scratch[..m]);
        }
        // columns match exactly after the g update; only rows can drift
        let row_err: f64 = (0..n).map(|i| (libm::exp(f[i] + row_lse[i]) - mu).abs()).sum();
        if row_err < config.tolerance {
            break;
        }
    }

    let mut plan = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            plan[[i, j]] = libm::exp(f[i] + log_k_rows[i][j] + g[j]);
        }
    }
    finish(plan, iterations, config)
}

fn solve_direct(cost: &Array2<f64>, gamma: f64, config: &SinkhornConfig) -> Result<TransportPlan, OtError> {
    let (n, m) = cost.dim();
    let kernel = cost.mapv(|c| libm::exp(-c / gamma));
    // a row or column that underflowed to zero can never be scaled back
    let dead_row = kernel.rows().into_iter().any(|r| r.iter().all(|&k| k == 0.0));
    let dead_col = kernel.columns().into_iter().any(|c| c.iter().all(|&k| k == 0.0));
    if dead_row || dead_col {
        return Err(OtError::NumericalOverflow { iteration: 0 });
    }
    let mu = 1.0 / n as f64;
    let nu = 1.0 / m as f64;
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];

    let k_times = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| kernel.row(i).iter().zip(v).map(|(k, x)| k * x).sum())
            .collect()
    };
    let mut kv = k_times(&v);
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        for i in 0..n {
            u[i] = mu / kv[i];
        }
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                s += kernel[[i, j]] * u[i];
            }
            v[j] = nu / s;
        }
        if u.iter().chain(&v).any(|x| !x.is_finite() || *x == 0.0) {
            return Err(OtError::NumericalOverflow { iteration: it });
        }
        kv = k_times(&v);
        let row_err: f64 = (0..n).map(|i| (u[i] * kv[i] - mu).abs()).sum();
        if row_err < config.tolerance {
            break;
        }
    }
    let mut plan = kernel;
    for ((i, j), t) in plan.indexed_iter_mut() {
        *t *= u[i] * v[j];
    }
    if plan.iter().any(|t| !t.is_finite()) || plan.rows().into_iter().any(|r| r.sum() == 0.0) {
        return Err(OtError::NumericalOverflow { iteration: iterations });
    }
    Ok(finish(plan, iterations, config))
}

fn finish(plan: Array2<f64>, iterations: usize, config: &SinkhornConfig) -> TransportPlan {
    let (n, m) = plan.dim();
    let mu = 1.0 / n as f64;
    let nu = 1.0 / m as f64;
    let row_err: f64 = plan.rows().into_iter().map(|r| (r.sum() - mu).abs()).sum();
    let col_err: f64 = plan.columns().into_iter().map(|c| (c.sum() - nu).abs()).sum();
    let marginal_error = row_err + col_err;
    TransportPlan {
        values: plan,
        marginal_error,
        iterations,
        converged: marginal_error < config.tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn cost(c: Array2<f64>) -> CostMatrix {
        CostMatrix::new(c).unwrap()
    }

    #[test]
    fn single_coupling() {
        let plan = sinkhorn(&cost(array![[0.37]]), 0.1, &SinkhornConfig::default()).unwrap();
        assert!((plan.values()[[0, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(plan.row_normalized().unwrap(), array![[1.0]]);
    }

    #[test]
    fn constant_cost_gives_product_measure() {
        for log_domain in [true, false] {
            let cfg = SinkhornConfig {
                log_domain,
                ..Default::default()
            };
            let plan = sinkhorn(&cost(Array2::from_elem((3, 5), 0.8)), 0.1, &cfg).unwrap();
            for t in plan.values() {
                assert!((t - 1.0 / 15.0).abs() < 1e-12);
            }
            assert!(plan.converged());
        }
    }

    #[test]
    fn row_normalize_examples() {
        assert_eq!(row_normalize(&array![[2.0, 2.0]]).unwrap(), array![[0.5, 0.5]]);
        let stochastic = array![[0.25, 0.75], [1.0, 0.0]];
        assert_eq!(row_normalize(&stochastic).unwrap(), stochastic);
        assert_eq!(row_normalize(&array![[1.0, 1.0], [0.0, 0.0]]), Err(OtError::ZeroRow(1)));
    }

    #[test]
    fn random_plan_rows_sum_to_one() {
        let plan = Array2::from_shape_fn((4, 5), |(i, j)| 0.013 + ((i * 7 + j * 3) % 11) as f64 * 0.37);
        let norm = row_normalize(&plan).unwrap();
        for row in norm.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_domain_overflow_is_reported() {
        let c = array![[0.0, 1000.0], [1000.0, 0.0], [1000.0, 1000.0]];
        let cfg = SinkhornConfig {
            log_domain: false,
            ..Default::default()
        };
        assert!(matches!(
            sinkhorn(&cost(c.clone()), 0.5, &cfg),
            Err(OtError::NumericalOverflow { .. })
        ));
        let plan = sinkhorn(&cost(c), 0.5, &SinkhornConfig::default()).unwrap();
        assert!(plan.values().iter().all(|t| t.is_finite() && *t >= 0.0));
    }

    #[test]
    fn config_validation() {
        let c = cost(array![[1.0]]);
        let bad = SinkhornConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(sinkhorn(&c, 0.1, &bad).is_err());
        assert!(sinkhorn(&c, 0.0, &SinkhornConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let c = Array2::from_shape_fn((6, 6), |(i, j)| ((i * i * 3 + j * j * 5 + i * j) % 11) as f64 / 11.0);
        let cfg = SinkhornConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let plan = sinkhorn(&cost(c), 0.01, &cfg).unwrap();
        assert_eq!(plan.iterations(), 1);
        assert!(!plan.converged());
        assert!(plan.marginal_error() >= 1e-6);
    }

    fn arb_cost() -> impl Strategy<Value = Array2<f64>> {
        (1usize..=5, 1usize..=5).prop_flat_map(|(n, m)| {
            prop::collection::vec(0.0f64..2.0, n * m)
                .prop_map(move |v| Array2::from_shape_vec((n, m), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn log_and_direct_solvers_agree(c in arb_cost(), gamma in 0.1f64..2.0) {
            let c = cost(c);
            let log = sinkhorn(&c, gamma, &SinkhornConfig::default()).unwrap();
            let direct = sinkhorn(&c, gamma, &SinkhornConfig { log_domain: false, ..Default::default() }).unwrap();
            for (a, b) in log.values().iter().zip(direct.values()) {
                prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
            }
        }

        #[test]
        fn normalization_is_gauge_invariant(
            c in arb_cost(),
            scale in 1e-3f64..1e3,
            row_scales in prop::collection::vec(1e-2f64..1e2, 5),
        ) {
            let plan = sinkhorn(&cost(c), 0.1, &SinkhornConfig::default()).unwrap();
            let base = row_normalize(plan.values()).unwrap();
            let mut scaled = plan.values() * scale;
            for (mut row, s) in scaled.rows_mut().into_iter().zip(&row_scales) {
                row *= *s;
            }
            let again = row_normalize(&scaled).unwrap();
            for (a, b) in base.iter().zip(&again) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn solve_is_deterministic(c in arb_cost()) {
            let c = cost(c);
            let a = sinkhorn(&c, 0.1, &SinkhornConfig::default()).unwrap();
            let b = sinkhorn(&c, 0.1, &SinkhornConfig::default()).unwrap();
            let bits = |p: &TransportPlan| p.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }
}

use serde::{Deserialize, Serialize};

use super::{check_width, check_xy, soft_threshold};
use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda: 0.01,
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        LinearModel {
            weights,
            intercept,
            lambda: 0.0,
            iterations: 0,
            converged: true,
            warning: None,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(x, self.weights.len())?;
        Ok(x.iter_rows().map(|r| dot(r, &self.weights) + self.intercept).collect())
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

/// Cyclic coordinate descent on `½n⁻¹‖y − Xw − b‖² + λ‖w‖₁` with an
/// unpenalized intercept. Stops when no coefficient moves by `tol` or more
/// in a full sweep; hitting `max_iter` sweeps leaves a warning on the model.
pub fn train_lasso(x: &Matrix, y: &[f64], lambda: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    check_xy(x, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("lasso λ must be ≥ 0, got {lambda}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::param("lasso needs tol > 0 and max_iter ≥ 1"));
    }
    let (n, p) = x.shape();
    let nf = n as f64;
    let xt = x.transpose();
    let col_sq: Vec<f64> = (0..p).map(|j| dot(xt.row(j), xt.row(j)) / nf).collect();

    let mut w = vec![0.0; p];
    let mut b = y.iter().sum::<f64>() / nf;
    let mut resid: Vec<f64> = y.iter().map(|v| v - b).collect();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = xt.row(j);
            let rho = dot(xj, &resid) / nf + col_sq[j] * w[j];
            let new = soft_threshold(rho, lambda)? / col_sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, &xv) in resid.iter_mut().zip(xj) {
                    *r -= delta * xv;
                }
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        // Intercept: exact minimizer given w.
        let shift = resid.iter().sum::<f64>() / nf;
        if shift != 0.0 {
            resid.iter_mut().for_each(|r| *r -= shift);
            b += shift;
        }
        max_delta = max_delta.max(shift.abs());
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Degenerate("lasso produced non-finite coefficients".into()));
    }
    Ok(LinearModel {
        weights: w,
        intercept: b,
        lambda,
        iterations,
        converged,
        warning: (!converged).then(|| format!("lasso did not converge within {max_iter} sweeps (tol {tol:e})")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Distribution, RngStream};
    use proptest::prelude::*;

    fn gaussian(seed: u64, rows: usize, cols: usize) -> Matrix {
        RngStream::new(seed).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, rows, cols).unwrap()
    }

    #[test]
    fn zero_weights_predict_intercept() {
        let m = LinearModel::new(vec![0.0, 0.0], 4.5);
        assert_eq!(m.predict(&gaussian(1, 3, 2)).unwrap(), vec![4.5; 3]);
        assert!(matches!(m.predict(&gaussian(1, 3, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn constant_target_gives_constant_model() {
        let x = gaussian(2, 20, 3);
        let m = train_lasso(&x, &[2.0; 20], 0.1, 1e-7, 100).unwrap();
        assert_eq!(m.weights, vec![0.0; 3]);
        assert_eq!(m.intercept, 2.0);
        assert!(m.converged);
    }

    #[test]
    fn non_convergence_is_reported_on_the_model() {
        let x = gaussian(3, 30, 5);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0] + 0.5 * r[1]).collect();
        let m = train_lasso(&x, &y, 0.0, 1e-15, 1).unwrap();
        assert!(!m.converged);
        assert!(m.warning.as_deref().unwrap().contains("did not converge"));
    }

    #[test]
    fn parameter_errors() {
        let x = gaussian(4, 5, 2);
        assert!(train_lasso(&x, &[0.0; 5], -1.0, 1e-7, 10).is_err());
        assert!(train_lasso(&x, &[0.0; 4], 0.1, 1e-7, 10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sparsity_is_monotone_along_the_path(seed in 0u64..1000) {
            let x = gaussian(seed, 60, 8);
            let noise = gaussian(seed + 1, 60, 1);
            let y: Vec<f64> = x.iter_rows().zip(noise.as_slice())
                .map(|(r, e)| 2.0 * r[0] - 1.0 * r[1] + 0.5 * r[2] + 0.25 * r[3] + 0.3 * e)
                .collect();
            let mut last = usize::MAX;
            for lambda in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2] {
                let m = train_lasso(&x, &y, lambda, 1e-9, 100_000).unwrap();
                prop_assert!(m.nonzero() <= last, "λ={} nonzero={} prev={}", lambda, m.nonzero(), last);
                last = m.nonzero();
            }
        }
    }
}

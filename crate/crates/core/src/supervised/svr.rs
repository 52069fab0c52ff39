use serde::{Deserialize, Serialize};

use super::{check_width, check_xy};
use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 1.0,
            epsilon: 0.1,
            epochs: 100,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl SvrConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::param(format!("SVR C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::param(format!("SVR ε must be ≥ 0, got {}", self.epsilon)));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::param("SVR needs lr > 0 and batch_size ≥ 1"));
        }
        Ok(())
    }
}

/// Linear ε-insensitive support vector regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub epsilon: f64,
    pub c: f64,
    /// Primal objective after each epoch.
    pub objective: Vec<f64>,
}

impl SvrModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        SvrModel {
            weights,
            intercept,
            epsilon: 0.0,
            c: 1.0,
            objective: Vec::new(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(x, self.weights.len())?;
        Ok(x.iter_rows().map(|r| dot(r, &self.weights) + self.intercept).collect())
    }
}

/// `½‖w‖² + C·Σ max(0, |y − (w·x + b)| − ε)`.
pub fn svr_objective(w: &[f64], b: f64, x: &Matrix, y: &[f64], c: f64, epsilon: f64) -> f64 {
    let hinge: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(r, &t)| ((t - dot(r, w) - b).abs() - epsilon).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

pub fn train_svr(x: &Matrix, y: &[f64], cfg: &SvrConfig) -> Result<SvrModel> {
    train_svr_from(x, y, cfg, &SvrModel::new(vec![0.0; x.cols()], 0.0))
}

/// Mini-batch subgradient descent on the primal objective divided by `n`,
/// starting from `init`. The step size at epoch `e` (from 0) is
/// `lr / √(1 + e)`.
pub fn train_svr_from(x: &Matrix, y: &[f64], cfg: &SvrConfig, init: &SvrModel) -> Result<SvrModel> {
    check_xy(x, y)?;
    cfg.validate()?;
    check_width(x, init.weights.len())?;
    let n = x.rows();
    let nf = n as f64;
    let mut rng = RngStream::new(cfg.seed);
    let mut w = init.weights.clone();
    let mut b = init.intercept;
    let mut objective = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; w.len()];
    for epoch in 0..cfg.epochs {
        let eta = cfg.lr / (1.0 + epoch as f64).sqrt();
        let order = rng.permutation(n);
        for batch in order.chunks(cfg.batch_size) {
            let scale = cfg.c / batch.len() as f64;
            grad.iter_mut().zip(&w).for_each(|(g, wv)| *g = wv / nf);
            let mut grad_b = 0.0;
            for &i in batch {
                let r = x.row(i);
                let resid = y[i] - dot(r, &w) - b;
                if resid.abs() > cfg.epsilon {
                    // d/dw of |y − w·x − b| is −sign(resid)·x.
                    let s = -resid.signum() * scale;
                    grad.iter_mut().zip(r).for_each(|(g, xv)| *g += s * xv);
                    grad_b += s;
                }
            }
            w.iter_mut().zip(&grad).for_each(|(wv, g)| *wv -= eta * g);
            b -= eta * grad_b;
        }
        let obj = svr_objective(&w, b, x, y, cfg.c, cfg.epsilon);
        if !obj.is_finite() {
            return Err(Error::Divergence { epoch, phase: "svr" });
        }
        objective.push(obj);
    }
    Ok(SvrModel {
        weights: w,
        intercept: b,
        epsilon: cfg.epsilon,
        c: cfg.c,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Distribution;
    use crate::supervised::rmse;

    fn gaussian(seed: u64, rows: usize, cols: usize) -> Matrix {
        RngStream::new(seed).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, rows, cols).unwrap()
    }

    #[test]
    fn identity_weights_predict_input() {
        let m = SvrModel::new(vec![1.0], 0.0);
        let x = gaussian(1, 5, 1);
        assert_eq!(m.predict(&x).unwrap(), x.col_values(0));
    }

    #[test]
    fn linear_data_is_fit_within_tube() {
        let x = gaussian(2, 300, 3);
        let y: Vec<f64> = x.iter_rows().map(|r| 1.5 * r[0] - 0.5 * r[1] + 0.25 * r[2] + 0.3).collect();
        let m = train_svr(&x, &y, &SvrConfig { epsilon: 0.1, ..Default::default() }).unwrap();
        let err = rmse(&y, &m.predict(&x).unwrap()).unwrap();
        assert!(err <= 0.2, "rmse {err}");
        assert!(m.objective.last().unwrap() < &m.objective[0]);
    }

    #[test]
    fn inside_tube_only_regularizer_shrinks() {
        let x = gaussian(3, 20, 2);
        let y = vec![0.0; 20];
        let init = SvrModel::new(vec![0.01, -0.02], 0.0);
        let cfg = SvrConfig { epsilon: 100.0, epochs: 3, ..Default::default() };
        let m = train_svr_from(&x, &y, &cfg, &init).unwrap();
        assert_eq!(m.intercept, 0.0);
        for (a, b) in m.weights.iter().zip(&init.weights) {
            assert!(a.abs() < b.abs() && a.signum() == b.signum());
            // Pure decay: ratio is the same for every coordinate.
            assert!((a / b - m.weights[0] / init.weights[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_errors_and_determinism() {
        let x = gaussian(4, 30, 2);
        let y = x.col_values(0);
        assert!(train_svr(&x, &y, &SvrConfig { c: 0.0, ..Default::default() }).is_err());
        assert!(train_svr(&x, &y, &SvrConfig { epsilon: -0.1, ..Default::default() }).is_err());
        let cfg = SvrConfig { seed: 8, epochs: 10, ..Default::default() };
        assert_eq!(train_svr(&x, &y, &cfg).unwrap(), train_svr(&x, &y, &cfg).unwrap());
    }
}

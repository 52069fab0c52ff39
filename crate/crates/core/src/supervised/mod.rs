//! Regression learners and the RMSE metric.

mod forest;
mod lasso;
mod svr;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub use forest::{train_random_forest, DecisionTree, ForestConfig, Node, RfModel};
pub use lasso::{train_lasso, LassoConfig, LinearModel};
pub use svr::{svr_objective, train_svr, train_svr_from, SvrConfig, SvrModel};

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::param(format!("rmse: {} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::param("rmse of zero rows"));
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// `sign(z)·max(|z| − λ, 0)`.
pub fn soft_threshold(z: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("soft threshold λ must be ≥ 0, got {lambda}")));
    }
    Ok(z.signum() * (z.abs() - lambda).max(0.0))
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::shape("fit", x.shape(), (y.len(), 1)));
    }
    if x.rows() == 0 {
        return Err(Error::param("cannot fit on zero rows"));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("training data contains non-finite values".into()));
    }
    Ok(())
}

fn check_width(x: &Matrix, width: usize) -> Result<()> {
    if x.cols() != width {
        return Err(Error::shape("predict", x.shape(), (x.rows(), width)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Rf,
    Lasso,
    Svm,
}

impl LearnerKind {
    /// Report column order.
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Rf, LearnerKind::Lasso, LearnerKind::Svm];
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Rf => "RF",
            LearnerKind::Lasso => "Lasso",
            LearnerKind::Svm => "SVM",
        })
    }
}

/// One hyperparameter setting of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum LearnerConfig {
    Rf(ForestConfig),
    Lasso(LassoConfig),
    Svm(SvrConfig),
}

impl LearnerConfig {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerConfig::Rf(_) => LearnerKind::Rf,
            LearnerConfig::Lasso(_) => LearnerKind::Lasso,
            LearnerConfig::Svm(_) => LearnerKind::Svm,
        }
    }

    /// Copy with its seed replaced (Lasso has none).
    pub fn with_seed(&self, seed: u64) -> LearnerConfig {
        match self {
            LearnerConfig::Rf(c) => LearnerConfig::Rf(ForestConfig { seed, ..c.clone() }),
            LearnerConfig::Lasso(c) => LearnerConfig::Lasso(c.clone()),
            LearnerConfig::Svm(c) => LearnerConfig::Svm(SvrConfig { seed, ..c.clone() }),
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[f64]) -> Result<Regressor> {
        Ok(match self {
            LearnerConfig::Rf(c) => Regressor::Rf(train_random_forest(x, y, c)?),
            LearnerConfig::Lasso(c) => Regressor::Lasso(train_lasso(x, y, c.lambda, c.tol, c.max_iter)?),
            LearnerConfig::Svm(c) => Regressor::Svm(train_svr(x, y, c)?),
        })
    }
}

/// A fitted learner of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    Rf(RfModel),
    Lasso(LinearModel),
    Svm(SvrModel),
}

impl Regressor {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Regressor::Rf(m) => m.predict(x),
            Regressor::Lasso(m) => m.predict(x),
            Regressor::Svm(m) => m.predict(x),
        }
    }

    /// Non-fatal training diagnostics, e.g. Lasso non-convergence.
    pub fn warning(&self) -> Option<&str> {
        match self {
            Regressor::Lasso(m) => m.warning.as_deref(),
            _ => None,
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// L2 coefficient on every trainable parameter.
    pub lambda: f64,
    /// Weight of the horizon RMSE.
    pub alpha1: f64,
    /// Weight of the reconstruction RMSE.
    pub alpha2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1e-4,
            alpha1: 1.0,
            alpha2: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::param(
                "loss",
                "lambda, alpha1 and alpha2 must be >= 0",
            ));
        }
        if !(self.alpha1 + self.alpha2 > 0.0) {
            return Err(Error::param("loss", "alpha1 + alpha2 must be positive"));
        }
        Ok(())
    }
}

/// Which loss a model trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Horizon RMSE plus the L2 term.
    Point,
    /// Weighted horizon and reconstruction RMSEs plus the L2 term.
    Seq2Seq,
}

pub fn l2_penalty(params: &[f64], lambda: f64) -> f64 {
    lambda * params.iter().map(|v| v * v).sum::<f64>()
}

/// RMSE and its gradient w.r.t. `pred`. The gradient is taken as zero at a
/// perfect fit, where the square root is not differentiable.
pub fn rmse_with_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(target.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let n = pred.len() as f64;
    let rmse = (pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt();
    let grad = if rmse > 0.0 {
        pred.iter()
            .zip(target)
            .map(|(p, t)| (p - t) / (n * rmse))
            .collect()
    } else {
        vec![0.0; pred.len()]
    };
    Ok((rmse, grad))
}

pub fn loss_point(pred: &[f64], target: &[f64], params: &[f64], lambda: f64) -> Result<f64> {
    Ok(rmse_with_grad(pred, target)?.0 + l2_penalty(params, lambda))
}

pub fn loss_seq2seq(
    pred_horizon: &[f64],
    target_horizon: &[f64],
    pred_recent: &[f64],
    target_recent: &[f64],
    params: &[f64],
    cfg: &LossConfig,
) -> Result<f64> {
    let h = rmse_with_grad(pred_horizon, target_horizon)?.0;
    // an empty reconstruction contributes nothing
    let r = if pred_recent.is_empty() && target_recent.is_empty() {
        0.0
    } else {
        rmse_with_grad(pred_recent, target_recent)?.0
    };
    Ok(cfg.alpha1 * h + cfg.alpha2 * r + l2_penalty(params, cfg.lambda))
}

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GradientDescent,
    Rmsprop,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay; also the RMSprop average decay.
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale the whole gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("optimizer", "decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::param("clip_norm", "must be positive"));
        }
        Ok(())
    }
}

/// Optimizer with its running moments.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, param_count: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len(self.first.len(), params.len())?;
        check_len(params.len(), grads.len())?;
        self.steps += 1;
        let c = &self.cfg;
        let scale = match c.clip_norm {
            Some(limit) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > limit {
                    limit / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let lr = c.learning_rate;
        match c.kind {
            OptimizerKind::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * scale * g;
                }
            }
            OptimizerKind::Rmsprop => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.second) {
                    let g = scale * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *p -= lr * g / (v.sqrt() + c.epsilon);
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let g = scale * g;
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
                }
            }
        }
        Ok(())
    }
}

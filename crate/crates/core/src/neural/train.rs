use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

use super::loss::{l2_penalty, rmse_with_grad, LossConfig, Objective};
use super::model::{ModelInput, Prepared, Seq2SeqKnowledgeModel};
use super::optim::{Optimizer, OptimizerConfig};

/// One training example in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: ModelInput,
    /// The `n` values following the recent window.
    pub horizon: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    /// Evaluate the test loss every this many epochs; 0 disables it.
    pub test_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            test_every: 1,
        }
    }
}

/// Per-epoch losses in normalized units. `train_loss[e]` is the
/// teacher-forced loss the update of epoch `e` descended; `test_loss` holds
/// `(epoch, loss)` of free-running evaluations after that epoch's update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<(usize, f64)>,
}

pub(crate) struct PreparedSample {
    input: Prepared,
    horizon: Vec<f64>,
}

pub(crate) fn prepare_samples(
    model: &Seq2SeqKnowledgeModel,
    samples: &[Sample],
) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| {
            check_len(model.config.horizon, s.horizon.len())?;
            Ok(PreparedSample {
                input: model.prepare(&s.input)?,
                horizon: s.horizon.iter().map(|&v| model.scaler.apply(v)).collect(),
            })
        })
        .collect()
}

/// Batch loss over all samples; RMSE terms pool every element of the batch.
/// Returns the flattened gradient when `with_grad`.
pub(crate) fn batch_loss(
    model: &Seq2SeqKnowledgeModel,
    batch: &[PreparedSample],
    objective: Objective,
    cfg: &LossConfig,
    teacher: bool,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let (d, n) = (model.config.recon_len, model.config.horizon);
    let mut traces = Vec::with_capacity(batch.len());
    let mut pred_h = Vec::with_capacity(batch.len() * n);
    let mut true_h = Vec::with_capacity(batch.len() * n);
    let mut pred_r = Vec::with_capacity(batch.len() * d);
    let mut true_r = Vec::with_capacity(batch.len() * d);
    for s in batch {
        let trace = model.trace(&s.input, teacher.then_some(&s.horizon[..]));
        pred_r.extend_from_slice(&trace.outputs[..d]);
        pred_h.extend_from_slice(&trace.outputs[d..]);
        true_r.extend_from_slice(model.recon_target(&s.input));
        true_h.extend_from_slice(&s.horizon);
        traces.push(trace);
    }
    let params = model.flat_params();
    let (rh, gh) = rmse_with_grad(&pred_h, &true_h)?;
    let (wh, wr) = match objective {
        Objective::Point => (1.0, 0.0),
        Objective::Seq2Seq => (cfg.alpha1, cfg.alpha2),
    };
    let (rr, gr) = if d > 0 && wr != 0.0 {
        rmse_with_grad(&pred_r, &true_r)?
    } else {
        (0.0, vec![0.0; pred_r.len()])
    };
    let loss = wh * rh + wr * rr + l2_penalty(&params, cfg.lambda);
    if !with_grad {
        return Ok((loss, None));
    }

    let mut grad = model.zeros_like();
    let mut dout = vec![0.0; d + n];
    for (k, (s, trace)) in batch.iter().zip(&traces).enumerate() {
        for j in 0..d {
            dout[j] = wr * gr[k * d + j];
        }
        for j in 0..n {
            dout[d + j] = wh * gh[k * n + j];
        }
        model.backward(&s.input, trace, &dout, &mut grad);
    }
    let mut flat = grad.flat_params();
    for (g, w) in flat.iter_mut().zip(&params) {
        *g += 2.0 * cfg.lambda * w;
    }
    Ok((loss, Some(flat)))
}

/// Deterministic full-batch training. The objective follows the model's
/// variant; training is teacher-forced, test evaluation runs free.
pub fn train(
    model: &mut Seq2SeqKnowledgeModel,
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<History> {
    if train_set.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    model.validate()?;
    cfg.loss.validate()?;
    let objective = model.config.variant.objective();
    let train_p = prepare_samples(model, train_set)?;
    let test_p = prepare_samples(model, test_set)?;
    let mut opt = Optimizer::new(cfg.optimizer, model.param_count())?;
    let mut history = History::default();
    let mut params = model.flat_params();
    for epoch in 0..cfg.epochs {
        let (loss, grad) = batch_loss(model, &train_p, objective, &cfg.loss, true, true)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.train_loss.push(loss);
        opt.step(&mut params, &grad.expect("requested"))?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        model.set_flat_params(&params)?;
        if cfg.test_every > 0 && !test_p.is_empty() && (epoch + 1) % cfg.test_every == 0 {
            let (test, _) = batch_loss(model, &test_p, objective, &cfg.loss, false, false)?;
            history.test_loss.push((epoch, test));
        }
    }
    Ok(history)
}

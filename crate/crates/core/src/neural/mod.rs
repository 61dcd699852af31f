//! Recurrent networks written from scratch.
//!
//! [`cell`] holds the plain RNN, LSTM and GRU updates with their
//! backpropagation-through-time steps. [`model`] wires them into the
//! dual-encoder Seq2Seq forecaster: encoder 1 reads the knowledge tree as a
//! scalar stream, encoder 2 reads the recent window, and a decoder seeded
//! from both emits a reconstruction of the window's tail followed by the
//! forecast horizon. [`loss`], [`optim`] and [`train`] provide the composite
//! RMSE objectives, the three optimizers and a deterministic full-batch
//! training loop; [`gradcheck`] compares analytic gradients with central
//! differences.
//!
//! All matrices are row-major `Vec<f64>`.

pub mod cell;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

pub use cell::{
    decode, encode, gru_step, lstm_step, rnn_step, CellKind, CellParams, RecurrentState,
};
pub use gradcheck::grad_check;
pub use loss::{l2_penalty, loss_point, loss_seq2seq, rmse_with_grad, LossConfig, Objective};
pub use model::{
    load_model, save_model, Forecast, ModelConfig, ModelInput, NodeInput, Scaler,
    Seq2SeqKnowledgeModel, Variant, MODEL_SCHEMA_VERSION,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use train::{train, History, Sample, TrainConfig};

/// Affine map `y = W x + b`, `W` is `out_dim x in_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    /// Weights uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`, zero bias.
    pub fn random<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        let a = 1.0 / (in_dim as f64).sqrt();
        for v in &mut l.w {
            *v = rng.random_range(-a..=a);
        }
        l
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.in_dim, x.len())?;
        let mut y = self.b.clone();
        add_matvec(&mut y, &self.w, self.in_dim, x);
        Ok(y)
    }

    /// Accumulates weight gradients and returns `dL/dx`.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        add_outer(&mut grad.w, dy, x);
        for (b, d) in grad.b.iter_mut().zip(dy) {
            *b += d;
        }
        let mut dx = vec![0.0; self.in_dim];
        add_matvec_t(&mut dx, &self.w, self.in_dim, dy);
        dx
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [&self.w, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.w, &mut self.b]
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `out += M x` for `M` with `out.len()` rows and `cols` columns.
pub(crate) fn add_matvec(out: &mut [f64], m: &[f64], cols: usize, x: &[f64]) {
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T v` for `M` with `v.len()` rows and `cols` columns.
pub(crate) fn add_matvec_t(out: &mut [f64], m: &[f64], cols: usize, v: &[f64]) {
    for (row, &vr) in m.chunks_exact(cols).zip(v) {
        if vr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vr;
        }
    }
}

/// `g += u v^T`.
pub(crate) fn add_outer(g: &mut [f64], u: &[f64], v: &[f64]) {
    for (row, &ur) in g.chunks_exact_mut(v.len()).zip(u) {
        if ur == 0.0 {
            continue;
        }
        for (a, b) in row.iter_mut().zip(v) {
            *a += ur * b;
        }
    }
}

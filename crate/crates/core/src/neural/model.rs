use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::knowledge::{KnowledgeNode, KnowledgeTree};

use super::cell::{CellKind, CellParams, RecurrentState, StepCache};
use super::loss::Objective;
use super::Linear;

pub const MODEL_SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both encoders; knowledge nodes carry their completions.
    OptimizedCorr,
    /// Both encoders; knowledge nodes without completions.
    NonOptimizedCorr,
    /// Recent window only, affine junction into the decoder.
    PlainSeq2seq,
    /// Recent window only, the encoder's final state seeds the decoder
    /// directly, trained on the horizon loss alone.
    PlainLstm,
}

impl Variant {
    pub fn uses_tree(self) -> bool {
        matches!(self, Variant::OptimizedCorr | Variant::NonOptimizedCorr)
    }

    pub fn uses_predictions(self) -> bool {
        self == Variant::OptimizedCorr
    }

    pub fn fused(self) -> bool {
        self != Variant::PlainLstm
    }

    pub fn objective(self) -> Objective {
        if self == Variant::PlainLstm {
            Objective::Point
        } else {
            Objective::Seq2Seq
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub cell: CellKind,
    pub hidden_dim: usize,
    /// Length `m` of the recent window.
    pub window: usize,
    /// Forecast steps `n`.
    pub horizon: usize,
    /// Trailing values of the recent window the decoder reconstructs first.
    pub recon_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::OptimizedCorr,
            cell: CellKind::Gru,
            hidden_dim: 32,
            window: 36,
            horizon: 6,
            recon_len: 6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::param("hidden_dim", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if self.window < self.recon_len + 1 {
            return Err(Error::param("recon_len", "window must exceed recon_len"));
        }
        Ok(())
    }

    fn state_width(&self) -> usize {
        self.cell.state_width(self.hidden_dim)
    }
}

/// Affine normalization applied to every model input and undone on outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Default for Scaler {
    fn default() -> Self {
        Scaler {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl Scaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData {
                required: 1,
                actual: 0,
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(Scaler {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeInput {
    pub rho: f64,
    pub sequence: Vec<f64>,
    pub prediction: Option<Vec<f64>>,
}

impl From<&KnowledgeNode> for NodeInput {
    fn from(n: &KnowledgeNode) -> Self {
        NodeInput {
            rho: n.rho,
            sequence: n.sequence.clone(),
            prediction: n.prediction.clone(),
        }
    }
}

/// One model input in physical units: knowledge nodes in encoder order
/// (ascending `|rho|`) and the recent window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub nodes: Vec<NodeInput>,
    pub recent: Vec<f64>,
}

impl ModelInput {
    pub fn recent_only(recent: &[f64]) -> Self {
        ModelInput {
            nodes: Vec::new(),
            recent: recent.to_vec(),
        }
    }

    /// Nodes must already be in ascending `|rho|`.
    pub fn from_nodes(nodes: &[KnowledgeNode], recent: &[f64]) -> Result<Self> {
        let input = ModelInput {
            nodes: nodes.iter().map(NodeInput::from).collect(),
            recent: recent.to_vec(),
        };
        input.check_order()?;
        Ok(input)
    }

    pub fn from_tree(tree: &KnowledgeTree, recent: &[f64]) -> Result<Self> {
        Self::from_nodes(&tree.ordered_nodes(), recent)
    }

    fn check_order(&self) -> Result<()> {
        match self
            .nodes
            .windows(2)
            .position(|w| w[0].rho.abs() > w[1].rho.abs())
        {
            Some(k) => Err(Error::Contract(format!(
                "knowledge nodes must be in ascending |rho| order (node {} has |rho| {} after {})",
                k + 1,
                self.nodes[k + 1].rho.abs(),
                self.nodes[k].rho.abs()
            ))),
            None => Ok(()),
        }
    }
}

/// Model output in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// The last `recon_len` values of the recent window, as reconstructed.
    pub reconstruction: Vec<f64>,
    pub horizon: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Feed {
    Value(f64),
    Separator,
}

/// Normalized, validated input ready for the recurrences.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    stream: Vec<Feed>,
    recent: Vec<f64>,
}

pub(crate) struct Trace {
    enc1: Vec<StepCache>,
    enc2: Vec<StepCache>,
    junction: Vec<f64>,
    dec: Vec<StepCache>,
    // decoder hidden state after each step, the head's input
    dec_h: Vec<Vec<f64>>,
    // step k consumed output k - 1
    fed_back: Vec<bool>,
    pub(crate) outputs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqKnowledgeModel {
    pub config: ModelConfig,
    pub scaler: Scaler,
    /// Knowledge-tree encoder, scalar input.
    pub encoder1: Option<CellParams>,
    /// Learned scalar fed to encoder 1 between nodes.
    pub separator: Vec<f64>,
    /// Recent-window encoder, scalar input.
    pub encoder2: CellParams,
    /// Concatenated final states to the decoder's initial state.
    pub fusion: Option<Linear>,
    pub decoder: CellParams,
    pub head: Linear,
}

impl Seq2SeqKnowledgeModel {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (kind, h) = (config.cell, config.hidden_dim);
        let s = config.state_width();
        let tree = config.variant.uses_tree();
        let encoders = if tree { 2 } else { 1 };
        Ok(Seq2SeqKnowledgeModel {
            encoder1: tree.then(|| CellParams::zeros(kind, 1, h)),
            separator: if tree { vec![0.0] } else { Vec::new() },
            encoder2: CellParams::zeros(kind, 1, h),
            fusion: config
                .variant
                .fused()
                .then(|| Linear::zeros(encoders * s, s)),
            decoder: CellParams::zeros(kind, 1, h),
            head: Linear::zeros(h, 1),
            scaler: Scaler::default(),
            config,
        })
    }

    /// Seeded initialization: recurrent weights uniform in
    /// `[-1/sqrt(hidden), 1/sqrt(hidden)]`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (kind, h) = (model.config.cell, model.config.hidden_dim);
        if let Some(e) = &mut model.encoder1 {
            *e = CellParams::random(kind, 1, h, &mut rng);
        }
        for v in &mut model.separator {
            *v = rng.random_range(-1.0..=1.0);
        }
        model.encoder2 = CellParams::random(kind, 1, h, &mut rng);
        if let Some(f) = &mut model.fusion {
            *f = Linear::random(f.in_dim, f.out_dim, &mut rng);
        }
        model.decoder = CellParams::random(kind, 1, h, &mut rng);
        model.head = Linear::random(h, 1, &mut rng);
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let shape = Self::zeros(cfg.clone())?;
        let cells = [
            (&self.encoder1, &shape.encoder1),
            (&Some(self.encoder2.clone()), &Some(shape.encoder2.clone())),
            (&Some(self.decoder.clone()), &Some(shape.decoder.clone())),
        ];
        for (got, want) in cells {
            match (got, want) {
                (Some(g), Some(w)) => {
                    if (g.kind, g.input_dim, g.hidden_dim) != (w.kind, w.input_dim, w.hidden_dim) {
                        return Err(Error::param(
                            "model",
                            "cell shape disagrees with the config",
                        ));
                    }
                    g.validate()?;
                }
                (None, None) => {}
                _ => {
                    return Err(Error::param(
                        "model",
                        "encoder set disagrees with the variant",
                    ))
                }
            }
        }
        check_len(shape.separator.len(), self.separator.len())?;
        match (&self.fusion, &shape.fusion) {
            (Some(g), Some(w)) => {
                check_len(w.in_dim * w.out_dim, g.w.len())?;
                check_len(w.out_dim, g.b.len())?;
                if (g.in_dim, g.out_dim) != (w.in_dim, w.out_dim) {
                    return Err(Error::param("fusion", "shape disagrees with the config"));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::param(
                    "fusion",
                    "presence disagrees with the variant",
                ))
            }
        }
        if (self.head.in_dim, self.head.out_dim) != (cfg.hidden_dim, 1) {
            return Err(Error::param("head", "must map hidden -> 1"));
        }
        check_len(cfg.hidden_dim, self.head.w.len())?;
        check_len(1, self.head.b.len())?;
        if !(self.scaler.std > 0.0 && self.scaler.mean.is_finite()) {
            return Err(Error::param("scaler", "std must be positive"));
        }
        if !self
            .tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
        {
            return Err(Error::param("model", "parameters must be finite"));
        }
        Ok(())
    }

    /// Every trainable tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(e) = &self.encoder1 {
            out.extend(e.tensors());
        }
        out.push(&self.separator);
        out.extend(self.encoder2.tensors());
        if let Some(f) = &self.fusion {
            out.extend(f.tensors());
        }
        out.extend(self.decoder.tensors());
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(e) = &mut self.encoder1 {
            out.extend(e.tensors_mut());
        }
        out.push(&mut self.separator);
        out.extend(self.encoder2.tensors_mut());
        if let Some(f) = &mut self.fusion {
            out.extend(f.tensors_mut());
        }
        out.extend(self.decoder.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len(self.param_count(), flat.len())?;
        let mut rest = flat;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Same shapes, every parameter zero; used to accumulate gradients.
    pub(crate) fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for t in g.tensors_mut() {
            t.fill(0.0);
        }
        g
    }

    pub(crate) fn prepare(&self, input: &ModelInput) -> Result<Prepared> {
        let cfg = &self.config;
        check_len(cfg.window, input.recent.len())?;
        let mut stream = Vec::new();
        if cfg.variant.uses_tree() {
            if input.nodes.is_empty() {
                return Err(Error::Contract(
                    "knowledge-based variants need a nonempty knowledge tree".into(),
                ));
            }
            input.check_order()?;
            for (k, node) in input.nodes.iter().enumerate() {
                if node.sequence.is_empty() {
                    return Err(Error::Contract("knowledge node without a sequence".into()));
                }
                if k > 0 {
                    stream.push(Feed::Separator);
                }
                stream.extend(
                    node.sequence
                        .iter()
                        .map(|&v| Feed::Value(self.scaler.apply(v))),
                );
                if cfg.variant.uses_predictions() {
                    let pred = node.prediction.as_ref().ok_or_else(|| {
                        Error::Contract("optimized variant needs every node's prediction".into())
                    })?;
                    stream.extend(pred.iter().map(|&v| Feed::Value(self.scaler.apply(v))));
                }
            }
        }
        Ok(Prepared {
            stream,
            recent: input.recent.iter().map(|&v| self.scaler.apply(v)).collect(),
        })
    }

    /// Normalized reconstruction target: the recent window's tail.
    pub(crate) fn recon_target<'p>(&self, p: &'p Prepared) -> &'p [f64] {
        &p.recent[self.config.window - self.config.recon_len..]
    }

    fn run_encoder<I: Iterator<Item = f64>>(
        cell: &CellParams,
        inputs: I,
    ) -> (RecurrentState, Vec<StepCache>) {
        let mut state = RecurrentState::zeros(cell.kind, cell.hidden_dim);
        let mut caches = Vec::new();
        for x in inputs {
            let (next, cache) = cell.step_cached(&[x], &state);
            state = next;
            caches.push(cache);
        }
        (state, caches)
    }

    /// Forward pass in normalized units. With `teacher`, horizon steps after
    /// the first consume the true previous value instead of the model's own.
    pub(crate) fn trace(&self, p: &Prepared, teacher: Option<&[f64]>) -> Trace {
        let cfg = &self.config;
        let (m, d, n) = (cfg.window, cfg.recon_len, cfg.horizon);
        let mut junction = Vec::new();
        let mut enc1 = Vec::new();
        if let Some(cell) = &self.encoder1 {
            let sep = self.separator[0];
            let inputs = p.stream.iter().map(|f| match f {
                Feed::Value(v) => *v,
                Feed::Separator => sep,
            });
            let (state, caches) = Self::run_encoder(cell, inputs);
            junction.extend(state.flat());
            enc1 = caches;
        }
        let (state2, enc2) = Self::run_encoder(&self.encoder2, p.recent.iter().copied());
        junction.extend(state2.flat());
        let init = match &self.fusion {
            Some(f) => f
                .apply(&junction)
                .expect("fusion shape checked by validate"),
            None => junction.clone(),
        };
        let mut state = RecurrentState::from_flat(cfg.cell, cfg.hidden_dim, &init);

        let steps = d + n;
        let mut dec = Vec::with_capacity(steps);
        let mut dec_h = Vec::with_capacity(steps);
        let mut fed_back = vec![false; steps];
        let mut outputs: Vec<f64> = Vec::with_capacity(steps);
        for k in 0..steps {
            let x = if k <= d {
                p.recent[m - d - 1 + k]
            } else if let Some(t) = teacher {
                t[k - d - 1]
            } else {
                fed_back[k] = true;
                outputs[k - 1]
            };
            let (next, cache) = self.decoder.step_cached(&[x], &state);
            state = next;
            let y = self.head.b[0]
                + self
                    .head
                    .w
                    .iter()
                    .zip(&state.h)
                    .map(|(w, h)| w * h)
                    .sum::<f64>();
            outputs.push(y);
            dec.push(cache);
            dec_h.push(state.h.clone());
        }
        Trace {
            enc1,
            enc2,
            junction,
            dec,
            dec_h,
            fed_back,
            outputs,
        }
    }

    /// Accumulates `dL/dparams` into `grad` given `dL/doutputs`.
    pub(crate) fn backward(&self, p: &Prepared, trace: &Trace, dout: &[f64], grad: &mut Self) {
        let cfg = &self.config;
        let h = cfg.hidden_dim;
        let lstm = cfg.cell == CellKind::Lstm;
        let mut dout = dout.to_vec();
        let mut dh = vec![0.0; h];
        let mut dc = lstm.then(|| vec![0.0; h]);
        for k in (0..trace.dec.len()).rev() {
            let dh_head = self
                .head
                .backward(&trace.dec_h[k], &dout[k..=k], &mut grad.head);
            for (a, b) in dh.iter_mut().zip(&dh_head) {
                *a += b;
            }
            let (dx, dhp, dcp) =
                self.decoder
                    .backward_step(&trace.dec[k], &dh, dc.as_deref(), &mut grad.decoder);
            if trace.fed_back[k] {
                dout[k - 1] += dx[0];
            }
            dh = dhp;
            dc = dcp;
        }
        let mut dinit = dh;
        if let Some(c) = dc {
            dinit.extend(c);
        }
        let djunction = match &self.fusion {
            Some(f) => f.backward(
                &trace.junction,
                &dinit,
                grad.fusion.as_mut().expect("gradient mirrors the model"),
            ),
            None => dinit,
        };

        let s = cfg.state_width();
        let (d1, d2) = djunction.split_at(djunction.len() - s);
        Self::backward_encoder(
            &self.encoder2,
            &trace.enc2,
            d2,
            &mut grad.encoder2,
            |_, _| {},
        );
        if let Some(cell) = &self.encoder1 {
            let gcell = grad.encoder1.as_mut().expect("gradient mirrors the model");
            let mut dsep = 0.0;
            Self::backward_encoder(cell, &trace.enc1, d1, gcell, |k, dx| {
                if matches!(p.stream[k], Feed::Separator) {
                    dsep += dx;
                }
            });
            grad.separator[0] += dsep;
        }
    }

    fn backward_encoder(
        cell: &CellParams,
        caches: &[StepCache],
        dstate: &[f64],
        grad: &mut CellParams,
        mut on_dx: impl FnMut(usize, f64),
    ) {
        let h = cell.hidden_dim;
        let mut dh = dstate[..h].to_vec();
        let mut dc = (cell.kind == CellKind::Lstm).then(|| dstate[h..].to_vec());
        for (k, cache) in caches.iter().enumerate().rev() {
            let (dx, dhp, dcp) = cell.backward_step(cache, &dh, dc.as_deref(), grad);
            on_dx(k, dx[0]);
            dh = dhp;
            dc = dcp;
        }
    }

    fn to_forecast(&self, outputs: &[f64]) -> Forecast {
        let d = self.config.recon_len;
        let inv = |v: &f64| self.scaler.invert(*v);
        Forecast {
            reconstruction: outputs[..d].iter().map(inv).collect(),
            horizon: outputs[d..].iter().map(inv).collect(),
        }
    }

    /// Inference: the horizon is decoded autoregressively.
    pub fn forward(&self, input: &ModelInput) -> Result<Forecast> {
        let p = self.prepare(input)?;
        Ok(self.to_forecast(&self.trace(&p, None).outputs))
    }

    /// Inference from tree nodes given in encoder order (ascending `|rho|`);
    /// any other order is a contract violation.
    pub fn forward_nodes(&self, nodes: &[KnowledgeNode], recent: &[f64]) -> Result<Forecast> {
        self.forward(&ModelInput::from_nodes(nodes, recent)?)
    }

    /// Teacher-forced pass in physical units, as seen during training.
    pub fn forward_teacher(&self, input: &ModelInput, horizon: &[f64]) -> Result<Forecast> {
        check_len(self.config.horizon, horizon.len())?;
        let p = self.prepare(input)?;
        let t: Vec<f64> = horizon.iter().map(|&v| self.scaler.apply(v)).collect();
        Ok(self.to_forecast(&self.trace(&p, Some(&t)).outputs))
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    schema_version: u64,
    model: &'a Seq2SeqKnowledgeModel,
}

pub fn save_model(model: &Seq2SeqKnowledgeModel, path: &Path) -> Result<()> {
    let doc = CheckpointRef {
        schema_version: MODEL_SCHEMA_VERSION,
        model,
    };
    fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Seq2SeqKnowledgeModel> {
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let found = doc
        .get("schema_version")
        .and_then(serde_json::Value::as_u64);
    if found != Some(MODEL_SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            found,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let model: Seq2SeqKnowledgeModel = serde_json::from_value(doc["model"].take())?;
    model.validate()?;
    Ok(model)
}

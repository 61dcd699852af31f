use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

use super::{add_matvec, add_matvec_t, add_outer, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    RnnTanh,
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate blocks stacked in `W`, `U` and `b`: `[h]` for the plain RNN,
    /// `[a, i, f, o]` for the LSTM, `[z, r, candidate]` for the GRU.
    pub fn gates(self) -> usize {
        match self {
            CellKind::RnnTanh => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    /// The plain RNN update has no bias term.
    pub fn has_bias(self) -> bool {
        self != CellKind::RnnTanh
    }

    /// Length of the flattened state: `h`, plus `c` for the LSTM.
    pub fn state_width(self, hidden_dim: usize) -> usize {
        if self == CellKind::Lstm {
            2 * hidden_dim
        } else {
            hidden_dim
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    /// LSTM only.
    pub c: Option<Vec<f64>>,
}

impl RecurrentState {
    pub fn zeros(kind: CellKind, hidden_dim: usize) -> Self {
        RecurrentState {
            h: vec![0.0; hidden_dim],
            c: (kind == CellKind::Lstm).then(|| vec![0.0; hidden_dim]),
        }
    }

    /// `h` followed by `c` when present.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.h.clone();
        if let Some(c) = &self.c {
            v.extend_from_slice(c);
        }
        v
    }

    pub fn from_flat(kind: CellKind, hidden_dim: usize, v: &[f64]) -> Self {
        debug_assert_eq!(v.len(), kind.state_width(hidden_dim));
        RecurrentState {
            h: v[..hidden_dim].to_vec(),
            c: (kind == CellKind::Lstm).then(|| v[hidden_dim..].to_vec()),
        }
    }
}

/// Weights of one recurrent cell. `w` is `(gates * hidden) x input`, `u` is
/// `(gates * hidden) x hidden`, both row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

/// What backpropagation needs from one forward step.
#[derive(Clone, Debug)]
pub(crate) struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    // activated gates, same layout as the stacked pre-activations
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    // r * h_prev (GRU)
    rh: Vec<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let rows = kind.gates() * hidden_dim;
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            w: vec![0.0; rows * input_dim],
            u: vec![0.0; rows * hidden_dim],
            b: vec![0.0; if kind.has_bias() { rows } else { 0 }],
        }
    }

    /// Uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`.
    pub fn random<R: Rng>(
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        let a = 1.0 / (hidden_dim as f64).sqrt();
        for v in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
            *v = rng.random_range(-a..=a);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.kind.gates() * self.hidden_dim;
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::param(
                "cell",
                "input and hidden dims must be positive",
            ));
        }
        check_len(rows * self.input_dim, self.w.len())?;
        check_len(rows * self.hidden_dim, self.u.len())?;
        check_len(if self.kind.has_bias() { rows } else { 0 }, self.b.len())?;
        if !self
            .tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
        {
            return Err(Error::param("cell", "weights must be finite"));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }

    fn check_step(&self, x: &[f64], state: &RecurrentState) -> Result<()> {
        check_len(self.input_dim, x.len())?;
        check_len(self.hidden_dim, state.h.len())?;
        match (&state.c, self.kind) {
            (Some(c), CellKind::Lstm) => check_len(self.hidden_dim, c.len()),
            (None, CellKind::Lstm) => Err(Error::param("state", "LSTM state needs a cell vector")),
            (Some(_), _) => Err(Error::param(
                "state",
                "only LSTM states carry a cell vector",
            )),
            (None, _) => Ok(()),
        }
    }

    /// One checked step of whichever kind this cell is.
    pub fn step(&self, x: &[f64], state: &RecurrentState) -> Result<RecurrentState> {
        self.check_step(x, state)?;
        Ok(self.step_cached(x, state).0)
    }

    pub(crate) fn step_cached(
        &self,
        x: &[f64],
        state: &RecurrentState,
    ) -> (RecurrentState, StepCache) {
        let h = self.hidden_dim;
        let rows = self.kind.gates() * h;
        let mut pre = if self.kind.has_bias() {
            self.b.clone()
        } else {
            vec![0.0; rows]
        };
        add_matvec(&mut pre, &self.w, self.input_dim, x);
        let h_prev = state.h.clone();
        let c_prev = state.c.clone().unwrap_or_default();
        let mut cache = StepCache {
            x: x.to_vec(),
            h_prev,
            c_prev,
            gates: Vec::new(),
            tanh_c: Vec::new(),
            rh: Vec::new(),
        };

        let next = match self.kind {
            CellKind::RnnTanh => {
                add_matvec(&mut pre, &self.u, h, &cache.h_prev);
                let hn: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
                cache.gates = hn.clone();
                RecurrentState { h: hn, c: None }
            }
            CellKind::Lstm => {
                add_matvec(&mut pre, &self.u, h, &cache.h_prev);
                let mut gates = pre;
                for (k, g) in gates.iter_mut().enumerate() {
                    *g = if k < h { g.tanh() } else { sigmoid(*g) };
                }
                let (a, rest) = gates.split_at(h);
                let (i, rest) = rest.split_at(h);
                let (f, o) = rest.split_at(h);
                let c: Vec<f64> = (0..h)
                    .map(|k| i[k] * a[k] + f[k] * cache.c_prev[k])
                    .collect();
                let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let hn = (0..h).map(|k| o[k] * tanh_c[k]).collect();
                cache.tanh_c = tanh_c;
                cache.gates = gates;
                RecurrentState { h: hn, c: Some(c) }
            }
            CellKind::Gru => {
                add_matvec(&mut pre[..2 * h], &self.u[..2 * h * h], h, &cache.h_prev);
                for g in &mut pre[..2 * h] {
                    *g = sigmoid(*g);
                }
                let rh: Vec<f64> = (0..h).map(|k| pre[h + k] * cache.h_prev[k]).collect();
                add_matvec(&mut pre[2 * h..], &self.u[2 * h * h..], h, &rh);
                for g in &mut pre[2 * h..] {
                    *g = g.tanh();
                }
                let hn = (0..h)
                    .map(|k| {
                        let z = pre[k];
                        (1.0 - z) * cache.h_prev[k] + z * pre[2 * h + k]
                    })
                    .collect();
                cache.rh = rh;
                cache.gates = pre;
                RecurrentState { h: hn, c: None }
            }
        };
        (next, cache)
    }

    /// Backpropagates one step. `dh` (and `dc` for the LSTM) are gradients
    /// w.r.t. the step's output state; weight gradients accumulate into
    /// `grad`. Returns `(dx, dh_prev, dc_prev)`.
    pub(crate) fn backward_step(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: Option<&[f64]>,
        grad: &mut CellParams,
    ) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
        let h = self.hidden_dim;
        let rows = self.kind.gates() * h;
        let mut dpre = vec![0.0; rows];
        let mut dh_prev = vec![0.0; h];
        let mut dc_prev = None;

        match self.kind {
            CellKind::RnnTanh => {
                for k in 0..h {
                    let hn = cache.gates[k];
                    dpre[k] = dh[k] * (1.0 - hn * hn);
                }
                add_outer(&mut grad.u, &dpre, &cache.h_prev);
                add_matvec_t(&mut dh_prev, &self.u, h, &dpre);
            }
            CellKind::Lstm => {
                let g = &cache.gates;
                let mut dcp = vec![0.0; h];
                for k in 0..h {
                    let (a, i, f, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let tc = cache.tanh_c[k];
                    let dct = dc.map_or(0.0, |d| d[k]) + dh[k] * o * (1.0 - tc * tc);
                    dpre[k] = dct * i * (1.0 - a * a);
                    dpre[h + k] = dct * a * i * (1.0 - i);
                    dpre[2 * h + k] = dct * cache.c_prev[k] * f * (1.0 - f);
                    dpre[3 * h + k] = dh[k] * tc * o * (1.0 - o);
                    dcp[k] = dct * f;
                }
                add_outer(&mut grad.u, &dpre, &cache.h_prev);
                add_matvec_t(&mut dh_prev, &self.u, h, &dpre);
                dc_prev = Some(dcp);
            }
            CellKind::Gru => {
                let g = &cache.gates;
                // candidate block first: it feeds the reset gate
                for k in 0..h {
                    let (z, cand) = (g[k], g[2 * h + k]);
                    dpre[2 * h + k] = dh[k] * z * (1.0 - cand * cand);
                    dpre[k] = dh[k] * (cand - cache.h_prev[k]) * z * (1.0 - z);
                    dh_prev[k] = dh[k] * (1.0 - z);
                }
                add_outer(&mut grad.u[2 * h * h..], &dpre[2 * h..], &cache.rh);
                let mut drh = vec![0.0; h];
                add_matvec_t(&mut drh, &self.u[2 * h * h..], h, &dpre[2 * h..]);
                for k in 0..h {
                    let r = g[h + k];
                    dpre[h + k] = drh[k] * cache.h_prev[k] * r * (1.0 - r);
                    dh_prev[k] += drh[k] * r;
                }
                add_outer(&mut grad.u[..2 * h * h], &dpre[..2 * h], &cache.h_prev);
                add_matvec_t(&mut dh_prev, &self.u[..2 * h * h], h, &dpre[..2 * h]);
            }
        }

        add_outer(&mut grad.w, &dpre, &cache.x);
        if self.kind.has_bias() {
            for (b, d) in grad.b.iter_mut().zip(&dpre) {
                *b += d;
            }
        }
        let mut dx = vec![0.0; self.input_dim];
        add_matvec_t(&mut dx, &self.w, self.input_dim, &dpre);
        (dx, dh_prev, dc_prev)
    }
}

fn expect_kind(params: &CellParams, kind: CellKind) -> Result<()> {
    if params.kind != kind {
        return Err(Error::param(
            "params",
            format!("expected a {kind:?} cell, got {:?}", params.kind),
        ));
    }
    Ok(())
}

/// Plain RNN step with an affine read-out: `h = tanh(W x + U h_prev)`,
/// `y = W_y h + b_y`.
pub fn rnn_step(
    params: &CellParams,
    head: &super::Linear,
    x: &[f64],
    h_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    expect_kind(params, CellKind::RnnTanh)?;
    let next = params.step(
        x,
        &RecurrentState {
            h: h_prev.to_vec(),
            c: None,
        },
    )?;
    let y = head.apply(&next.h)?;
    Ok((next.h, y))
}

pub fn lstm_step(params: &CellParams, x: &[f64], state: &RecurrentState) -> Result<RecurrentState> {
    expect_kind(params, CellKind::Lstm)?;
    params.step(x, state)
}

pub fn gru_step(params: &CellParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    expect_kind(params, CellKind::Gru)?;
    let state = RecurrentState {
        h: h_prev.to_vec(),
        c: None,
    };
    Ok(params.step(x, &state)?.h)
}

/// Left fold of the cell over `inputs` from the zero state. Returns the final
/// state and the state after every step.
pub fn encode(
    cell: &CellParams,
    inputs: &[Vec<f64>],
) -> Result<(RecurrentState, Vec<RecurrentState>)> {
    if inputs.is_empty() {
        return Err(Error::param("inputs", "cannot encode an empty sequence"));
    }
    let mut state = RecurrentState::zeros(cell.kind, cell.hidden_dim);
    let mut all = Vec::with_capacity(inputs.len());
    for x in inputs {
        state = cell.step(x, &state)?;
        all.push(state.clone());
    }
    Ok((state, all))
}

/// Runs `steps` decoder steps from `init` with a scalar input stream. Step 0
/// consumes `first_input`; later steps consume the teacher's previous value
/// when given, otherwise the previous step's own output.
pub fn decode(
    cell: &CellParams,
    head: &super::Linear,
    init: &RecurrentState,
    first_input: f64,
    steps: usize,
    teacher: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    if cell.input_dim != 1 || head.out_dim != 1 || head.in_dim != cell.hidden_dim {
        return Err(Error::param(
            "decoder",
            "needs scalar input and a hidden -> 1 head",
        ));
    }
    if let Some(t) = teacher {
        if t.len() + 1 < steps {
            return Err(Error::LengthMismatch {
                expected: steps - 1,
                actual: t.len(),
            });
        }
    }
    let mut state = init.clone();
    let mut out = Vec::with_capacity(steps);
    let mut input = first_input;
    for k in 0..steps {
        state = cell.step(&[input], &state)?;
        let y = head.apply(&state.h)?[0];
        out.push(y);
        input = teacher.map_or(y, |t| t.get(k).copied().unwrap_or(y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    // Plain nested-loop evaluation of W[rows of block g] x.
    fn block(m: &[f64], cols: usize, g: usize, h: usize, x: &[f64]) -> Vec<f64> {
        (0..h)
            .map(|r| (0..cols).map(|c| m[(g * h + r) * cols + c] * x[c]).sum())
            .collect()
    }

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    #[test]
    fn zero_rnn_gives_zero() {
        let p = CellParams::zeros(CellKind::RnnTanh, 2, 3);
        let head = Linear::zeros(3, 1);
        let (h, y) = rnn_step(&p, &head, &[4.0, -1.0], &[0.3, 0.2, 0.1]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn scalar_rnn_is_tanh() {
        let mut p = CellParams::zeros(CellKind::RnnTanh, 1, 1);
        p.w[0] = 1.0;
        let head = Linear::zeros(1, 1);
        let (h, _) = rnn_step(&p, &head, &[0.5], &[0.0]).unwrap();
        assert_eq!(h, vec![0.5f64.tanh()]);
    }

    #[test]
    fn rnn_matches_direct_formula() {
        let p = CellParams::random(CellKind::RnnTanh, 3, 4, &mut rng(1));
        let x = [0.2, -0.7, 1.1];
        let hp = [0.1, -0.2, 0.3, 0.05];
        let mut head = Linear::random(4, 2, &mut rng(2));
        head.b = vec![0.1, -0.3];
        let (h, y) = rnn_step(&p, &head, &x, &hp).unwrap();
        let wx = block(&p.w, 3, 0, 4, &x);
        let uh = block(&p.u, 4, 0, 4, &hp);
        for k in 0..4 {
            assert!((h[k] - (wx[k] + uh[k]).tanh()).abs() < 1e-12);
        }
        for (j, yj) in y.iter().enumerate() {
            let direct: f64 = (0..4).map(|k| head.w[j * 4 + k] * h[k]).sum::<f64>() + head.b[j];
            assert!((yj - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lstm_stays_zero() {
        let p = CellParams::zeros(CellKind::Lstm, 2, 3);
        let mut s = RecurrentState::zeros(CellKind::Lstm, 3);
        for x in [[1.0, 2.0], [-5.0, 0.3], [100.0, -100.0]] {
            s = lstm_step(&p, &x, &s).unwrap();
            assert_eq!(s.h, vec![0.0; 3]);
            assert_eq!(s.c, Some(vec![0.0; 3]));
        }
    }

    #[test]
    fn saturated_forget_gate_is_memory() {
        let mut p = CellParams::zeros(CellKind::Lstm, 1, 2);
        p.b[4..6].copy_from_slice(&[50.0, 50.0]);
        let s = RecurrentState {
            h: vec![0.0; 2],
            c: Some(vec![0.7, -1.3]),
        };
        let next = lstm_step(&p, &[3.0], &s).unwrap();
        let c = next.c.unwrap();
        assert!((c[0] - 0.7).abs() < 1e-12 && (c[1] + 1.3).abs() < 1e-12);
    }

    #[test]
    fn lstm_matches_direct_formula() {
        let p = CellParams::random(CellKind::Lstm, 3, 3, &mut rng(3));
        let x = [0.4, -0.1, 0.9];
        let s = RecurrentState {
            h: vec![0.2, -0.5, 0.1],
            c: Some(vec![0.3, 0.6, -0.4]),
        };
        let next = lstm_step(&p, &x, &s).unwrap();
        let gate = |g: usize| -> Vec<f64> {
            let wx = block(&p.w, 3, g, 3, &x);
            let uh = block(&p.u, 3, g, 3, &s.h);
            (0..3).map(|k| wx[k] + uh[k] + p.b[g * 3 + k]).collect()
        };
        let a: Vec<f64> = gate(0).iter().map(|v| v.tanh()).collect();
        let i: Vec<f64> = gate(1).into_iter().map(sig).collect();
        let f: Vec<f64> = gate(2).into_iter().map(sig).collect();
        let o: Vec<f64> = gate(3).into_iter().map(sig).collect();
        let c_prev = s.c.as_ref().unwrap();
        for k in 0..3 {
            let c = i[k] * a[k] + f[k] * c_prev[k];
            assert!((next.c.as_ref().unwrap()[k] - c).abs() < 1e-12);
            assert!((next.h[k] - o[k] * c.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gru_stays_zero() {
        let p = CellParams::zeros(CellKind::Gru, 1, 4);
        let mut h = vec![0.0; 4];
        for x in [1.0, -3.0, 8.0] {
            h = gru_step(&p, &[x], &h).unwrap();
        }
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut p = CellParams::random(CellKind::Gru, 1, 2, &mut rng(4));
        p.b[0..2].copy_from_slice(&[-50.0, -50.0]);
        let h = gru_step(&p, &[2.0], &[0.4, -0.9]).unwrap();
        assert!((h[0] - 0.4).abs() < 1e-12 && (h[1] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn gru_matches_direct_formula() {
        let p = CellParams::random(CellKind::Gru, 2, 3, &mut rng(5));
        let x = [0.3, -1.2];
        let hp = [0.5, -0.25, 0.1];
        let h = gru_step(&p, &x, &hp).unwrap();
        let pre = |g: usize, hin: &[f64]| -> Vec<f64> {
            let wx = block(&p.w, 2, g, 3, &x);
            let uh = block(&p.u, 3, g, 3, hin);
            (0..3).map(|k| wx[k] + uh[k] + p.b[g * 3 + k]).collect()
        };
        let z: Vec<f64> = pre(0, &hp).into_iter().map(sig).collect();
        let r: Vec<f64> = pre(1, &hp).into_iter().map(sig).collect();
        let rh: Vec<f64> = (0..3).map(|k| r[k] * hp[k]).collect();
        let cand: Vec<f64> = pre(2, &rh).iter().map(|v| v.tanh()).collect();
        for k in 0..3 {
            let direct = (1.0 - z[k]) * hp[k] + z[k] * cand[k];
            assert!((h[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        let p = CellParams::zeros(CellKind::Gru, 2, 3);
        assert!(gru_step(&p, &[1.0], &[0.0; 3]).is_err());
        assert!(gru_step(&p, &[1.0, 2.0], &[0.0; 2]).is_err());
        assert!(lstm_step(&p, &[1.0, 2.0], &RecurrentState::zeros(CellKind::Lstm, 3)).is_err());
    }

    #[test]
    fn steps_are_pure() {
        let p = CellParams::random(CellKind::Lstm, 1, 5, &mut rng(6));
        let s = RecurrentState::zeros(CellKind::Lstm, 5);
        let a = p.step(&[0.3], &s).unwrap();
        let b = p.step(&[0.3], &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encode_is_a_fold() {
        let p = CellParams::random(CellKind::Gru, 1, 3, &mut rng(7));
        let xs: Vec<Vec<f64>> = [0.1, 0.5, -0.3, 0.8].iter().map(|&v| vec![v]).collect();
        let (last, all) = encode(&p, &xs).unwrap();
        let mut s = RecurrentState::zeros(CellKind::Gru, 3);
        for (x, got) in xs.iter().zip(&all) {
            s = p.step(x, &s).unwrap();
            assert_eq!(&s, got);
        }
        assert_eq!(s, last);
        let (one, _) = encode(&p, &xs[..1]).unwrap();
        assert_eq!(
            one,
            p.step(&xs[0], &RecurrentState::zeros(CellKind::Gru, 3))
                .unwrap()
        );
        assert!(encode(&p, &[]).is_err());
        let (zero, _) = encode(&CellParams::zeros(CellKind::Gru, 1, 3), &xs).unwrap();
        assert_eq!(zero.h, vec![0.0; 3]);
    }

    #[test]
    fn decode_shapes_and_feeding() {
        let cell = CellParams::random(CellKind::Gru, 1, 3, &mut rng(8));
        let head = Linear::random(3, 1, &mut rng(9));
        let init = RecurrentState::zeros(CellKind::Gru, 3);
        let one = decode(&cell, &head, &init, 0.2, 1, None).unwrap();
        let s = cell.step(&[0.2], &init).unwrap();
        assert_eq!(one, head.apply(&s.h).unwrap());

        let free = decode(&cell, &head, &init, 0.2, 4, None).unwrap();
        // teacher equal to the free-running outputs reproduces them
        let forced = decode(&cell, &head, &init, 0.2, 4, Some(&free)).unwrap();
        assert_eq!(free, forced);
        assert_eq!(
            decode(
                &CellParams::zeros(CellKind::Gru, 1, 3),
                &Linear::zeros(3, 1),
                &init,
                5.0,
                3,
                None
            )
            .unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn lstm_cell_stays_bounded() {
        let p = CellParams::random(CellKind::Lstm, 1, 4, &mut rng(10));
        let mut s = RecurrentState::zeros(CellKind::Lstm, 4);
        for t in 0..50 {
            let (next, cache) = p.step_cached(&[(t as f64 * 0.7).sin() * 5.0], &s);
            assert!(cache.gates[4..].iter().all(|&g| g > 0.0 && g < 1.0));
            let (c0, c1) = (s.c.as_ref().unwrap(), next.c.as_ref().unwrap());
            assert!(c0.iter().zip(c1).all(|(a, b)| b.abs() <= a.abs() + 1.0));
            s = next;
        }
    }
}

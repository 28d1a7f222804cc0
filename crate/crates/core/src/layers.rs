//! Recurrent, attention and lookup layers built on the tape.
//!
//! Parameters live in a [`ParamStore`]; each layer's `bind` copies them onto
//! a tape once per forward pass so every step of a sequence shares the same
//! leaf nodes.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_ii: ParamId,
    pub w_if: ParamId,
    pub w_ig: ParamId,
    pub w_io: ParamId,
    pub w_hi: ParamId,
    pub w_hf: ParamId,
    pub w_hg: ParamId,
    pub w_ho: ParamId,
    pub b_i: ParamId,
    pub b_f: ParamId,
    pub b_g: ParamId,
    pub b_o: ParamId,
}

/// [`LstmParams`] resolved onto one tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_i: [Var; 4],
    w_h: [Var; 4],
    b: [Var; 4],
}

impl LstmParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let input = |gate: &str, store: &mut ParamStore, rng: &mut R| {
            store.add_glorot(format!("{prefix}.w_i{gate}"), hidden_dim, input_dim, rng)
        };
        let w_ii = input("i", store, rng)?;
        let w_if = input("f", store, rng)?;
        let w_ig = input("g", store, rng)?;
        let w_io = input("o", store, rng)?;
        let hidden = |gate: &str, store: &mut ParamStore, rng: &mut R| {
            store.add_glorot(format!("{prefix}.w_h{gate}"), hidden_dim, hidden_dim, rng)
        };
        let w_hi = hidden("i", store, rng)?;
        let w_hf = hidden("f", store, rng)?;
        let w_hg = hidden("g", store, rng)?;
        let w_ho = hidden("o", store, rng)?;
        let b_i = store.add_zeros(format!("{prefix}.b_i"), vec![hidden_dim])?;
        let b_f = store.add_zeros(format!("{prefix}.b_f"), vec![hidden_dim])?;
        let b_g = store.add_zeros(format!("{prefix}.b_g"), vec![hidden_dim])?;
        let b_o = store.add_zeros(format!("{prefix}.b_o"), vec![hidden_dim])?;
        Ok(LstmParams {
            input_dim,
            hidden_dim,
            w_ii,
            w_if,
            w_ig,
            w_io,
            w_hi,
            w_hf,
            w_hg,
            w_ho,
            b_i,
            b_f,
            b_g,
            b_o,
        })
    }

    /// Looks up the parameters registered under `prefix`.
    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |suffix: &str| {
            let name = format!("{prefix}.{suffix}");
            store
                .id(&name)
                .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{name}`")))
        };
        let w_ii = get("w_ii")?;
        let shape = store.get(w_ii).tensor.shape().to_vec();
        Ok(LstmParams {
            hidden_dim: shape[0],
            input_dim: shape[1],
            w_ii,
            w_if: get("w_if")?,
            w_ig: get("w_ig")?,
            w_io: get("w_io")?,
            w_hi: get("w_hi")?,
            w_hf: get("w_hf")?,
            w_hg: get("w_hg")?,
            w_ho: get("w_ho")?,
            b_i: get("b_i")?,
            b_f: get("b_f")?,
            b_g: get("b_g")?,
            b_o: get("b_o")?,
        })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundLstm {
        let mut p = |id| tape.param(store, id);
        BoundLstm {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            w_i: [p(self.w_ii), p(self.w_if), p(self.w_ig), p(self.w_io)],
            w_h: [p(self.w_hi), p(self.w_hf), p(self.w_hg), p(self.w_ho)],
            b: [p(self.b_i), p(self.b_f), p(self.b_g), p(self.b_o)],
        }
    }
}

/// One LSTM step without peepholes. Gate order is input, forget, cell, output.
pub fn lstm_step(
    tape: &mut Tape,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &BoundLstm,
) -> Result<(Var, Var)> {
    let x_len = tape.value(x).len();
    if x_len != p.input_dim {
        return Err(Error::shape("lstm_step", &[x_len], &[p.input_dim]));
    }
    for v in [h_prev, c_prev] {
        let len = tape.value(v).len();
        if len != p.hidden_dim {
            return Err(Error::shape("lstm_step", &[len], &[p.hidden_dim]));
        }
    }
    let mut pre = [x; 4];
    for (gate, slot) in pre.iter_mut().enumerate() {
        let wx = tape.matmul(p.w_i[gate], x)?;
        let wh = tape.matmul(p.w_h[gate], h_prev)?;
        let s = tape.add(wx, wh)?;
        *slot = tape.add(s, p.b[gate])?;
    }
    let i = tape.sigmoid(pre[0])?;
    let f = tape.sigmoid(pre[1])?;
    let g = tape.tanh(pre[2])?;
    let o = tape.sigmoid(pre[3])?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Per-direction hidden states of a bidirectional pass.
#[derive(Debug, Clone)]
pub struct BiLstmStates {
    /// `[forward_t ; backward_t]` for each position.
    pub outputs: Vec<Var>,
    pub forward: Vec<Var>,
    /// Indexed by position, so `backward[0]` is the last state computed.
    pub backward: Vec<Var>,
}

fn run_direction<I: Iterator<Item = Var>>(
    tape: &mut Tape,
    seq: I,
    p: &BoundLstm,
) -> Result<Vec<Var>> {
    let zeros = vec![0.0; p.hidden_dim];
    let mut h = tape.vector(zeros.clone())?;
    let mut c = tape.vector(zeros)?;
    let mut out = Vec::new();
    for x in seq {
        (h, c) = lstm_step(tape, x, h, c, p)?;
        out.push(h);
    }
    Ok(out)
}

pub fn bilstm_states(
    tape: &mut Tape,
    seq: &[Var],
    fwd: &BoundLstm,
    bwd: &BoundLstm,
) -> Result<BiLstmStates> {
    if seq.is_empty() {
        return Err(Error::Empty("bilstm"));
    }
    if fwd.hidden_dim != bwd.hidden_dim {
        return Err(Error::shape("bilstm", &[fwd.hidden_dim], &[bwd.hidden_dim]));
    }
    let forward = run_direction(tape, seq.iter().copied(), fwd)?;
    let mut backward = run_direction(tape, seq.iter().rev().copied(), bwd)?;
    backward.reverse();
    let outputs = forward
        .iter()
        .zip(&backward)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    Ok(BiLstmStates {
        outputs,
        forward,
        backward,
    })
}

/// Bidirectional LSTM with zero initial states; element `t` is
/// `[forward_t ; backward_t]`.
pub fn bilstm(tape: &mut Tape, seq: &[Var], fwd: &BoundLstm, bwd: &BoundLstm) -> Result<Vec<Var>> {
    Ok(bilstm_states(tape, seq, fwd, bwd)?.outputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w: ParamId,
    pub v: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundAttention {
    w: Var,
    v: Var,
}

impl AttentionParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        state_dim: usize,
        att_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add_glorot(format!("{prefix}.w"), att_dim, state_dim, rng)?;
        let v = store.add_glorot_vector(format!("{prefix}.v"), att_dim, rng)?;
        Ok(AttentionParams { w, v })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |suffix: &str| {
            let name = format!("{prefix}.{suffix}");
            store
                .id(&name)
                .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{name}`")))
        };
        Ok(AttentionParams {
            w: get("w")?,
            v: get("v")?,
        })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundAttention {
        BoundAttention {
            w: tape.param(store, self.w),
            v: tape.param(store, self.v),
        }
    }
}

/// `u_t = tanh(W h_t)`, `a = softmax(v · u)`, `pooled = Σ a_t h_t`.
pub fn attention_pool(tape: &mut Tape, states: &[Var], p: &BoundAttention) -> Result<(Var, Var)> {
    if states.is_empty() {
        return Err(Error::Empty("attention_pool"));
    }
    let stacked = tape.stack_rows(states)?;
    let columns = tape.transpose(stacked)?;
    let projected = tape.matmul(p.w, columns)?;
    let u = tape.tanh(projected)?;
    let scores = tape.matmul(p.v, u)?;
    let weights = tape.softmax(scores)?;
    let pooled = tape.matmul(columns, weights)?;
    Ok((pooled, weights))
}

/// `W x (+ bias)`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
    let wx = tape.matmul(w, x)?;
    match bias {
        Some(b) => tape.add(wx, b),
        None => Ok(wx),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub rate: f64,
    pub seed: u64,
}

impl DropoutSpec {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(
                "dropout_rate",
                format!("{rate} is not in [0, 1)"),
            ));
        }
        Ok(DropoutSpec { rate, seed })
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Identity in eval mode or when `rate == 0`; otherwise multiplies by a fresh
/// mask drawn from `rng`.
pub fn dropout<R: Rng>(
    tape: &mut Tape,
    x: Var,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if !training || rate == 0.0 {
        return Ok(x);
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(
            "dropout_rate",
            format!("{rate} is not in [0, 1)"),
        ));
    }
    let shape = tape.value(x).shape().to_vec();
    let mask = dropout_mask(tape.value(x).len(), rate, rng);
    let m = tape.input(Tensor::new(shape, mask)?);
    tape.mul(x, m)
}

/// Token-to-row lookup over a `[vocab, dim]` parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub matrix: ParamId,
    pub dim: usize,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, matrix: ParamId, dim: usize, trainable: bool) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary entry `{t}`"
                )));
            }
        }
        Ok(EmbeddingTable {
            tokens,
            index,
            matrix,
            dim,
            trainable,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Places row `row` on the tape; trainable tables route the gradient
    /// back into the matrix, frozen ones record a plain input.
    pub fn lookup_row(&self, tape: &mut Tape, store: &ParamStore, row: usize) -> Result<Var> {
        if self.trainable {
            tape.param_row(store, self.matrix, row)
        } else {
            let t = &store.get(self.matrix).tensor;
            let values = t
                .values()
                .get(row * self.dim..(row + 1) * self.dim)
                .ok_or_else(|| Error::InvalidInput(format!("row {row} out of range")))?
                .to_vec();
            tape.vector(values)
        }
    }

    pub fn lookup(&self, tape: &mut Tape, store: &ParamStore, token: &str) -> Result<Var> {
        let row = self
            .row(token)
            .ok_or_else(|| Error::InvalidInput(format!("token `{token}` not in vocabulary")))?;
        self.lookup_row(tape, store, row)
    }
}

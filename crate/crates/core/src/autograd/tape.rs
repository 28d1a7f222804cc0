//! Wengert-list tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output tensor and enough
//! information to compute the vector-Jacobian product on the way back.
//! Nodes only ever reference earlier nodes, so the node vector is already in
//! topological order and the backward sweep is a single reverse scan.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    ParamRow(ParamId, usize),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Concat {
        inputs: Vec<Var>,
        widths: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    Softmax(Var),
    Transpose {
        a: Var,
        rows: usize,
        cols: usize,
    },
    StackRows(Vec<Var>),
    Reshape(Var),
    Pick(Var, usize),
    Slice {
        a: Var,
        offset: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Operations reachable through [`Tape::pointwise`] by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointwiseOp {
    Tanh,
    Sigmoid,
    Add,
    Mul,
    Scale(f64),
    ConcatLastAxis,
    Sum,
    Mean,
}

impl FromStr for PointwiseOp {
    type Err = Error;

    /// Parses an op name; `scale` takes its factor as `scale:<f64>`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tanh" => PointwiseOp::Tanh,
            "sigmoid" => PointwiseOp::Sigmoid,
            "add" => PointwiseOp::Add,
            "mul" => PointwiseOp::Mul,
            "concat_last_axis" => PointwiseOp::ConcatLastAxis,
            "sum" => PointwiseOp::Sum,
            "mean" => PointwiseOp::Mean,
            other => match other.strip_prefix("scale:").map(str::parse::<f64>) {
                Some(Ok(f)) => PointwiseOp::Scale(f),
                _ => return Err(Error::UnsupportedOp(other.to_string())),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardStats {
    /// Nodes whose local gradient was propagated.
    pub nodes_visited: usize,
}

#[derive(Debug)]
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value: value.with_grad(),
            op,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn check(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::NotOnTape(v.index));
        }
        Ok(&self.nodes[v.index].value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    pub fn values(&self, v: Var) -> &[f64] {
        self.nodes[v.index].value.values()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.index].value.values()[0]
    }

    /// Accumulated gradient of the last backward sweep(s) for `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.index)?.value.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.grad = None;
        }
    }

    // ---- leaves -------------------------------------------------------

    pub fn input(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Input)
    }

    pub fn vector(&mut self, values: Vec<f64>) -> Result<Var> {
        Ok(self.input(Tensor::vector(values)?))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).tensor.clone();
        self.push(
            Tensor::new(value.shape().to_vec(), value.into_values()).expect("valid parameter"),
            Op::Param(id),
        )
    }

    /// Leaf holding one row of a matrix parameter; its gradient flows back to
    /// that row only.
    pub fn param_row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Result<Var> {
        let t = &store.get(id).tensor;
        if t.rank() != 2 || row >= t.shape()[0] {
            return Err(Error::InvalidInput(format!(
                "row {row} out of range for parameter `{}` of shape {:?}",
                store.get(id).name,
                t.shape()
            )));
        }
        let w = t.shape()[1];
        let values = t.values()[row * w..(row + 1) * w].to_vec();
        Ok(self.push(Tensor::vector(values)?, Op::ParamRow(id, row)))
    }

    /// Gradients recorded for parameter leaves: `(param, row, grad)`.
    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (ParamId, Option<usize>, &[f64])> {
        self.nodes.iter().filter_map(|n| {
            let g = n.value.grad.as_deref()?;
            match n.op {
                Op::Param(id) => Some((id, None, g)),
                Op::ParamRow(id, row) => Some((id, Some(row), g)),
                _ => None,
            }
        })
    }

    // ---- linear algebra ----------------------------------------------

    /// Matrix product. Rank-1 operands act as a row vector on the left or a
    /// column vector on the right; the unit axis is dropped from the result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (ta.shape(), tb.shape());
        let (m, k, out_rows) = match sa.len() {
            1 => (1, sa[0], None),
            2 => (sa[0], sa[1], Some(sa[0])),
            _ => return Err(Error::shape("matmul", sa, sb)),
        };
        let (k2, n, out_cols) = match sb.len() {
            1 => (sb[0], 1, None),
            2 => (sb[0], sb[1], Some(sb[1])),
            _ => return Err(Error::shape("matmul", sa, sb)),
        };
        if k != k2 {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (av, bv) = (ta.values(), tb.values());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, bpj) in row.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        let shape = match (out_rows, out_cols) {
            (Some(r), Some(c)) => vec![r, c],
            (Some(r), None) => vec![r],
            (None, Some(c)) => vec![c],
            (None, None) => vec![1],
        };
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, m, k, n }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.check(a)?;
        if t.rank() != 2 {
            return Err(Error::shape("transpose", t.shape(), &[]));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let v = t.values();
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = v[i * cols + j];
            }
        }
        Ok(self.push(
            Tensor::matrix(cols, rows, out)?,
            Op::Transpose { a, rows, cols },
        ))
    }

    /// Stacks equally sized vectors into a `[n, d]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or(Error::Empty("stack_rows"))?;
        let d = self.check(*first)?.len();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.check(r)?;
            if t.rank() != 1 || t.len() != d {
                return Err(Error::shape("stack_rows", &[d], t.shape()));
            }
            out.extend_from_slice(t.values());
        }
        Ok(self.push(
            Tensor::matrix(rows.len(), d, out)?,
            Op::StackRows(rows.to_vec()),
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.check(a)?;
        let values = t.values().to_vec();
        let from = t.shape().to_vec();
        let out = Tensor::new(shape, values).map_err(|_| Error::shape("reshape", &from, &[]))?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    // ---- elementwise -------------------------------------------------

    /// Elementwise sum; a rank-1 `b` matching the last axis of `a` is added
    /// as a bias to every row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.shape() == tb.shape() {
            let out: Vec<f64> = ta
                .values()
                .iter()
                .zip(tb.values())
                .map(|(x, y)| x + y)
                .collect();
            let shape = ta.shape().to_vec();
            return Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b)));
        }
        if tb.rank() == 1 && ta.rank() > 1 && ta.last_dim() == tb.len() {
            let w = tb.len();
            let bv = tb.values();
            let out: Vec<f64> = ta
                .values()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bv[i % w])
                .collect();
            let shape = ta.shape().to_vec();
            return Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(a, b)));
        }
        Err(Error::shape("add", ta.shape(), tb.shape()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.shape() != tb.shape() {
            return Err(Error::shape("sub", ta.shape(), tb.shape()));
        }
        let out: Vec<f64> = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| x - y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", ta.shape(), tb.shape()));
        }
        let out: Vec<f64> = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| x * y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b)))
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ta, ts) = (self.check(a)?, self.check(s)?);
        if !ts.is_scalar() {
            return Err(Error::shape("mul_scalar", ta.shape(), ts.shape()));
        }
        let k = ts.values()[0];
        let out: Vec<f64> = ta.values().iter().map(|x| x * k).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::MulScalar(a, s)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = self.check(a)?;
        let out: Vec<f64> = t.values().iter().map(|x| x * factor).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Scale(a, factor)))
    }

    /// `a + c` elementwise for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.check(a)?;
        let out: Vec<f64> = t.values().iter().map(|x| x + c).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Shift(a)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.check(a)?;
        let out: Vec<f64> = t.values().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, op))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Natural log; defined for strictly positive inputs only.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self
            .check(a)?
            .values()
            .iter()
            .any(|&x| x <= 0.0 || x.is_nan())
        {
            return Err(Error::NumericFailure("log of a non-positive value".into()));
        }
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is passed through inside the
    /// interval and zero outside it.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    // ---- structural / reductions ------------------------------------

    /// Concatenates along the last axis; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or(Error::Empty("concat"))?;
        let lead: Vec<usize> = {
            let s = self.check(first)?.shape();
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.check(v)?.shape();
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", &lead, s));
            }
            widths.push(s[s.len() - 1]);
        }
        let outer: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for r in 0..outer {
            for (&v, &w) in inputs.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[v.index].value.values()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                widths,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.check(a)?.values().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(a)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.check(a)?;
        let s = t.values().iter().sum::<f64>() / t.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean(a)))
    }

    /// Softmax over a vector, computed after subtracting the maximum.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.check(a)?;
        if t.rank() != 1 {
            return Err(Error::shape("softmax", t.shape(), &[]));
        }
        let max = t.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = t.values().iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let out = exps.into_iter().map(|e| e / z).collect();
        Ok(self.push(Tensor::vector(out)?, Op::Softmax(a)))
    }

    /// Element `index` of a vector as a `[1]` tensor.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.check(a)?;
        let v = *t.values().get(index).ok_or_else(|| {
            Error::InvalidInput(format!("index {index} out of range for length {}", t.len()))
        })?;
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, index)))
    }

    pub fn slice(&mut self, a: Var, offset: usize, len: usize) -> Result<Var> {
        let t = self.check(a)?;
        if t.rank() != 1 || offset + len > t.len() || len == 0 {
            return Err(Error::shape("slice", t.shape(), &[offset, len]));
        }
        let out = t.values()[offset..offset + len].to_vec();
        Ok(self.push(Tensor::vector(out)?, Op::Slice { a, offset }))
    }

    /// Dispatches one of the named elementwise/reduction operations.
    pub fn pointwise(&mut self, op: PointwiseOp, inputs: &[Var]) -> Result<Var> {
        let unary = |inputs: &[Var]| -> Result<Var> {
            match inputs {
                [x] => Ok(*x),
                _ => Err(Error::InvalidInput(format!(
                    "{op:?} takes one input, got {}",
                    inputs.len()
                ))),
            }
        };
        let binary = |inputs: &[Var]| -> Result<(Var, Var)> {
            match inputs {
                [x, y] => Ok((*x, *y)),
                _ => Err(Error::InvalidInput(format!(
                    "{op:?} takes two inputs, got {}",
                    inputs.len()
                ))),
            }
        };
        match op {
            PointwiseOp::Tanh => self.tanh(unary(inputs)?),
            PointwiseOp::Sigmoid => self.sigmoid(unary(inputs)?),
            PointwiseOp::Sum => self.sum(unary(inputs)?),
            PointwiseOp::Mean => self.mean(unary(inputs)?),
            PointwiseOp::Scale(f) => self.scale(unary(inputs)?, f),
            PointwiseOp::Add => {
                let (x, y) = binary(inputs)?;
                self.add(x, y)
            }
            PointwiseOp::Mul => {
                let (x, y) = binary(inputs)?;
                self.mul(x, y)
            }
            PointwiseOp::ConcatLastAxis => self.concat(inputs),
        }
    }

    // ---- backward ----------------------------------------------------

    /// Propagates d(loss)/d(node) to every node reachable from `loss` and
    /// adds the result into each node's `grad` buffer. Repeated calls
    /// accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardStats> {
        let t = self.check(loss)?;
        if !t.is_scalar() {
            return Err(Error::NonScalarLoss(t.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.index + 1];
        adj[loss.index] = Some(vec![1.0]);
        let mut visited = 0;

        for i in (0..=loss.index).rev() {
            let Some(g) = adj[i].take() else { continue };
            visited += 1;
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }

        for (node, a) in self.nodes.iter_mut().zip(adj) {
            if let Some(a) = a {
                node.value.accumulate_grad(&a);
            }
        }
        Ok(BackwardStats {
            nodes_visited: visited,
        })
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.values();
        let val = |v: Var| self.nodes[v.index].value.values();

        fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            adj[v.index].get_or_insert_with(|| vec![0.0; len])
        }
        let mut add_elementwise = |v: Var, f: &dyn Fn(usize) -> f64| {
            let s = slot(adj, v, g.len());
            for (j, x) in s.iter_mut().enumerate() {
                *x += f(j);
            }
        };

        match &node.op {
            Op::Input | Op::Param(_) | Op::ParamRow(..) => {}
            &Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (val(a), val(b));
                {
                    // dA = dC · Bᵀ
                    let da = slot(adj, a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * bv[p * n + j];
                            }
                            da[i * k + p] += acc;
                        }
                    }
                }
                // dB = Aᵀ · dC
                let db = slot(adj, b, k * n);
                for i in 0..m {
                    for p in 0..k {
                        let aip = av[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                add_elementwise(a, &|j| g[j]);
                add_elementwise(b, &|j| g[j]);
            }
            &Op::AddBias(a, b) => {
                add_elementwise(a, &|j| g[j]);
                let w = self.nodes[b.index].value.len();
                let db = slot(adj, b, w);
                for (j, gj) in g.iter().enumerate() {
                    db[j % w] += gj;
                }
            }
            &Op::Sub(a, b) => {
                add_elementwise(a, &|j| g[j]);
                add_elementwise(b, &|j| -g[j]);
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                add_elementwise(a, &|j| g[j] * bv[j]);
                add_elementwise(b, &|j| g[j] * av[j]);
            }
            &Op::MulScalar(a, s) => {
                let (av, k) = (val(a), val(s)[0]);
                add_elementwise(a, &|j| g[j] * k);
                let ds: f64 = g.iter().zip(av).map(|(g, x)| g * x).sum();
                slot(adj, s, 1)[0] += ds;
            }
            &Op::Scale(a, f) => add_elementwise(a, &|j| g[j] * f),
            &Op::Shift(a) => add_elementwise(a, &|j| g[j]),
            &Op::Tanh(a) => add_elementwise(a, &|j| g[j] * (1.0 - out[j] * out[j])),
            &Op::Sigmoid(a) => add_elementwise(a, &|j| g[j] * out[j] * (1.0 - out[j])),
            &Op::Log(a) => {
                let av = val(a);
                add_elementwise(a, &|j| g[j] / av[j]);
            }
            &Op::Clamp(a, lo, hi) => {
                let av = val(a);
                add_elementwise(a, &|j| {
                    if av[j] >= lo && av[j] <= hi {
                        g[j]
                    } else {
                        0.0
                    }
                });
            }
            Op::Concat { inputs, widths } => {
                let total: usize = widths.iter().sum();
                let outer = g.len() / total;
                for r in 0..outer {
                    let mut offset = r * total;
                    for (&v, &w) in inputs.iter().zip(widths) {
                        let dv = slot(adj, v, outer * w);
                        for c in 0..w {
                            dv[r * w + c] += g[offset + c];
                        }
                        offset += w;
                    }
                }
            }
            &Op::Sum(a) => {
                let len = self.nodes[a.index].value.len();
                slot(adj, a, len).iter_mut().for_each(|x| *x += g[0]);
            }
            &Op::Mean(a) => {
                let len = self.nodes[a.index].value.len();
                let d = g[0] / len as f64;
                slot(adj, a, len).iter_mut().for_each(|x| *x += d);
            }
            &Op::Softmax(a) => {
                let dot: f64 = g.iter().zip(out).map(|(g, y)| g * y).sum();
                add_elementwise(a, &|j| out[j] * (g[j] - dot));
            }
            &Op::Transpose { a, rows, cols } => {
                let da = slot(adj, a, rows * cols);
                for i in 0..rows {
                    for j in 0..cols {
                        da[i * cols + j] += g[j * rows + i];
                    }
                }
            }
            Op::StackRows(rows) => {
                let d = g.len() / rows.len();
                for (r, &v) in rows.iter().enumerate() {
                    let dv = slot(adj, v, d);
                    for c in 0..d {
                        dv[c] += g[r * d + c];
                    }
                }
            }
            &Op::Reshape(a) => add_elementwise(a, &|j| g[j]),
            &Op::Pick(a, index) => {
                let len = self.nodes[a.index].value.len();
                slot(adj, a, len)[index] += g[0];
            }
            &Op::Slice { a, offset } => {
                let len = self.nodes[a.index].value.len();
                let da = slot(adj, a, len);
                for (j, gj) in g.iter().enumerate() {
                    da[offset + j] += gj;
                }
            }
        }
    }
}

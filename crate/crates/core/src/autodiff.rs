//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every primitive in execution order. [`Tape::backward`]
//! walks the records in exact reverse order and accumulates adjoints. Nodes
//! that do not depend on any parameter are skipped during the backward pass,
//! so frozen weights registered with [`Tape::constant`] cost nothing there.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower clamp for probabilities fed into logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    RowSoftmax(usize),
    RowLogSoftmax(usize),
    RowNormalize(usize, Vec<f64>),
    SumRows(usize),
    RowSums(usize),
    SumAll(usize),
    Mean(usize),
    ConcatRows(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    Pick(usize, Vec<usize>),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
    Dropout(usize, Vec<f64>),
    Bce(usize, Vec<f64>),
    CrossEntropy(usize, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records primitive operations for a single backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zeros when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, v) in out.iter_mut().zip(row) {
        *o = libm::exp(v - m);
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(row.iter().map(|v| libm::exp(v - m)).sum::<f64>());
    for (o, v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Row-wise softmax of a plain tensor.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        softmax_row(x.row(i), out.row_mut(i));
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("output of {name}")));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        if trainable {
            self.param(value)
        } else {
            self.constant(value)
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a.0, b.0), ng, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(v, Op::Transpose(a.0), ng, "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a.0, b.0), ng, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a.0, b.0), ng, "sub")
    }

    /// Adds the `1 × C` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_row", xv, bv));
        }
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for (o, bb) in out.row_mut(i).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        self.push(out, Op::AddRow(x.0, b.0), ng, "add_row")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a.0, b.0), ng, "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).scale(c);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a.0, c), ng, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let ng = self.ng(a);
        self.push(v, Op::Relu(a.0), ng, "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a.0), ng, "sigmoid")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(libm::exp);
        let ng = self.ng(a);
        self.push(v, Op::Exp(a.0), ng, "exp")
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let v = softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(v, Op::RowSoftmax(a.0), ng, "row_softmax")
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            log_softmax_row(x.row(i), v.row_mut(i));
        }
        let ng = self.ng(a);
        self.push(v, Op::RowLogSoftmax(a.0), ng, "row_log_softmax")
    }

    /// Standardizes every row to zero mean and unit variance:
    /// `(x - mean) / sqrt(var + eps)`.
    pub fn row_normalize(&mut self, a: Var, eps: f64) -> Result<Var> {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows(), x.cols());
        let mut inv = Vec::with_capacity(x.rows());
        let c = x.cols() as f64;
        for i in 0..x.rows() {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / c;
            let r = 1.0 / libm::sqrt(var + eps);
            for (o, u) in v.row_mut(i).iter_mut().zip(row) {
                *o = (u - mean) * r;
            }
            inv.push(r);
        }
        let ng = self.ng(a);
        self.push(v, Op::RowNormalize(a.0, inv), ng, "row_normalize")
    }

    /// Column sums: `N × C -> 1 × C`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).sum_rows();
        let ng = self.ng(a);
        self.push(v, Op::SumRows(a.0), ng, "sum_rows")
    }

    /// Per-row sums: `N × C -> N × 1`.
    pub fn row_sums(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let v = Tensor::from_fn(x.rows(), 1, |i, _| x.row(i).iter().sum());
        let ng = self.ng(a);
        self.push(v, Op::RowSums(a.0), ng, "row_sums")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::SumAll(a.0), ng, "sum")
    }

    /// Mean over every entry, as a `1 × 1` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Shape {
                op: "mean",
                lhs: x.shape(),
                rhs: (1, 1),
            });
        }
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        let ng = self.ng(a);
        self.push(v, Op::Mean(a.0), ng, "mean")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Shape {
            op: "concat_rows",
            lhs: (0, 0),
            rhs: (0, 0),
        })?;
        let mut v = self.value(*first).clone();
        for p in &parts[1..] {
            v = v.vstack(self.value(*p))?;
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(v, Op::ConcatRows(parts.iter().map(|p| p.0).collect()), ng, "concat_rows")
    }

    /// Copies rows `idx` of `a` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(a).select_rows(idx)?;
        let ng = self.ng(a);
        self.push(v, Op::GatherRows(a.0, idx.to_vec()), ng, "gather_rows")
    }

    /// Picks entry `idx[i]` from row `i`: `B × C -> B × 1`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if idx.len() != x.rows() {
            return Err(Error::Shape {
                op: "pick",
                lhs: x.shape(),
                rhs: (idx.len(), 1),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= x.cols()) {
            return Err(Error::Index { index: bad, len: x.cols() });
        }
        let v = Tensor::from_fn(x.rows(), 1, |i, _| x.get(i, idx[i]));
        let ng = self.ng(a);
        self.push(v, Op::Pick(a.0, idx.to_vec()), ng, "pick")
    }

    /// Clamps entries to `[lo, hi]`; the gradient is zero where clamping bites.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(v, Op::Clamp(a.0, lo, hi), ng, "clamp")
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "minimum", f64::min)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Minimum(a.0, b.0), ng, "minimum")
    }

    /// Inverted dropout. The mask is drawn from `rng`, so a seeded generator
    /// gives a reproducible mask. Callers skip this op in evaluation mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        let x = self.value(a);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let v = Tensor::from_vec(x.rows(), x.cols(), x.data().iter().zip(&mask).map(|(v, m)| v * m).collect())?;
        let ng = self.ng(a);
        self.push(v, Op::Dropout(a.0, mask), ng, "dropout")
    }

    /// Mean binary cross-entropy of probabilities against 0/1 labels.
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]` first.
    pub fn bce(&mut self, probs: Var, labels: &[f64]) -> Result<Var> {
        let p = self.value(probs);
        if p.len() != labels.len() || p.is_empty() {
            return Err(Error::Shape {
                op: "bce",
                lhs: p.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(bad) = labels.iter().position(|y| *y != 0.0 && *y != 1.0) {
            return Err(Error::Label { label: bad, classes: 2 });
        }
        let mut total = 0.0;
        for (pv, y) in p.data().iter().zip(labels) {
            let q = pv.clamp(PROB_EPS, 1.0 - PROB_EPS);
            total -= y * libm::log(q) + (1.0 - y) * libm::log(1.0 - q);
        }
        let v = Tensor::scalar(total / labels.len() as f64);
        let ng = self.ng(probs);
        self.push(v, Op::Bce(probs.0, labels.to_vec()), ng, "bce")
    }

    /// Mean cross-entropy of row logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        if x.rows() != labels.len() || labels.is_empty() {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: x.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= x.cols()) {
            return Err(Error::Label {
                label: bad,
                classes: x.cols(),
            });
        }
        let mut row = vec![0.0; x.cols()];
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            log_softmax_row(x.row(i), &mut row);
            total -= row[y];
        }
        let v = Tensor::scalar(total / labels.len() as f64);
        let ng = self.ng(logits);
        self.push(v, Op::CrossEntropy(logits.0, labels.to_vec()), ng, "cross_entropy")
    }

    /// Mean squared error.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: out.shape(),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], i: usize, g: Tensor) -> Result<()> {
        if !self.nodes[i].needs_grad {
            return Ok(());
        }
        match &mut grads[i] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn backprop(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let y = &node.value;
        let val = |i: usize| &self.nodes[i].value;
        let ng = |i: usize| self.nodes[i].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if ng(*a) {
                    let ga = g.matmul(&val(*b).transpose())?;
                    self.accumulate(grads, *a, ga)?;
                }
                if ng(*b) {
                    let gb = val(*a).transpose().matmul(g)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose())?,
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, g.clone())?;
                self.accumulate(grads, *b, g.sum_rows())?;
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(val(*b), "mul_grad", |u, v| u * v)?;
                let gb = g.zip_map(val(*a), "mul_grad", |u, v| u * v)?;
                self.accumulate(grads, *a, ga)?;
                self.accumulate(grads, *b, gb)?;
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.scale(*c))?,
            Op::Relu(a) => {
                let ga = g.zip_map(val(*a), "relu_grad", |u, x| if x > 0.0 { u } else { 0.0 })?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Sigmoid(a) => {
                let ga = g.zip_map(y, "sigmoid_grad", |u, s| u * s * (1.0 - s))?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Exp(a) => {
                let ga = g.zip_map(y, "exp_grad", |u, e| u * e)?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::RowSoftmax(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(s, u)| s * u).sum();
                    for (o, (s, u)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = s * (u - dot);
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::RowLogSoftmax(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let total: f64 = gr.iter().sum();
                    for (o, (l, u)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = u - libm::exp(*l) * total;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::RowNormalize(a, inv) => {
                let c = y.cols() as f64;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for (i, r) in inv.iter().enumerate() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let gm = gr.iter().sum::<f64>() / c;
                    let gy = yr.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>() / c;
                    for (o, (yh, u)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = r * (u - gm - yh * gy);
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::SumRows(a) => {
                let x = val(*a);
                let ga = Tensor::from_fn(x.rows(), x.cols(), |_, j| g.get(0, j));
                self.accumulate(grads, *a, ga)?;
            }
            Op::RowSums(a) => {
                let x = val(*a);
                let ga = Tensor::from_fn(x.rows(), x.cols(), |i, _| g.get(i, 0));
                self.accumulate(grads, *a, ga)?;
            }
            Op::SumAll(a) => {
                let x = val(*a);
                self.accumulate(grads, *a, Tensor::filled(x.rows(), x.cols(), g.item()))?;
            }
            Op::Mean(a) => {
                let x = val(*a);
                let c = g.item() / x.len() as f64;
                self.accumulate(grads, *a, Tensor::filled(x.rows(), x.cols(), c))?;
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = val(p).rows();
                    let idx: Vec<usize> = (offset..offset + rows).collect();
                    self.accumulate(grads, p, g.select_rows(&idx)?)?;
                    offset += rows;
                }
            }
            Op::GatherRows(a, idx) => {
                let x = val(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for (r, &src) in idx.iter().enumerate() {
                    for (o, u) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += u;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::Pick(a, idx) => {
                let x = val(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for (i, &j) in idx.iter().enumerate() {
                    ga.set(i, j, g.get(i, 0));
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::Clamp(a, lo, hi) => {
                let ga = g.zip_map(val(*a), "clamp_grad", |u, x| if x >= *lo && x <= *hi { u } else { 0.0 })?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Minimum(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(xa.rows(), xa.cols());
                let mut gb = Tensor::zeros(xa.rows(), xa.cols());
                for k in 0..xa.len() {
                    if xa.data()[k] <= xb.data()[k] {
                        ga.data_mut()[k] = g.data()[k];
                    } else {
                        gb.data_mut()[k] = g.data()[k];
                    }
                }
                self.accumulate(grads, *a, ga)?;
                self.accumulate(grads, *b, gb)?;
            }
            Op::Dropout(a, mask) => {
                let x = val(*a);
                let ga = Tensor::from_vec(x.rows(), x.cols(), g.data().iter().zip(mask).map(|(u, m)| u * m).collect())?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Bce(a, labels) => {
                let p = val(*a);
                let c = g.item() / labels.len() as f64;
                let data = p
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(pv, yv)| {
                        if *pv < PROB_EPS || *pv > 1.0 - PROB_EPS {
                            0.0
                        } else {
                            c * (-yv / pv + (1.0 - yv) / (1.0 - pv))
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::from_vec(p.rows(), p.cols(), data)?)?;
            }
            Op::CrossEntropy(a, labels) => {
                let x = val(*a);
                let mut ga = softmax_rows(x);
                let c = g.item() / labels.len() as f64;
                for (i, &lbl) in labels.iter().enumerate() {
                    let row = ga.row_mut(i);
                    row[lbl] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= c;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
        }
        Ok(())
    }
}

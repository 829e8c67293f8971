//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order, so node indices are
//! already a topological order. [`Graph::backward`] walks the tape once in
//! reverse and accumulates gradients additively, which handles fan-out.
//! The tape is reused across training steps via [`Graph::clear`].

use crate::error::{NumericsError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of differentiable operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Transpose,
    Reshape,
    Concat,
    Slice,
    Softmax,
    LayerNorm,
    Silu,
    Ln,
    Embedding,
    Sum,
    Mean,
    Mse,
}

impl OpKind {
    pub const ALL: [OpKind; 17] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::MatMul,
        OpKind::Transpose,
        OpKind::Reshape,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::Silu,
        OpKind::Ln,
        OpKind::Embedding,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Mse,
    ];
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Silu(Var),
    Ln(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// `b` broadcasts over `a` when shapes match or `b`'s shape is a suffix of `a`'s.
fn broadcast_ok(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out (+)= op(a) · op(b)` for row-major buffers; `op` transposes when the flag is set.
/// `m×k` and `k×n` are the logical (post-transpose) shapes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    out: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index dgemm touches given these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Numerically stable softmax over the last axis of a row-major buffer.
pub fn softmax_rows(data: &[f64], cols: usize) -> Result<Vec<f64>> {
    if cols == 0 {
        return Err(NumericsError::AxisTooShort {
            op: "softmax",
            len: 0,
            min: 1,
        });
    }
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    Ok(out)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every recorded node. Previously issued [`Var`]s become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn binary_elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !broadcast_ok(ta.shape(), tb.shape()) {
            return Err(NumericsError::ShapeMismatch {
                op: name,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let bd = tb.data();
        let nb = bd.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % nb]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    /// Elementwise sum; `b` may broadcast over leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_elementwise(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_elementwise(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_elementwise(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let t = self.nodes[x.0].value.map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale(x, c), rg, "scale")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::MatMul(a, b), rg, "matmul")
    }

    /// Swaps the two axes of a matrix.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if t.ndim() != 2 {
            return Err(NumericsError::InvalidShape {
                shape: t.shape().to_vec(),
                reason: "transpose expects a matrix".into(),
            });
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let src = t.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Transpose(x), rg, "transpose")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.nodes[x.0].value.clone().reshaped(shape)?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Reshape(x), rg, "reshape")
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .nodes
            .get(inputs.first().ok_or(NumericsError::EmptyTape)?.0)
            .unwrap()
            .value
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(NumericsError::OutOfRange {
                what: "concat axis",
                index: axis,
                size: first.len(),
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.nodes[v.0].value.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = &self.nodes[v.0].value;
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(inputs);
        self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
            "concat",
        )
    }

    /// Keeps indices `start..end` of `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if axis >= t.ndim() {
            return Err(NumericsError::OutOfRange {
                what: "slice axis",
                index: axis,
                size: t.ndim(),
            });
        }
        if start >= end || end > t.shape()[axis] {
            return Err(NumericsError::OutOfRange {
                what: "slice end",
                index: end,
                size: t.shape()[axis],
            });
        }
        let (outer, len, inner) = axis_split(t.shape(), axis);
        let width = end - start;
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&t.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = width;
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Slice { x, axis, start }, rg, "slice")
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let out = softmax_rows(t.data(), t.cols())?;
        let t = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Softmax(x), rg, "softmax")
    }

    /// Normalizes each row over the last axis, then applies optional gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Option<Var>, bias: Option<Var>, eps: f64) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let cols = t.cols();
        if cols < 2 {
            return Err(NumericsError::AxisTooShort {
                op: "layer_norm",
                len: cols,
                min: 2,
            });
        }
        for p in [gain, bias].into_iter().flatten() {
            let s = self.nodes[p.0].value.shape();
            if s != [cols] {
                return Err(NumericsError::ShapeMismatch {
                    op: "layer_norm",
                    left: t.shape().to_vec(),
                    right: s.to_vec(),
                });
            }
        }
        let rows = t.rows();
        let mut xhat = vec![0.0; t.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for (c, v) in row.iter().enumerate() {
                xhat[r * cols + c] = (v - mean) * is;
            }
        }
        let g = gain.map(|v| self.nodes[v.0].value.data().to_vec());
        let b = bias.map(|v| self.nodes[v.0].value.data().to_vec());
        let out = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let c = i % cols;
                h * g.as_ref().map_or(1.0, |g| g[c]) + b.as_ref().map_or(0.0, |b| b[c])
            })
            .collect();
        let t = Tensor::new(t.shape().to_vec(), out)?;
        let mut deps = vec![x];
        deps.extend(gain);
        deps.extend(bias);
        let rg = self.rg(&deps);
        self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
            "layer_norm",
        )
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let t = self.nodes[x.0].value.map(|v| v * sigmoid(v));
        let rg = self.rg(&[x]);
        self.push(t, Op::Silu(x), rg, "silu")
    }

    /// Natural logarithm; inputs must be positive.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        let t = self.nodes[x.0].value.map(f64::ln);
        let rg = self.rg(&[x]);
        self.push(t, Op::Ln(x), rg, "ln")
    }

    /// Gathers rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = &self.nodes[table.0].value;
        if t.ndim() != 2 || ids.is_empty() {
            return Err(NumericsError::InvalidShape {
                shape: t.shape().to_vec(),
                reason: "embedding needs a matrix table and at least one id".into(),
            });
        }
        let (vocab, dim) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(NumericsError::OutOfRange {
                    what: "embedding id",
                    index: id,
                    size: vocab,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        let t = Tensor::new(vec![ids.len(), dim], out)?;
        let rg = self.rg(&[table]);
        self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
            "embedding",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = Tensor::scalar(self.nodes[x.0].value.sum());
        let rg = self.rg(&[x]);
        self.push(t, Op::Sum(x), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        let t = Tensor::scalar(v.sum() / v.len() as f64);
        let rg = self.rg(&[x]);
        self.push(t, Op::Mean(x), rg, "mean")
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "mse",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let t = Tensor::scalar(s / ta.len() as f64);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Mse(a, b), rg, "mse")
    }

    /// `x · w + b` for a `[n, in]` input, `[in, out]` weight and `[out]` bias.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(NumericsError::EmptyTape);
        }
        let lt = &self.nodes[loss.0].value;
        if !lt.is_scalar() {
            return Err(NumericsError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        // Trainable leaves that the loss does not reach still get a (zero) gradient.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        for g in grads.iter().flatten() {
            if !g.all_finite() {
                return Err(NumericsError::NonFinite("backward"));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reduces a gradient of `a`'s shape down to a broadcast operand of shape `target`.
    fn reduce_broadcast(g: &[f64], target: &Tensor) -> Tensor {
        let n = target.len();
        let mut out = vec![0.0; n];
        for (i, v) in g.iter().enumerate() {
            out[i % n] += v;
        }
        Tensor::new(target.shape().to_vec(), out).unwrap()
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if needs(*b) {
                    let mut gb = Self::reduce_broadcast(g.data(), val(*b));
                    if sign < 0.0 {
                        gb = gb.map(|v| -v);
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let nb = tb.len();
                if needs(*a) {
                    let d = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, gv)| gv * tb.data()[i % nb])
                        .collect();
                    self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), d).unwrap());
                }
                if needs(*b) {
                    let prod: Vec<f64> = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Self::reduce_broadcast(&prod, tb));
                }
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, *x, g.map(|v| v * c));
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if needs(*a) {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut d, false);
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], d).unwrap());
                }
                if needs(*b) {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut d, false);
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], d).unwrap());
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = g.data()[i * c + j];
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![c, r], d).unwrap());
            }
            Op::Reshape(x) => {
                let d = g.clone().reshaped(val(*x).shape()).unwrap();
                self.accumulate(grads, *x, d);
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = axis_split(out.shape(), *axis);
                let mut offset = 0;
                let total = out.shape()[*axis] * inner;
                for v in inputs {
                    let t = val(*v);
                    let chunk = t.shape()[*axis] * inner;
                    if needs(*v) {
                        let mut d = Vec::with_capacity(t.len());
                        for o in 0..outer {
                            let base = o * total + offset;
                            d.extend_from_slice(&g.data()[base..base + chunk]);
                        }
                        self.accumulate(grads, *v, Tensor::new(t.shape().to_vec(), d).unwrap());
                    }
                    offset += chunk;
                }
            }
            Op::Slice { x, axis, start } => {
                let t = val(*x);
                let (outer, len, inner) = axis_split(t.shape(), *axis);
                let width = out.shape()[*axis];
                let mut d = vec![0.0; t.len()];
                for o in 0..outer {
                    let dst = o * len * inner + start * inner;
                    let src = o * width * inner;
                    d[dst..dst + width * inner].copy_from_slice(&g.data()[src..src + width * inner]);
                }
                self.accumulate(grads, *x, Tensor::new(t.shape().to_vec(), d).unwrap());
            }
            Op::Softmax(x) => {
                let cols = out.cols();
                let mut d = vec![0.0; out.len()];
                for ((y, gy), dx) in out
                    .data()
                    .chunks(cols)
                    .zip(g.data().chunks(cols))
                    .zip(d.chunks_mut(cols))
                {
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dx[c] = y[c] * (gy[c] - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = out.cols();
                let rows = out.rows();
                let gv = gain.map(|v| val(v).data().to_vec());
                if needs(*x) {
                    let mut d = vec![0.0; out.len()];
                    for r in 0..rows {
                        let gy = &g.data()[r * cols..(r + 1) * cols];
                        let xh = &xhat[r * cols..(r + 1) * cols];
                        let dxh: Vec<f64> = gy
                            .iter()
                            .enumerate()
                            .map(|(c, v)| v * gv.as_ref().map_or(1.0, |g| g[c]))
                            .collect();
                        let mean_d = dxh.iter().sum::<f64>() / cols as f64;
                        let mean_dx = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            d[r * cols + c] = inv_std[r] * (dxh[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
                }
                if let Some(gn) = gain.filter(|v| needs(*v)) {
                    let mut d = vec![0.0; cols];
                    for (i, (gy, xh)) in g.data().iter().zip(xhat).enumerate() {
                        d[i % cols] += gy * xh;
                    }
                    self.accumulate(grads, gn, Tensor::new(vec![cols], d).unwrap());
                }
                if let Some(bs) = bias.filter(|v| needs(*v)) {
                    let mut d = vec![0.0; cols];
                    for (i, gy) in g.data().iter().enumerate() {
                        d[i % cols] += gy;
                    }
                    self.accumulate(grads, bs, Tensor::new(vec![cols], d).unwrap());
                }
            }
            Op::Silu(x) => {
                let t = val(*x);
                let d = t
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, gy)| {
                        let s = sigmoid(v);
                        gy * s * (1.0 + v * (1.0 - s))
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(t.shape().to_vec(), d).unwrap());
            }
            Op::Ln(x) => {
                let t = val(*x);
                let d = t.data().iter().zip(g.data()).map(|(v, gy)| gy / v).collect();
                self.accumulate(grads, *x, Tensor::new(t.shape().to_vec(), d).unwrap());
            }
            Op::Embedding { table, ids } => {
                let t = val(*table);
                let dim = t.cols();
                let mut d = vec![0.0; t.len()];
                for (row, &id) in ids.iter().enumerate() {
                    for c in 0..dim {
                        d[id * dim + c] += g.data()[row * dim + c];
                    }
                }
                self.accumulate(grads, *table, Tensor::new(t.shape().to_vec(), d).unwrap());
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, Tensor::full(val(*x).shape(), g.item()));
            }
            Op::Mean(x) => {
                let t = val(*x);
                self.accumulate(grads, *x, Tensor::full(t.shape(), g.item() / t.len() as f64));
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let k = 2.0 * g.item() / ta.len() as f64;
                let diff: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| k * (x - y)).collect();
                if needs(*b) {
                    let neg = diff.iter().map(|v| -v).collect();
                    self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), neg).unwrap());
                }
                if needs(*a) {
                    self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), diff).unwrap());
                }
            }
        }
    }
}

//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and, when any
//! input requires a gradient, enough information to run its backward rule.
//! Nodes are appended in execution order, so walking the tape from the loss
//! towards the front is a valid reverse topological order.

use std::borrow::Cow;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, gemm};
use crate::numerics::{ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Transpose(Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool>, count: usize },
    NormalizeRows { x: Var, norms: Vec<f64> },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Operation record of one forward computation.
///
/// A tape is single-owner. Parameters are borrowed from a [`ParamStore`]
/// rather than copied, which ties the tape's lifetime to the store.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    bound: HashMap<ParamId, Var>,
    param_vars: Vec<(Var, ParamId)>,
    no_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Moves out the gradient of every parameter used on `tape`.
    pub fn into_param_grads(mut self, tape: &Tape<'_>) -> Vec<(ParamId, Vec<f64>)> {
        tape.param_vars
            .iter()
            .filter_map(|&(v, id)| self.grads[v.0].take().map(|g| (id, g)))
            .collect()
    }
}

fn suffix_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return Err(Error::shape(op, a, b));
    }
    Ok(())
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which nothing requires a gradient; ops only compute values.
    pub fn no_grad() -> Self {
        Tape {
            no_grad: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node and intermediate buffer.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.nodes.shrink_to_fit();
        self.bound.clear();
        self.param_vars.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t.detached()),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input owned by the tape.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t.detached()),
            op: Op::Leaf,
            requires_grad: !self.no_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a stored parameter (once per tape) and returns its node.
    pub fn param(&mut self, store: &'a ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let t = store.get(id);
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: !self.no_grad && t.requires_grad(),
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        self.param_vars.push((v, id));
        v
    }

    /// Makes later `param(.., id)` calls resolve to `v` instead of the store.
    pub fn bind_param(&mut self, id: ParamId, v: Var) {
        self.bound.insert(id, v);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ash, bsh) = (av.shape(), bv.shape());
        if ash.len() < 2 || bsh.len() != 2 || ash[ash.len() - 1] != bsh[0] {
            return Err(Error::shape("matmul", ash, bsh));
        }
        let (k, n) = (bsh[0], bsh[1]);
        let m = av.len() / k;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        let mut shape = ash.to_vec();
        *shape.last_mut().unwrap() = n;
        let rg = self.any_grad(&[a, b]);
        self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), rg, "matmul")
    }

    /// Elementwise sum; `b` may match a trailing suffix of `a`'s shape and is
    /// then broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        suffix_broadcast("add", av.shape(), bv.shape())?;
        let bl = bv.len();
        let mut out = av.data().to_vec();
        for chunk in out.chunks_mut(bl) {
            add_into(chunk, bv.data());
        }
        let shape = av.shape().to_vec();
        let rg = self.any_grad(&[a, b]);
        self.push(Tensor::from_parts(shape, out), Op::Add(a, b), rg, "add")
    }

    /// Elementwise product with the same broadcasting rule as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        suffix_broadcast("mul", av.shape(), bv.shape())?;
        let bl = bv.len();
        let mut out = av.data().to_vec();
        for chunk in out.chunks_mut(bl) {
            for (x, y) in chunk.iter_mut().zip(bv.data()) {
                *x *= y;
            }
        }
        let shape = av.shape().to_vec();
        let rg = self.any_grad(&[a, b]);
        self.push(Tensor::from_parts(shape, out), Op::Mul(a, b), rg, "mul")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.data().iter().map(|&v| kernels::gelu(v)).collect();
        let shape = xv.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Gelu(x), rg, "gelu")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = xv.data().to_vec();
        out.chunks_mut(c).for_each(kernels::softmax_row);
        let shape = xv.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Softmax(x), rg, "softmax")
    }

    /// Layer normalization over the last axis, without affine terms.
    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = vec![0.0; xv.len()];
        let inv_std = xv
            .data()
            .chunks(c)
            .zip(out.chunks_mut(c))
            .map(|(r, o)| kernels::layer_norm_row(r, o))
            .collect();
        let shape = xv.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::LayerNorm { x, inv_std }, rg, "layer_norm")
    }

    /// Gathers rows of a `V x d` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 || ids.is_empty() {
            return Err(Error::shape("embedding", tv.shape(), &[ids.len()]));
        }
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::TokenOutOfRange { id, size: v });
            }
            out.extend_from_slice(tv.row(id));
        }
        let rg = self.any_grad(&[table]);
        self.push(
            Tensor::from_parts(vec![ids.len(), d], out),
            Op::Embedding { table, ids: ids.to_vec() },
            rg,
            "embedding",
        )
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .value(*parts.first().ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?)
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", &first, &[axis]));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let pv = self.value(p);
                let span = pv.shape()[axis] * inner;
                out.extend_from_slice(&pv.data()[o * span..(o + 1) * span]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.any_grad(parts);
        self.push(
            Tensor::from_parts(shape, out),
            Op::Concat { parts: parts.to_vec(), axis },
            rg,
            "concat",
        )
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let sh = xv.shape();
        if axis >= sh.len() || start >= end || end > sh[axis] {
            return Err(Error::shape("slice", sh, &[axis, start, end]));
        }
        let (outer, len, inner) = split_axis(sh, axis);
        let width = end - start;
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&xv.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = sh.to_vec();
        shape[axis] = width;
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Slice { x, axis, start }, rg, "slice")
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let sh = xv.shape();
        if sh.len() < 2 {
            return Err(Error::shape("transpose", sh, &[]));
        }
        let (r, c) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        let mut out = vec![0.0; xv.len()];
        for (src, dst) in xv.data().chunks(r * c).zip(out.chunks_mut(r * c)) {
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        let mut shape = sh.to_vec();
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Transpose(x), rg, "transpose")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.data().iter().map(|v| v * s).collect();
        let shape = xv.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Scale(x, s), rg, "scale")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.data().iter().sum::<f64>() / xv.len() as f64;
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg, "mean")
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` (`T x V`), over positions where `mask` is true.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        let sh = lv.shape();
        if sh.len() != 2 || sh[0] != targets.len() || sh[0] != mask.len() {
            return Err(Error::shape("cross_entropy", sh, &[targets.len(), mask.len()]));
        }
        let v = sh[1];
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let mut logp = vec![0.0; v];
        let mut total = 0.0;
        for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
            if !m {
                continue;
            }
            if target >= v {
                return Err(Error::TokenOutOfRange { id: target, size: v });
            }
            kernels::log_softmax_row(lv.row(t), &mut logp);
            total -= logp[target];
        }
        let rg = self.any_grad(&[logits]);
        self.push(
            Tensor::scalar(total / count as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
            rg,
            "cross_entropy",
        )
    }

    /// Scales every row (last axis) to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = xv.data().to_vec();
        let norms = out
            .chunks_mut(c)
            .map(|r| {
                let n = (r.iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
                r.iter_mut().for_each(|v| *v /= n);
                n
            })
            .collect();
        let shape = xv.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::NormalizeRows { x, norms }, rg, "normalize_rows")
    }

    /// Runs the backward pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<'_>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = nodes[v.0].value.len();
            f(grads[v.0].get_or_insert_with(|| vec![0.0; n]));
        };
        let out = &node.value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let m = av.len() / k;
                if wants(*a) {
                    acc(grads, *a, &mut |ga| gemm(m, n, k, g, false, bv.data(), true, ga, true));
                }
                if wants(*b) {
                    acc(grads, *b, &mut |gb| gemm(k, m, n, av.data(), true, g, false, gb, true));
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(grads, *a, &mut |ga| add_into(ga, g));
                }
                if wants(*b) {
                    let bl = self.value(*b).len();
                    acc(grads, *b, &mut |gb| g.chunks(bl).for_each(|c| add_into(gb, c)));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let bl = bv.len();
                if wants(*a) {
                    acc(grads, *a, &mut |ga| {
                        for (j, (gi, gg)) in ga.iter_mut().zip(g).enumerate() {
                            *gi += gg * bv.data()[j % bl];
                        }
                    });
                }
                if wants(*b) {
                    acc(grads, *b, &mut |gb| {
                        for (j, (gg, x)) in g.iter().zip(av.data()).enumerate() {
                            gb[j % bl] += gg * x;
                        }
                    });
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                acc(grads, *x, &mut |gx| {
                    for ((gi, gg), v) in gx.iter_mut().zip(g).zip(xv.data()) {
                        *gi += gg * kernels::gelu_grad(*v);
                    }
                });
            }
            Op::Softmax(x) => {
                let c = out.cols();
                acc(grads, *x, &mut |gx| {
                    for ((gr, yr), xr) in g.chunks(c).zip(out.data().chunks(c)).zip(gx.chunks_mut(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gg), y) in xr.iter_mut().zip(gr).zip(yr) {
                            *o += y * (gg - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, inv_std } => {
                let c = out.cols();
                let n = c as f64;
                acc(grads, *x, &mut |gx| {
                    for (((gr, yr), xr), s) in g
                        .chunks(c)
                        .zip(out.data().chunks(c))
                        .zip(gx.chunks_mut(c))
                        .zip(inv_std)
                    {
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, gg), y) in xr.iter_mut().zip(gr).zip(yr) {
                            *o += s * (gg - mean_g - y * mean_gy);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = out.cols();
                acc(grads, *table, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[*axis];
                    if wants(p) {
                        acc(grads, p, &mut |gp| {
                            for o in 0..outer {
                                let src = (o * total + offset) * inner;
                                add_into(&mut gp[o * w * inner..(o + 1) * w * inner], &g[src..src + w * inner]);
                            }
                        });
                    }
                    offset += w;
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = self.value(*x).shape();
                let (outer, len, inner) = split_axis(xs, *axis);
                let w = out.shape()[*axis];
                acc(grads, *x, &mut |gx| {
                    for o in 0..outer {
                        let dst = (o * len + start) * inner;
                        add_into(&mut gx[dst..dst + w * inner], &g[o * w * inner..(o + 1) * w * inner]);
                    }
                });
            }
            Op::Transpose(x) => {
                let sh = out.shape();
                // out is [.., c, r]; the input was [.., r, c].
                let (c, r) = (sh[sh.len() - 2], sh[sh.len() - 1]);
                acc(grads, *x, &mut |gx| {
                    for (src, dst) in g.chunks(r * c).zip(gx.chunks_mut(r * c)) {
                        for i in 0..r {
                            for j in 0..c {
                                dst[i * c + j] += src[j * r + i];
                            }
                        }
                    }
                });
            }
            Op::Scale(x, s) => {
                acc(grads, *x, &mut |gx| {
                    for (o, gg) in gx.iter_mut().zip(g) {
                        *o += gg * s;
                    }
                });
            }
            Op::Sum(x) => {
                acc(grads, *x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                acc(grads, *x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::CrossEntropy { logits, targets, mask, count } => {
                let lv = self.value(*logits);
                let v = lv.cols();
                let scale = g[0] / *count as f64;
                let mut logp = vec![0.0; v];
                acc(grads, *logits, &mut |gl| {
                    for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
                        if !m {
                            continue;
                        }
                        kernels::log_softmax_row(lv.row(t), &mut logp);
                        let row = &mut gl[t * v..(t + 1) * v];
                        for (o, lp) in row.iter_mut().zip(&logp) {
                            *o += scale * lp.exp();
                        }
                        row[target] -= scale;
                    }
                });
            }
            Op::NormalizeRows { x, norms } => {
                let c = out.cols();
                acc(grads, *x, &mut |gx| {
                    for (((gr, yr), xr), n) in g
                        .chunks(c)
                        .zip(out.data().chunks(c))
                        .zip(gx.chunks_mut(c))
                        .zip(norms)
                    {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gg), y) in xr.iter_mut().zip(gr).zip(yr) {
                            *o += (gg - y * dot) / n;
                        }
                    }
                });
            }
        }
    }
}

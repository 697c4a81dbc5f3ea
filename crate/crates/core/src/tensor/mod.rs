//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Define-by-run: a [`Tape`] records every operation of one forward pass;
//! [`Tape::backward`] replays the records in reverse and accumulates
//! gradients into every `requires_grad` leaf. Tapes are rebuilt per forward
//! pass and are strictly single-threaded.
//!
//! Broadcasting is numpy-style on trailing axes: shapes are right-aligned
//! and each axis must match or be 1. Nothing richer is supported.

mod gradcheck;

pub use gradcheck::gradient_check;

use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

/// One recorded tensor: row-major values plus its gradient slot.
#[derive(Clone, Debug)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: f64 },
    Tanh { x: usize },
    Sigmoid { x: usize },
    Relu { x: usize },
    Softmax { x: usize, axis: usize },
    MeanAxis { x: usize, axis: usize },
    MeanAll { x: usize },
    SumAll { x: usize },
    Reshape { x: usize },
    Concat { xs: Vec<usize>, axis: usize },
    Row { x: usize, index: usize },
}

/// Append-only record of one forward pass.
#[derive(Default)]
pub struct Tape {
    tensors: Vec<Tensor>,
    ops: Vec<Op>,
}

// ── shape helpers ───────────────────────────────────────────────────

fn right_pad(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut out = vec![1; rank];
    out[rank - shape.len()..].copy_from_slice(shape);
    out
}

/// Broadcast two shapes (right-aligned; each axis equal or 1).
fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let (pa, pb) = (right_pad(a, rank), right_pad(b, rank));
    let mut out = vec![0; rank];
    for i in 0..rank {
        out[i] = match (pa[i], pb[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            (x, y) => {
                return Err(Error::Dimension(format!(
                    "cannot broadcast {a:?} with {b:?} (axis {i}: {x} vs {y})"
                )))
            }
        };
    }
    Ok(out)
}

/// Expand `values` of `shape` to `out_shape` by repeating size-1 axes.
fn broadcast_values(values: &[f64], shape: &[usize], out_shape: &[usize]) -> Vec<f64> {
    if shape == out_shape {
        return values.to_vec();
    }
    let rank = out_shape.len();
    let padded = right_pad(shape, rank);
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        strides[d] = if padded[d] == 1 { 0 } else { acc };
        acc *= padded[d];
    }
    let numel: usize = out_shape.iter().product();
    let mut out = vec![0.0; numel];
    let mut coords = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src = 0;
        for d in 0..rank {
            src += coords[d] * strides[d];
        }
        *slot = values[src];
        for d in (0..rank).rev() {
            coords[d] += 1;
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
        }
    }
    out
}

/// Sum a gradient of `grad_shape` down to `target_shape` (the adjoint of
/// broadcasting).
fn reduce_to_shape(grad: &[f64], grad_shape: &[usize], target_shape: &[usize]) -> Vec<f64> {
    if grad_shape == target_shape {
        return grad.to_vec();
    }
    let rank = grad_shape.len();
    let padded = right_pad(target_shape, rank);
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        strides[d] = if padded[d] == 1 { 0 } else { acc };
        acc *= padded[d];
    }
    let mut out = vec![0.0; target_shape.iter().product()];
    let mut coords = vec![0usize; rank];
    for &g in grad {
        let mut dst = 0;
        for d in 0..rank {
            dst += coords[d] * strides[d];
        }
        out[dst] += g;
        for d in (0..rank).rev() {
            coords[d] += 1;
            if coords[d] < grad_shape[d] {
                break;
            }
            coords[d] = 0;
        }
    }
    out
}

/// Plain m×k by k×n product.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let row = &b[p * n..(p + 1) * n];
            let out = &mut c[i * n..(i + 1) * n];
            for (o, &bv) in out.iter_mut().zip(row) {
                *o += av * bv;
            }
        }
    }
    c
}

/// A (m×k) times Bᵀ where B is n×k.
fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[j * k + p];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// Aᵀ times B where A is k×m and B is k×n.
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for p in 0..k {
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &b[p * n..(p + 1) * n];
            let out = &mut c[i * n..(i + 1) * n];
            for (o, &bv) in out.iter_mut().zip(row) {
                *o += av * bv;
            }
        }
    }
    c
}

fn accumulate(target: &mut Option<Vec<f64>>, src: &[f64]) {
    if let Some(t) = target {
        for (a, b) in t.iter_mut().zip(src) {
            *a += b;
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.tensors[id.0].values
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.tensors[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.tensors[id.0].grad.as_deref()
    }

    /// Record an input tensor. `requires_grad` leaves receive gradients
    /// from [`Tape::backward`].
    pub fn leaf(
        &mut self,
        values: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::Dimension(format!(
                "leaf values ({}) do not fill shape {shape:?}",
                values.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Dimension(format!("zero-length axis in {shape:?}")));
        }
        self.push(values, shape, requires_grad, Op::Leaf)
    }

    /// Convenience: a leaf that is never differentiated.
    pub fn constant(&mut self, values: Vec<f64>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(values, shape, false)
    }

    pub fn scalar(&mut self, v: f64) -> Result<TensorId> {
        self.constant(vec![v], vec![1])
    }

    fn push(
        &mut self,
        values: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Op,
    ) -> Result<TensorId> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "operation produced {bad} in a tensor of shape {shape:?}"
            )));
        }
        let id = self.tensors.len();
        self.tensors.push(Tensor {
            shape,
            values,
            requires_grad,
            grad: None,
        });
        self.ops.push(op);
        Ok(TensorId(id))
    }

    fn needs_grad(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.tensors[i].requires_grad)
    }

    // ── forward operations ──────────────────────────────────────────

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (&self.tensors[a.0].shape, &self.tensors[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul expects m×k by k×n, got {sa:?} by {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let values = matmul_raw(&self.tensors[a.0].values, &self.tensors[b.0].values, m, k, n);
        let rg = self.needs_grad(&[a.0, b.0]);
        self.push(values, vec![m, n], rg, Op::MatMul { a: a.0, b: b.0 })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Add { a: a.0, b: b.0 }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Sub { a: a.0, b: b.0 }, |x, y| x - y)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Mul { a: a.0, b: b.0 }, |x, y| x * y)
    }

    fn binary(
        &mut self,
        a: TensorId,
        b: TensorId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<TensorId> {
        let out_shape = broadcast_shape(&self.tensors[a.0].shape, &self.tensors[b.0].shape)?;
        let av = broadcast_values(
            &self.tensors[a.0].values,
            &self.tensors[a.0].shape,
            &out_shape,
        );
        let bv = broadcast_values(
            &self.tensors[b.0].values,
            &self.tensors[b.0].shape,
            &out_shape,
        );
        let values: Vec<f64> = av.iter().zip(&bv).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.needs_grad(&[a.0, b.0]);
        self.push(values, out_shape, rg, op)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId> {
        let values: Vec<f64> = self.tensors[x.0].values.iter().map(|v| v * c).collect();
        let shape = self.tensors[x.0].shape.clone();
        let rg = self.needs_grad(&[x.0]);
        self.push(values, shape, rg, Op::Scale { x: x.0, c })
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Tanh { x: x.0 }, f64::tanh)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Sigmoid { x: x.0 }, |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Relu { x: x.0 }, |v| v.max(0.0))
    }

    fn unary(&mut self, x: TensorId, op: Op, f: impl Fn(f64) -> f64) -> Result<TensorId> {
        let values: Vec<f64> = self.tensors[x.0].values.iter().map(|&v| f(v)).collect();
        let shape = self.tensors[x.0].shape.clone();
        let rg = self.needs_grad(&[x.0]);
        self.push(values, shape, rg, op)
    }

    /// Numerically stable softmax along one axis (max subtraction).
    pub fn softmax_axis(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.tensors[x.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let vals = &self.tensors[x.0].values;
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut out = vec![0.0; vals.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| vals[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for j in 0..len {
                    let e = (vals[at(j)] - max).exp();
                    out[at(j)] = e;
                    denom += e;
                }
                for j in 0..len {
                    out[at(j)] /= denom;
                }
            }
        }
        let rg = self.needs_grad(&[x.0]);
        self.push(out, shape, rg, Op::Softmax { x: x.0, axis })
    }

    /// Mean along one axis; the axis is removed from the shape.
    pub fn reduce_mean(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.tensors[x.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "reduce_mean axis {axis} out of range for shape {shape:?}"
            )));
        }
        let vals = &self.tensors[x.0].values;
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += vals[o * len * inner + j * inner + i];
                }
            }
        }
        for v in out.iter_mut() {
            *v /= len as f64;
        }
        let rg = self.needs_grad(&[x.0]);
        self.push(out, out_shape, rg, Op::MeanAxis { x: x.0, axis })
    }

    /// Mean over every element; result has shape [1].
    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId> {
        let t = &self.tensors[x.0];
        let mean = t.values.iter().sum::<f64>() / t.numel() as f64;
        let rg = self.needs_grad(&[x.0]);
        self.push(vec![mean], vec![1], rg, Op::MeanAll { x: x.0 })
    }

    /// Sum over every element; result has shape [1].
    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId> {
        let sum = self.tensors[x.0].values.iter().sum::<f64>();
        let rg = self.needs_grad(&[x.0]);
        self.push(vec![sum], vec![1], rg, Op::SumAll { x: x.0 })
    }

    /// Reinterpret the row-major values under a new shape.
    pub fn reshape(&mut self, x: TensorId, new_shape: Vec<usize>) -> Result<TensorId> {
        let t = &self.tensors[x.0];
        let numel: usize = new_shape.iter().product();
        if numel != t.numel() {
            return Err(Error::Dimension(format!(
                "reshape {:?} -> {new_shape:?} changes element count",
                t.shape
            )));
        }
        let values = t.values.clone();
        let rg = self.needs_grad(&[x.0]);
        self.push(values, new_shape, rg, Op::Reshape { x: x.0 })
    }

    /// Concatenate same-rank tensors along `axis`; all other axes must match.
    pub fn concat(&mut self, xs: &[TensorId], axis: usize) -> Result<TensorId> {
        if xs.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let first = self.tensors[xs[0].0].shape.clone();
        if axis >= first.len() {
            return Err(Error::Dimension(format!(
                "concat axis {axis} out of range for shape {first:?}"
            )));
        }
        let mut axis_total = 0;
        for &x in xs {
            let s = &self.tensors[x.0].shape;
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::Dimension(format!(
                    "concat shapes differ off-axis: {first:?} vs {s:?}"
                )));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &x in xs {
                let t = &self.tensors[x.0];
                let len = t.shape[axis];
                let start = o * len * inner;
                out.extend_from_slice(&t.values[start..start + len * inner]);
            }
        }
        let ids: Vec<usize> = xs.iter().map(|x| x.0).collect();
        let rg = self.needs_grad(&ids);
        self.push(out, out_shape, rg, Op::Concat { xs: ids, axis })
    }

    /// Extract row `index` of a 2-D tensor as a 1×cols tensor.
    pub fn row(&mut self, x: TensorId, index: usize) -> Result<TensorId> {
        let s = &self.tensors[x.0].shape;
        if s.len() != 2 {
            return Err(Error::Dimension(format!("row() expects rank 2, got {s:?}")));
        }
        if index >= s[0] {
            return Err(Error::Range(format!("row {index} of {} rows", s[0])));
        }
        let cols = s[1];
        let values = self.tensors[x.0].values[index * cols..(index + 1) * cols].to_vec();
        let rg = self.needs_grad(&[x.0]);
        self.push(values, vec![1, cols], rg, Op::Row { x: x.0, index })
    }

    // ── backward ────────────────────────────────────────────────────

    /// Populate gradients of every `requires_grad` tensor reachable from
    /// the scalar `output`. Call once per tape.
    pub fn backward(&mut self, output: TensorId) -> Result<()> {
        if self.tensors.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        if self.tensors[output.0].numel() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.tensors[output.0].shape
            )));
        }
        for t in self.tensors.iter_mut() {
            if t.requires_grad {
                t.grad = Some(vec![0.0; t.values.len()]);
            }
        }
        if !self.tensors[output.0].requires_grad {
            // No trainable leaf feeds the output; all grads stay zero.
            return Ok(());
        }
        self.tensors[output.0].grad = Some(vec![1.0]);

        for id in (0..=output.0).rev() {
            if !self.tensors[id].requires_grad {
                continue;
            }
            let grad = match &self.tensors[id].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            match self.ops[id].clone() {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, n) = (self.tensors[id].shape[0], self.tensors[id].shape[1]);
                    let k = self.tensors[a].shape[1];
                    if self.tensors[a].requires_grad {
                        let da = matmul_nt(&grad, &self.tensors[b].values, m, n, k);
                        accumulate(&mut self.tensors[a].grad, &da);
                    }
                    if self.tensors[b].requires_grad {
                        let db = matmul_tn(&self.tensors[a].values, &grad, k, m, n);
                        accumulate(&mut self.tensors[b].grad, &db);
                    }
                }
                Op::Add { a, b } => {
                    let out_shape = self.tensors[id].shape.clone();
                    for side in [a, b] {
                        if self.tensors[side].requires_grad {
                            let d = reduce_to_shape(&grad, &out_shape, &self.tensors[side].shape);
                            accumulate(&mut self.tensors[side].grad, &d);
                        }
                    }
                }
                Op::Sub { a, b } => {
                    let out_shape = self.tensors[id].shape.clone();
                    if self.tensors[a].requires_grad {
                        let d = reduce_to_shape(&grad, &out_shape, &self.tensors[a].shape);
                        accumulate(&mut self.tensors[a].grad, &d);
                    }
                    if self.tensors[b].requires_grad {
                        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                        let d = reduce_to_shape(&neg, &out_shape, &self.tensors[b].shape);
                        accumulate(&mut self.tensors[b].grad, &d);
                    }
                }
                Op::Mul { a, b } => {
                    let out_shape = self.tensors[id].shape.clone();
                    if self.tensors[a].requires_grad {
                        let bv = broadcast_values(
                            &self.tensors[b].values,
                            &self.tensors[b].shape,
                            &out_shape,
                        );
                        let full: Vec<f64> = grad.iter().zip(&bv).map(|(g, v)| g * v).collect();
                        let d = reduce_to_shape(&full, &out_shape, &self.tensors[a].shape);
                        accumulate(&mut self.tensors[a].grad, &d);
                    }
                    if self.tensors[b].requires_grad {
                        let av = broadcast_values(
                            &self.tensors[a].values,
                            &self.tensors[a].shape,
                            &out_shape,
                        );
                        let full: Vec<f64> = grad.iter().zip(&av).map(|(g, v)| g * v).collect();
                        let d = reduce_to_shape(&full, &out_shape, &self.tensors[b].shape);
                        accumulate(&mut self.tensors[b].grad, &d);
                    }
                }
                Op::Scale { x, c } => {
                    let d: Vec<f64> = grad.iter().map(|g| g * c).collect();
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::Tanh { x } => {
                    let out = &self.tensors[id].values;
                    let d: Vec<f64> = grad
                        .iter()
                        .zip(out)
                        .map(|(g, &t)| g * (1.0 - t * t))
                        .collect();
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::Sigmoid { x } => {
                    let out = &self.tensors[id].values;
                    let d: Vec<f64> = grad
                        .iter()
                        .zip(out)
                        .map(|(g, &s)| g * s * (1.0 - s))
                        .collect();
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::Relu { x } => {
                    let inp = &self.tensors[x].values;
                    let d: Vec<f64> = grad
                        .iter()
                        .zip(inp)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::Softmax { x, axis } => {
                    // ds_j = s_j (g_j − Σ_k g_k s_k) per slice.
                    let out = self.tensors[id].values.clone();
                    let shape = self.tensors[id].shape.clone();
                    let (outer, len, inner) = axis_split(&shape, axis);
                    let mut d = vec![0.0; out.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let dot: f64 = (0..len).map(|j| grad[at(j)] * out[at(j)]).sum();
                            for j in 0..len {
                                d[at(j)] = out[at(j)] * (grad[at(j)] - dot);
                            }
                        }
                    }
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::MeanAxis { x, axis } => {
                    let in_shape = self.tensors[x].shape.clone();
                    let (outer, len, inner) = axis_split(&in_shape, axis);
                    let mut d = vec![0.0; self.tensors[x].values.len()];
                    for o in 0..outer {
                        for j in 0..len {
                            for i in 0..inner {
                                d[o * len * inner + j * inner + i] =
                                    grad[o * inner + i] / len as f64;
                            }
                        }
                    }
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::MeanAll { x } => {
                    let n = self.tensors[x].values.len();
                    let d = vec![grad[0] / n as f64; n];
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::SumAll { x } => {
                    let n = self.tensors[x].values.len();
                    let d = vec![grad[0]; n];
                    accumulate(&mut self.tensors[x].grad, &d);
                }
                Op::Reshape { x } => {
                    accumulate(&mut self.tensors[x].grad, &grad);
                }
                Op::Concat { xs, axis } => {
                    let out_shape = self.tensors[id].shape.clone();
                    let (outer, _, inner) = axis_split(&out_shape, axis);
                    let mut cursor = 0;
                    let mut offsets = Vec::with_capacity(xs.len());
                    for &x in &xs {
                        offsets.push(cursor);
                        cursor += self.tensors[x].shape[axis];
                    }
                    let total = cursor;
                    for (&x, &off) in xs.iter().zip(&offsets) {
                        if !self.tensors[x].requires_grad {
                            continue;
                        }
                        let len = self.tensors[x].shape[axis];
                        let mut d = vec![0.0; self.tensors[x].values.len()];
                        for o in 0..outer {
                            let src = (o * total + off) * inner;
                            let dst = o * len * inner;
                            d[dst..dst + len * inner]
                                .copy_from_slice(&grad[src..src + len * inner]);
                        }
                        accumulate(&mut self.tensors[x].grad, &d);
                    }
                }
                Op::Row { x, index } => {
                    let cols = self.tensors[x].shape[1];
                    let mut d = vec![0.0; self.tensors[x].values.len()];
                    d[index * cols..(index + 1) * cols].copy_from_slice(&grad);
                    accumulate(&mut self.tensors[x].grad, &d);
                }
            }
        }
        Ok(())
    }
}

/// Decompose a shape around `axis` into (outer, axis length, inner) extents.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

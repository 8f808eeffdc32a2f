//! Append-only computation tape.
//!
//! Every operation pushes a node holding its forward value. Inputs always
//! have smaller indices than the node that consumes them, so reverse index
//! order is a valid (and fixed) topological order for the backward sweep.

use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParameterSet};
use crate::tensor::{self, axis_extents, check_axis, remove_axis, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Affine { x: Var, scale: f64 },
    ClampMin { x: Var, min: f64 },
    Softmax { x: Var, axis: usize },
    Reduce { x: Var, axis: usize, argmax: Option<Vec<usize>>, mean: bool },
    SumAll(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Gather { x: Var, indices: Vec<usize> },
    Reshape(Var),
    Transpose(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    param: Option<ParamId>,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    /// Constant leaf: never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, None, false)
    }

    /// Differentiable leaf not tied to a parameter.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, None, true)
    }

    /// Leaf bound to a parameter. Frozen parameters become constants.
    pub fn param(&mut self, params: &ParameterSet, id: ParamId) -> Var {
        let p = params.get(id);
        self.push_raw(Op::Leaf, p.tensor.clone(), Some(id), p.trainable)
    }

    /// One leaf per parameter, in parameter order.
    pub fn params(&mut self, params: &ParameterSet) -> Vec<Var> {
        params.ids().map(|id| self.param(params, id)).collect()
    }

    fn push_raw(&mut self, op: Op, value: Tensor, param: Option<ParamId>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            param,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(op, value, None, requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    /// Elementwise binary op. `b` may broadcast over leading dimensions of
    /// `a` when its shape is a suffix of `a`'s shape.
    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(AutodiffError::ShapeMismatch {
                op: match op {
                    Binary::Add => "add",
                    Binary::Sub => "sub",
                    Binary::Mul => "mul",
                },
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (va, vb) = (self.value(a), self.value(b));
        let nb = vb.len();
        let f = match op {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
        };
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb.data()[i % nb]))
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Binary(op, a, b), value, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, op: Unary, x: Var) -> Var {
        let f = match op {
            Unary::Sigmoid => tensor::sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
        };
        let value = self.value(x).map(f);
        self.push(Op::Unary(op, x), value, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(Unary::Log, x)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(Op::Affine { x, scale }, value, &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    /// `1 - x`, the complement used by gates.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn clamp_min(&mut self, x: Var, min: f64) -> Var {
        let value = self.value(x).map(|v| v.max(min));
        self.push(Op::ClampMin { x, min }, value, &[x])
    }

    /// Softmax along `axis`, stabilized by subtracting the max.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis(self.shape(x), axis)?;
        let value = tensor::softmax(self.value(x), axis);
        Ok(self.push(Op::Softmax { x, axis }, value, &[x]))
    }

    /// Reduction that removes `axis`. Max ties go to the lowest index.
    pub fn reduce(&mut self, op: Reduce, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis(&shape, axis)?;
        let (outer, n, inner) = axis_extents(&shape, axis);
        if n == 0 {
            return Err(AutodiffError::EmptyAxis { axis, shape });
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = (op == Reduce::Max).then(|| vec![0usize; outer * inner]);
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let slot = o * inner + i;
                match op {
                    Reduce::Sum | Reduce::Mean => {
                        let s: f64 = (0..n).map(|j| src[at(j)]).sum();
                        out[slot] = if op == Reduce::Mean { s / n as f64 } else { s };
                    }
                    Reduce::Max => {
                        let mut best = 0;
                        for j in 1..n {
                            if src[at(j)] > src[at(best)] {
                                best = j;
                            }
                        }
                        out[slot] = src[at(best)];
                        if let Some(am) = argmax.as_mut() {
                            am[slot] = best;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(remove_axis(&shape, axis), out)?;
        let mean = op == Reduce::Mean;
        Ok(self.push(Op::Reduce { x, axis, argmax, mean }, value, &[x]))
    }

    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduce::Sum, x, axis)
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduce::Mean, x, axis)
    }

    pub fn max(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduce::Max, x, axis)
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s), &[x])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let base = self.shape(first).to_vec();
        check_axis(&base, axis)?;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(k, (a, b))| k == axis || a == b);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_extents(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(Op::Concat { parts: parts.to_vec(), axis }, value, parts))
    }

    /// Entries `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis(&shape, axis)?;
        if start > end || end > shape[axis] {
            return Err(AutodiffError::IndexOutOfBounds {
                index: end,
                len: shape[axis],
            });
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * n + start) * inner..(o * n + end) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::Slice { x, axis, start }, value, &[x]))
    }

    /// Selects rows (entries along axis 0); indices may repeat.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis(&shape, 0)?;
        let rows = shape[0];
        let width: usize = shape[1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(AutodiffError::IndexOutOfBounds { index: i, len: rows });
            }
            data.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let mut out_shape = shape;
        out_shape[0] = indices.len();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::Gather { x, indices: indices.to_vec() }, value, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(Op::Reshape(x), value, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let (r, c) = match v.shape() {
            [r, c] => (*r, *c),
            s => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "transpose",
                    left: s.to_vec(),
                    right: vec![],
                })
            }
        };
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = v.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], data)?;
        Ok(self.push(Op::Transpose(x), value, &[x]))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_shape = self.shape(root);
        if self.value(root).len() != 1 || !root_shape.is_empty() && root_shape.iter().any(|&d| d != 1) {
            return Err(AutodiffError::NonScalarRoot(root_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::ones(root_shape));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }
        let params = self.nodes[..=root.0].iter().map(|n| n.param).collect();
        Ok(Gradients { grads, params })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    acc(*a, tensor::matmul_nt(g, self.value(*b)));
                }
                if self.wants(*b) {
                    acc(*b, tensor::matmul_tn(self.value(*a), g));
                }
            }
            Op::Binary(op, a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let nb = vb.len();
                if self.wants(*a) {
                    let ga = match op {
                        Binary::Add | Binary::Sub => g.clone(),
                        Binary::Mul => {
                            let data = g.data().iter().enumerate().map(|(i, &gi)| gi * vb.data()[i % nb]).collect();
                            Tensor::new(g.shape().to_vec(), data)?
                        }
                    };
                    acc(*a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; nb];
                    for (i, &gi) in g.data().iter().enumerate() {
                        gb[i % nb] += match op {
                            Binary::Add => gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * va.data()[i],
                        };
                    }
                    acc(*b, Tensor::new(vb.shape().to_vec(), gb)?);
                }
            }
            Op::Unary(op, x) => {
                let y = &node.value;
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .zip(xv.data())
                    .map(|((&gi, &yi), &xi)| {
                        gi * match op {
                            Unary::Sigmoid => yi * (1.0 - yi),
                            Unary::Tanh => 1.0 - yi * yi,
                            Unary::Exp => yi,
                            Unary::Log => 1.0 / xi,
                        }
                    })
                    .collect();
                acc(*x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Affine { x, scale } => acc(*x, g.map(|v| v * scale)),
            Op::ClampMin { x, min } => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gi, &xi)| if xi >= *min { gi } else { 0.0 })
                    .collect();
                acc(*x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Softmax { x, axis } => {
                let y = &node.value;
                let (outer, n, inner) = axis_extents(y.shape(), *axis);
                let mut out = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + i;
                        let dot: f64 = (0..n).map(|j| g.data()[at(j)] * y.data()[at(j)]).sum();
                        for j in 0..n {
                            out[at(j)] = y.data()[at(j)] * (g.data()[at(j)] - dot);
                        }
                    }
                }
                acc(*x, Tensor::new(y.shape().to_vec(), out)?);
            }
            Op::Reduce { x, axis, argmax, mean } => {
                let shape = self.shape(*x).to_vec();
                let (outer, n, inner) = axis_extents(&shape, *axis);
                let mut out = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let slot = o * inner + i;
                        let gi = g.data()[slot];
                        match argmax {
                            Some(am) => out[o * n * inner + am[slot] * inner + i] = gi,
                            None => {
                                let v = if *mean { gi / n as f64 } else { gi };
                                for j in 0..n {
                                    out[o * n * inner + j * inner + i] = v;
                                }
                            }
                        }
                    }
                }
                acc(*x, Tensor::new(shape, out)?);
            }
            Op::SumAll(x) => {
                let gi = g.data()[0];
                acc(*x, Tensor::filled(self.shape(*x), gi));
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_extents(g.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let pshape = self.shape(p).to_vec();
                    let len = pshape[*axis];
                    if self.wants(p) {
                        let mut data = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[start..start + len * inner]);
                        }
                        acc(p, Tensor::new(pshape, data)?);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let shape = self.shape(*x).to_vec();
                let (outer, n, inner) = axis_extents(&shape, *axis);
                let len = g.shape()[*axis];
                let mut out = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    out[dst..dst + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                acc(*x, Tensor::new(shape, out)?);
            }
            Op::Gather { x, indices } => {
                let shape = self.shape(*x).to_vec();
                let width: usize = shape[1..].iter().product();
                let mut out = vec![0.0; shape.iter().product()];
                for (k, &i) in indices.iter().enumerate() {
                    for c in 0..width {
                        out[i * width + c] += g.data()[k * width + c];
                    }
                }
                acc(*x, Tensor::new(shape, out)?);
            }
            Op::Reshape(x) => {
                acc(*x, g.clone().reshaped(self.shape(*x).to_vec())?);
            }
            Op::Transpose(x) => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut data = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        data[j * r + i] = g.data()[i * c + j];
                    }
                }
                acc(*x, Tensor::new(vec![c, r], data)?);
            }
        }
        Ok(())
    }
}

/// Result of a backward sweep.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<Option<ParamId>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` when `v` does not
    /// influence the root or was created after it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Per-parameter gradients, summed over every leaf bound to the same
    /// parameter. Unreached and frozen parameters get zeros.
    pub fn for_params(&self, params: &ParameterSet) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        for (idx, pid) in self.params.iter().enumerate() {
            let Some(pid) = pid else { continue };
            if !params.get(*pid).trainable {
                continue;
            }
            if let Some(g) = &self.grads[idx] {
                out[pid.index()].add_assign(g);
            }
        }
        out
    }
}

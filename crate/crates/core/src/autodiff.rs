//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Every network in the crate runs its forward pass on a [`Tape`]. Each
//! primitive records its inputs and an [`Op`] tag; [`Tape::backward`] then
//! walks the tape once in reverse and accumulates gradients for every node
//! that depends on a leaf created with `requires_grad = true`.
//!
//! ```
//! use ppm_core::autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0), true).unwrap();
//! let y = x.mul(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).item(), 6.0);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("slice {start}..{end} out of range for axis of length {len}")]
    BadSlice { start: usize, end: usize, len: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major dense array of 64-bit reals. Cloning is cheap: the buffer is
/// shared until someone writes through [`Tensor::data_mut`].
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data.as_slice())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::BadLength { shape, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "tensor" });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: Arc::new(vec![v]),
        }
    }

    /// 1-D tensor. Panics on non-finite input; use [`Tensor::new`] to get an error.
    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data).expect("finite vector")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn from_parts(shape: Vec<usize>, data: Vec<f64>, op: &'static str) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }
}

/// Primitive applied at a tape node. Inputs are node indices.
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine { x: usize, scale: f64 },
    Concat(Vec<usize>),
    Slice { x: usize, start: usize, end: usize },
    Sum(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Softmax(usize),
    ClampMin { x: usize, floor: f64 },
    SquaredError(usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Records an input. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Result<Var<'_>> {
        if value.data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        Ok(self.push(value, Op::Leaf, requires_grad))
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.leaf(value, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Grads> {
        assert!(std::ptr::eq(loss.tape, self), "loss recorded on another tape");
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape.clone();
        if nodes[loss.id].value.len() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut emit = |target: usize, contrib: Vec<f64>| {
                if !nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            };
            let y = node.value.data();
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let (r, c) = (av.shape[0], av.shape[1]);
                    let k = if bv.shape.len() == 1 { 1 } else { bv.shape[1] };
                    let (ad, bd) = (av.data(), bv.data());
                    if nodes[*a].requires_grad {
                        // dA = G · Bᵀ
                        let mut da = vec![0.0; r * c];
                        for i in 0..r {
                            for j in 0..c {
                                let mut s = 0.0;
                                for l in 0..k {
                                    s += g[i * k + l] * bd[j * k + l];
                                }
                                da[i * c + j] = s;
                            }
                        }
                        emit(*a, da);
                    }
                    if nodes[*b].requires_grad {
                        // dB = Aᵀ · G
                        let mut db = vec![0.0; c * k];
                        for i in 0..r {
                            for j in 0..c {
                                let aij = ad[i * c + j];
                                for l in 0..k {
                                    db[j * k + l] += aij * g[i * k + l];
                                }
                            }
                        }
                        emit(*b, db);
                    }
                }
                Op::Add(a, b) => {
                    emit(*a, g.clone());
                    emit(*b, g);
                }
                Op::Sub(a, b) => {
                    emit(*b, g.iter().map(|v| -v).collect());
                    emit(*a, g);
                }
                Op::Mul(a, b) => {
                    let av = nodes[*a].value.data();
                    let bv = nodes[*b].value.data();
                    emit(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                    emit(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
                }
                Op::Affine { x, scale } => emit(*x, g.iter().map(|v| v * scale).collect()),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = nodes[p].value.len();
                        emit(p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::Slice { x, start, end } => {
                    let xv = &nodes[*x].value;
                    let inner: usize = xv.shape[1..].iter().product();
                    let mut dx = vec![0.0; xv.len()];
                    dx[start * inner..end * inner].copy_from_slice(&g);
                    emit(*x, dx);
                }
                Op::Sum(x) => emit(*x, vec![g[0]; nodes[*x].value.len()]),
                Op::Sigmoid(x) => emit(*x, zip_map(&g, y, |g, y| g * y * (1.0 - y))),
                Op::Tanh(x) => emit(*x, zip_map(&g, y, |g, y| g * (1.0 - y * y))),
                Op::Relu(x) => {
                    let xv = nodes[*x].value.data();
                    emit(*x, zip_map(&g, xv, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Exp(x) => emit(*x, zip_map(&g, y, |g, y| g * y)),
                Op::Log(x) => {
                    let xv = nodes[*x].value.data();
                    emit(*x, zip_map(&g, xv, |g, x| g / x));
                }
                Op::Softmax(x) => {
                    let cols = *node.value.shape.last().unwrap();
                    let mut dx = vec![0.0; y.len()];
                    for (row, (gy, yy)) in g.chunks(cols).zip(y.chunks(cols)).enumerate() {
                        let dot: f64 = gy.iter().zip(yy).map(|(g, y)| g * y).sum();
                        for j in 0..cols {
                            dx[row * cols + j] = yy[j] * (gy[j] - dot);
                        }
                    }
                    emit(*x, dx);
                }
                Op::ClampMin { x, floor } => {
                    let xv = nodes[*x].value.data();
                    emit(*x, zip_map(&g, xv, |g, x| if x > *floor { g } else { 0.0 }));
                }
                Op::SquaredError(a, b) => {
                    let av = nodes[*a].value.data();
                    let bv = nodes[*b].value.data();
                    let diff: Vec<f64> = av.iter().zip(bv).map(|(a, b)| 2.0 * (a - b) * g[0]).collect();
                    emit(*b, diff.iter().map(|v| -v).collect());
                    emit(*a, diff);
                }
            }
        }
        Ok(Grads { grads })
    }
}

fn zip_map(g: &[f64], other: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    g.iter().zip(other).map(|(&g, &o)| f(g, o)).collect()
}

/// Gradients of one backward pass, indexed by tape node.
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient with respect to `var`; zeros when `var` is not on the loss path.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        let shape = var.tape.nodes.borrow()[var.id].value.shape.clone();
        match self.grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => Tensor {
                shape,
                data: Arc::new(g.clone()),
            },
            None => Tensor::zeros(&shape),
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn value(&self) -> Tensor {
        self.tape.value(self.id)
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.data[0]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape.clone()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Same value as a fresh constant: gradients stop here.
    pub fn detach(&self) -> Var<'t> {
        self.tape.push(self.value(), Op::Leaf, false)
    }

    fn record(
        &self,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        name: &'static str,
        inputs: &[usize],
    ) -> Result<Var<'t>> {
        let value = Tensor::from_parts(shape, data, name)?;
        let rg = inputs.iter().any(|&i| self.tape.needs(i));
        Ok(self.tape.push(value, op, rg))
    }

    fn same_shape(&self, other: Var<'t>, op: &'static str) -> Result<(Tensor, Tensor)> {
        let (a, b) = (self.value(), other.value());
        if a.shape != b.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: a.shape,
                right: b.shape,
            });
        }
        Ok((a, b))
    }

    fn binary(self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let (a, b) = self.same_shape(other, name)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        self.record(a.shape, data, op, name, &[self.id, other.id])
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        let a = self.value();
        let data = a.data().iter().map(|&x| f(x)).collect();
        self.record(a.shape, data, op, name, &[self.id])
    }

    /// `[r, c] × [c]` or `[r, c] × [c, k]`.
    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        };
        if a.shape.len() != 2 || b.shape.is_empty() || b.shape.len() > 2 || a.shape[1] != b.shape[0] {
            return Err(mismatch());
        }
        let (r, c) = (a.shape[0], a.shape[1]);
        let k = if b.shape.len() == 1 { 1 } else { b.shape[1] };
        let (ad, bd) = (a.data(), b.data());
        let mut out = vec![0.0; r * k];
        for i in 0..r {
            let row = &ad[i * c..(i + 1) * c];
            for l in 0..k {
                let mut s = 0.0;
                for j in 0..c {
                    s += row[j] * bd[j * k + l];
                }
                out[i * k + l] = s;
            }
        }
        let shape = if b.shape.len() == 1 { vec![r] } else { vec![r, k] };
        self.record(shape, out, Op::MatMul(self.id, rhs.id), "matmul", &[self.id, rhs.id])
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "add", Op::Add(self.id, rhs.id), |a, b| a + b)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "sub", Op::Sub(self.id, rhs.id), |a, b| a - b)
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "mul", Op::Mul(self.id, rhs.id), |a, b| a * b)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(self, scale: f64, shift: f64) -> Result<Var<'t>> {
        self.unary("affine", Op::Affine { x: self.id, scale }, |x| scale * x + shift)
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>> {
        self.affine(s, 0.0)
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.affine(-1.0, 0.0)
    }

    /// Concatenates along axis 0; trailing extents must agree.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of zero tensors".into()))?;
        let tape = first.tape;
        let head = first.value();
        let trailing = head.shape[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let v = p.value();
            if v.shape[1..] != trailing[..] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: head.shape.clone(),
                    right: v.shape.clone(),
                });
            }
            rows += v.shape[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend(trailing);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = ids.iter().any(|&i| tape.needs(i));
        let value = Tensor::from_parts(shape, data, "concat")?;
        Ok(tape.push(value, Op::Concat(ids), rg))
    }

    /// Rows `start..end` along axis 0.
    pub fn slice(self, start: usize, end: usize) -> Result<Var<'t>> {
        let a = self.value();
        let len = a.shape[0];
        if start >= end || end > len {
            return Err(TensorError::BadSlice { start, end, len });
        }
        let inner: usize = a.shape[1..].iter().product();
        let data = a.data()[start * inner..end * inner].to_vec();
        let mut shape = a.shape.clone();
        shape[0] = end - start;
        self.record(shape, data, Op::Slice { x: self.id, start, end }, "slice", &[self.id])
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let a = self.value();
        let s = a.data().iter().sum();
        self.record(vec![1], vec![s], Op::Sum(self.id), "sum", &[self.id])
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary("sigmoid", Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary("tanh", Op::Tanh(self.id), f64::tanh)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary("relu", Op::Relu(self.id), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Result<Var<'t>> {
        self.unary("log", Op::Log(self.id), f64::ln)
    }

    /// `max(x, floor)` elementwise; gradient is zero where the floor is active.
    pub fn clamp_min(self, floor: f64) -> Result<Var<'t>> {
        self.unary("clamp_min", Op::ClampMin { x: self.id, floor }, |x| x.max(floor))
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(self) -> Result<Var<'t>> {
        let a = self.value();
        let cols = *a.shape.last().unwrap();
        let mut out = Vec::with_capacity(a.len());
        for row in a.data().chunks(cols) {
            out.extend(softmax(row));
        }
        self.record(a.shape, out, Op::Softmax(self.id), "softmax", &[self.id])
    }

    /// `Σ (self - target)²` as a single-element tensor.
    pub fn squared_error(self, target: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.same_shape(target, "squared_error")?;
        let s = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        self.record(
            vec![1],
            vec![s],
            Op::SquaredError(self.id, target.id),
            "squared_error",
            &[self.id, target.id],
        )
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of a slice.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Identifier of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    /// Clipping group (one network layer).
    pub group: String,
    pub value: Tensor,
}

/// Named trainable tensors of one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            group: group.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape, requires_grad: bool) -> Result<Binding<'t>> {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), requires_grad))
            .collect::<Result<Vec<_>>>()?;
        Ok(Binding { tape, vars })
    }
}

/// Tape handles for the parameters of one [`ParamStore`].
#[derive(Clone)]
pub struct Binding<'t> {
    tape: &'t Tape,
    vars: Vec<Var<'t>>,
}

impl<'t> Binding<'t> {
    /// Binds already-recorded variables, one per parameter in store order.
    pub fn from_vars(tape: &'t Tape, vars: Vec<Var<'t>>) -> Self {
        Self { tape, vars }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    /// Collects the per-parameter gradient of a finished backward pass.
    pub fn gradient(&self, grads: &Grads) -> Gradient {
        Gradient {
            grads: self.vars.iter().map(|v| grads.wrt(*v)).collect(),
        }
    }
}

/// Parameter gradients, aligned with the [`ParamStore`] they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    grads: Vec<Tensor>,
}

impl Gradient {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.data().iter().all(|v| v.is_finite()))
    }
}

const FD_FLOOR: f64 = 1e-5;

/// Compares reverse-mode gradients of `f` against central differences.
///
/// Returns the largest `|analytic - numeric| / max(|analytic| + |numeric|, 1e-5)`
/// over every coordinate of every tensor in `params`. The floor keeps
/// coordinates whose gradient is below the resolution of a central difference
/// (roughly `ε·|f| / step`) from dominating the result.
pub fn finite_difference_check<F>(params: &[Tensor], step: f64, f: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if step <= 0.0 {
        return Err(TensorError::Invalid("finite-difference step must be positive".into()));
    }
    let tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.leaf(p.clone(), true))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let eval = |point: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars = point
            .iter()
            .map(|p| tape.leaf(p.clone(), false))
            .collect::<Result<Vec<_>>>()?;
        Ok(f(&tape, &vars)?.item())
    };

    let mut worst: f64 = 0.0;
    let mut point = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for ci in 0..p.len() {
            let orig = p.data()[ci];
            point[pi].data_mut()[ci] = orig + step;
            let up = eval(&point)?;
            point[pi].data_mut()[ci] = orig - step;
            let down = eval(&point)?;
            point[pi].data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[pi].data()[ci];
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(FD_FLOOR));
        }
    }
    Ok(worst)
}

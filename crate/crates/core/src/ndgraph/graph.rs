//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] borrows a [`ParamStore`] read-only and records every
//! operation as a node. [`Graph::backward`] walks the tape in reverse and
//! accumulates parameter gradients into a caller-owned [`Gradients`].

use super::array::{axpy, dot, Array};
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{DressError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Row(ParamId, usize),
    MatVec(NodeId, NodeId),
    MatTVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, Vec<f64>),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Stack(Vec<NodeId>),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    AddN(Vec<NodeId>),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Pick(NodeId, usize),
}

enum Val {
    Owned(Array),
    Param(ParamId),
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    vals: Vec<Val>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
    param_nodes: Vec<Option<NodeId>>,
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> DressError {
    DressError::Shape(format!("{op}: {a:?} vs {b:?}"))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(DressError::Empty("softmax of an empty vector".into()));
    }
    if z.iter().any(|v| v.is_nan()) {
        return Err(DressError::InvalidArgument("softmax input contains NaN".into()));
    }
    Ok(softmax_unchecked(z))
}

fn softmax_unchecked(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            vals: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        match &self.vals[id.0] {
            Val::Owned(a) => a,
            Val::Param(p) => self.params.get(*p),
        }
    }

    /// Value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    fn push(&mut self, val: Array, op: Op, needs_grad: bool) -> NodeId {
        self.vals.push(Val::Owned(val));
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        NodeId(self.ops.len() - 1)
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.needs_grad[i.0])
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Array) -> NodeId {
        self.push(value, Op::Input, false)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.input(Array::zeros(&[len]))
    }

    /// The node for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.vals.push(Val::Param(id));
        self.ops.push(Op::Param(id));
        self.needs_grad.push(true);
        let n = NodeId(self.ops.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// Row `row` of a matrix parameter (embedding lookup).
    pub fn row(&mut self, id: ParamId, row: usize) -> Result<NodeId> {
        let m = self.params.get(id);
        if m.shape().len() != 2 || row >= m.rows() {
            return Err(DressError::InvalidArgument(format!(
                "row {row} of parameter {} with shape {:?}",
                self.params.name(id),
                m.shape()
            )));
        }
        let v = Array::vector(m.row(row).to_vec());
        Ok(self.push(v, Op::Row(id, row), true))
    }

    /// Matrix-vector product `m · x`.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let (ms, xs) = (self.value(m).shape(), self.value(x).shape());
        if ms.len() != 2 || xs.len() != 1 || ms[1] != xs[0] {
            return Err(shape_err("matvec", ms, xs));
        }
        let (mv, xv) = (self.value(m), self.value(x));
        let cols = mv.cols();
        let out: Vec<f64> = mv.data().chunks_exact(cols).map(|r| dot(r, xv.data())).collect();
        let ng = self.ng(&[m, x]);
        Ok(self.push(Array::vector(out), Op::MatVec(m, x), ng))
    }

    /// Transposed matrix-vector product `mᵀ · x`.
    pub fn mattvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let (ms, xs) = (self.value(m).shape(), self.value(x).shape());
        if ms.len() != 2 || xs.len() != 1 || ms[0] != xs[0] {
            return Err(shape_err("mattvec", ms, xs));
        }
        let (mv, xv) = (self.value(m), self.value(x));
        let mut out = vec![0.0; mv.cols()];
        for (r, &w) in mv.data().chunks_exact(mv.cols()).zip(xv.data()) {
            axpy(&mut out, w, r);
        }
        let ng = self.ng(&[m, x]);
        Ok(self.push(Array::vector(out), Op::MatTVec(m, x), ng))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        Ok(av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect())
    }

    fn vec_like(&self, like: NodeId, data: Vec<f64>) -> Array {
        Array::new(self.value(like).shape().to_vec(), data).expect("same length")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(self.vec_like(a, out), Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(self.vec_like(a, out), Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(self.vec_like(a, out), Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let out = self.value(a).data().iter().map(|x| x * k).collect();
        let ng = self.ng(&[a]);
        self.push(self.vec_like(a, out), Op::Scale(a, k), ng)
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: NodeId, c: Vec<f64>) -> Result<NodeId> {
        if c.len() != self.value(a).len() {
            return Err(shape_err("mul_const", self.value(a).shape(), &[c.len()]));
        }
        let out = self.value(a).data().iter().zip(&c).map(|(x, y)| x * y).collect();
        let ng = self.ng(&[a]);
        Ok(self.push(self.vec_like(a, out), Op::MulConst(a, c), ng))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).data().iter().map(|&x| sigmoid(x)).collect();
        let ng = self.ng(&[a]);
        self.push(self.vec_like(a, out), Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let ng = self.ng(&[a]);
        self.push(self.vec_like(a, out), Op::Tanh(a), ng)
    }

    /// Concatenate vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(DressError::Empty("concat of nothing".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let ng = self.ng(parts);
        Ok(self.push(Array::vector(out), Op::Concat(parts.to_vec()), ng))
    }

    /// Elements `[start, start + len)` of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let av = self.value(a);
        if len == 0 || start + len > av.len() {
            return Err(DressError::Shape(format!("slice {start}+{len} of length {}", av.len())));
        }
        let out = av.data()[start..start + len].to_vec();
        let ng = self.ng(&[a]);
        Ok(self.push(Array::vector(out), Op::Slice(a, start), ng))
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows
            .first()
            .ok_or_else(|| DressError::Empty("stack of nothing".into()))?;
        let cols = self.value(*first).len();
        let mut out = Vec::with_capacity(cols * rows.len());
        for &r in rows {
            let v = self.value(r);
            if v.len() != cols {
                return Err(shape_err("stack", &[cols], v.shape()));
            }
            out.extend_from_slice(v.data());
        }
        let m = Array::matrix(rows.len(), cols, out)?;
        let ng = self.ng(rows);
        Ok(self.push(m, Op::Stack(rows.to_vec()), ng))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(shape_err("dot", av.shape(), bv.shape()));
        }
        let v = dot(av.data(), bv.data());
        let ng = self.ng(&[a, b]);
        Ok(self.push(Array::scalar(v), Op::Dot(a, b), ng))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).data().iter().sum();
        let ng = self.ng(&[a]);
        self.push(Array::scalar(v), Op::Sum(a), ng)
    }

    /// Sum of same-shaped nodes.
    pub fn add_n(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| DressError::Empty("add_n of nothing".into()))?;
        let mut out = self.value(*first).clone();
        for &p in &parts[1..] {
            let v = self.value(p);
            if v.len() != out.len() {
                return Err(shape_err("add_n", out.shape(), v.shape()));
            }
            axpy(out.data_mut(), 1.0, v.data());
        }
        let ng = self.ng(parts);
        Ok(self.push(out, Op::AddN(parts.to_vec()), ng))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let out = softmax(self.value(a).data())?;
        let ng = self.ng(&[a]);
        Ok(self.push(Array::vector(out), Op::Softmax(a), ng))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let z = self.value(a).data();
        if z.iter().any(|v| v.is_nan()) {
            return Err(DressError::InvalidArgument("log_softmax input contains NaN".into()));
        }
        let lse = log_sum_exp(z);
        let out = z.iter().map(|v| v - lse).collect();
        let ng = self.ng(&[a]);
        Ok(self.push(Array::vector(out), Op::LogSoftmax(a), ng))
    }

    /// Element `i` of a vector, as a scalar node.
    pub fn pick(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let av = self.value(a);
        if i >= av.len() {
            return Err(DressError::InvalidArgument(format!("index {i} of length {}", av.len())));
        }
        let v = av.data()[i];
        let ng = self.ng(&[a]);
        Ok(self.push(Array::scalar(v), Op::Pick(a, i), ng))
    }

    /// Accumulate `d loss / d param` into `grads` for every parameter the
    /// loss depends on. Existing contents of `grads` are added to, not
    /// replaced.
    pub fn backward(&self, loss: NodeId, grads: &mut Gradients) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(DressError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(DressError::Shape("gradient set does not match parameter store".into()));
        }
        let mut buf: Vec<Option<Vec<f64>>> = (0..self.ops.len()).map(|_| None).collect();
        buf[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let g = match buf[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, &g, &mut buf, grads);
        }
        Ok(())
    }

    fn target<'a>(
        &self,
        node: NodeId,
        buf: &'a mut [Option<Vec<f64>>],
        grads: &'a mut Gradients,
    ) -> Option<&'a mut [f64]> {
        if !self.needs_grad[node.0] {
            return None;
        }
        match self.ops[node.0] {
            Op::Param(p) => Some(grads.get_mut(p).data_mut()),
            _ => {
                let len = self.value(node).len();
                Some(buf[node.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
            }
        }
    }

    fn backprop_node(&self, i: usize, g: &[f64], buf: &mut [Option<Vec<f64>>], grads: &mut Gradients) {
        let out = self.value(NodeId(i)).data();
        match &self.ops[i] {
            Op::Input | Op::Param(_) => {}
            Op::Row(p, r) => {
                let m = grads.get_mut(*p);
                let cols = m.cols();
                axpy(&mut m.data_mut()[r * cols..(r + 1) * cols], 1.0, g);
            }
            Op::MatVec(m, x) => {
                let (mv, xv) = (self.value(*m), self.value(*x));
                let cols = mv.cols();
                if let Some(dm) = self.target(*m, buf, grads) {
                    for (row, &gr) in dm.chunks_exact_mut(cols).zip(g) {
                        if gr != 0.0 {
                            axpy(row, gr, xv.data());
                        }
                    }
                }
                if let Some(dx) = self.target(*x, buf, grads) {
                    for (row, &gr) in mv.data().chunks_exact(cols).zip(g) {
                        if gr != 0.0 {
                            axpy(dx, gr, row);
                        }
                    }
                }
            }
            Op::MatTVec(m, x) => {
                let (mv, xv) = (self.value(*m), self.value(*x));
                let cols = mv.cols();
                if let Some(dm) = self.target(*m, buf, grads) {
                    for (row, &xr) in dm.chunks_exact_mut(cols).zip(xv.data()) {
                        axpy(row, xr, g);
                    }
                }
                if let Some(dx) = self.target(*x, buf, grads) {
                    for (d, row) in dx.iter_mut().zip(mv.data().chunks_exact(cols)) {
                        *d += dot(row, g);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = self.target(*b, buf, grads) {
                    axpy(db, 1.0, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = self.target(*b, buf, grads) {
                    axpy(db, -1.0, g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(da) = self.target(*a, buf, grads) {
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                if let Some(db) = self.target(*b, buf, grads) {
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    axpy(da, *k, g);
                }
            }
            Op::MulConst(a, c) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    for ((d, gi), ci) in da.iter_mut().zip(g).zip(c) {
                        *d += gi * ci;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    for ((d, gi), y) in da.iter_mut().zip(g).zip(out) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    for ((d, gi), y) in da.iter_mut().zip(g).zip(out) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if let Some(dp) = self.target(*p, buf, grads) {
                        axpy(dp, 1.0, &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::Slice(a, start) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    axpy(&mut da[*start..*start + g.len()], 1.0, g);
                }
            }
            Op::Stack(rows) => {
                let cols = self.value(NodeId(i)).cols();
                for (r, p) in rows.iter().enumerate() {
                    if let Some(dp) = self.target(*p, buf, grads) {
                        axpy(dp, 1.0, &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(da) = self.target(*a, buf, grads) {
                    axpy(da, g[0], bv);
                }
                if let Some(db) = self.target(*b, buf, grads) {
                    axpy(db, g[0], av);
                }
            }
            Op::Sum(a) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::AddN(parts) => {
                for p in parts {
                    if let Some(dp) = self.target(*p, buf, grads) {
                        axpy(dp, 1.0, g);
                    }
                }
            }
            Op::Softmax(a) => {
                let s = dot(g, out);
                if let Some(da) = self.target(*a, buf, grads) {
                    for ((d, gi), y) in da.iter_mut().zip(g).zip(out) {
                        *d += y * (gi - s);
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let s: f64 = g.iter().sum();
                if let Some(da) = self.target(*a, buf, grads) {
                    for ((d, gi), y) in da.iter_mut().zip(g).zip(out) {
                        *d += gi - y.exp() * s;
                    }
                }
            }
            Op::Pick(a, idx) => {
                if let Some(da) = self.target(*a, buf, grads) {
                    da[*idx] += g[0];
                }
            }
        }
    }
}

/// Softmax over `z` without NaN checks, for internal callers that already
/// validated their logits.
pub(crate) fn softmax_trusted(z: &[f64]) -> Vec<f64> {
    softmax_unchecked(z)
}

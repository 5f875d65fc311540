//! Define-by-run reverse-mode tape over [`Matrix`] values.
//!
//! Every operation appends a [`Tensor`] to the graph and returns a [`Var`]
//! handle. [`Graph::backward`] walks the tape in reverse, and
//! [`ParamStore::accumulate_grads`] folds the leaf gradients into the
//! parameters they were read from.

use crate::matrix::{gemm_a_bt_acc, gemm_at_b_acc, Matrix, Real};
use crate::param::{ParamId, ParamStore};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GradError {
    #[error("backward requires a 1x1 output, got {0}x{1}")]
    NonScalar(usize, usize),
    #[error("output does not depend on any trainable input")]
    Detached,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Real),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Sqrt(Var),
    Clamp(Var, Real, Real),
    Minimum(Var, Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    ColSumSq(Var),
    LayerNorm {
        input: Var,
        mask: Option<Vec<bool>>,
        /// Per row: (std, std + eps).
        stats: Vec<(Real, Real)>,
    },
}

/// One recorded value on the tape.
#[derive(Clone, Debug)]
pub struct Tensor {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Tensor>,
    params: HashMap<(ParamId, bool), Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Tensor {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// A free leaf that does receive a gradient (used by gradient checks on inputs).
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Reads a parameter into the graph. Repeated reads of the same id return
    /// the same leaf. With `trainable == false` the leaf is a constant.
    pub fn param(&mut self, store: &ParamStore, id: ParamId, trainable: bool) -> Var {
        let id = store.local(id);
        if let Some(&v) = self.params.get(&(id, trainable)) {
            return v;
        }
        let v = self.push(store.value(id).clone(), trainable, Op::Leaf);
        self.params.insert((id, trainable), v);
        v
    }

    pub(crate) fn param_leaves(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params
            .iter()
            .filter(|((_, t), _)| *t)
            .map(|((id, _), v)| (*id, *v))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(Real) -> Real) -> Var {
        let value = self.nodes[a.0].value.map(f);
        let rg = self.rg(a);
        self.push(value, rg, op)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.nodes[a.0].shape(),
            self.nodes[b.0].shape(),
            "{what}: shape mismatch"
        );
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(Real, Real) -> Real) -> Var {
        self.same_shape(a, b, "elementwise op");
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, rg, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, rg, Op::MatMul(a, b))
    }

    /// Adds a `1×m` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[bias.0].value;
        assert_eq!(vb.rows(), 1, "bias must be a row vector");
        assert_eq!(va.cols(), vb.cols(), "bias width mismatch");
        let mut value = va.clone();
        for r in 0..value.rows() {
            for (x, &b) in value.row_mut(r).iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(value, rg, Op::AddBias(a, bias))
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Minimum(a, b), |x, y| if x <= y { x } else { y })
    }

    pub fn scale(&mut self, a: Var, c: Real) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: Real) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), Real::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), Real::exp)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |x| x.max(0.0).sqrt())
    }

    pub fn clamp(&mut self, a: Var, lo: Real, hi: Real) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        assert_eq!(va.rows(), vb.rows(), "concat row mismatch");
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let value = Matrix::from_vec(va.rows(), cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, rg, Op::ConcatCols(a, b))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = &self.nodes[a.0].value;
        assert!(start + len <= va.cols(), "column slice out of range");
        let mut data = Vec::with_capacity(va.rows() * len);
        for r in 0..va.rows() {
            data.extend_from_slice(&va.row(r)[start..start + len]);
        }
        let value = Matrix::from_vec(va.rows(), len, data);
        let rg = self.rg(a);
        self.push(value, rg, Op::SliceCols(a, start))
    }

    /// Row sums, `n×m → n×1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let data = (0..va.rows()).map(|r| va.row(r).iter().sum()).collect();
        let value = Matrix::from_vec(va.rows(), 1, data);
        let rg = self.rg(a);
        self.push(value, rg, Op::SumCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.nodes[a.0].value.sum());
        let rg = self.rg(a);
        self.push(value, rg, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let value = Matrix::scalar(va.sum() / va.len() as Real);
        let rg = self.rg(a);
        self.push(value, rg, Op::MeanAll(a))
    }

    /// Per-column sum of squares, `n×m → 1×m`.
    pub fn col_sum_sq(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let mut out = vec![0.0; va.cols()];
        for r in 0..va.rows() {
            for (o, &x) in out.iter_mut().zip(va.row(r)) {
                *o += x * x;
            }
        }
        let value = Matrix::row_vector(out);
        let rg = self.rg(a);
        self.push(value, rg, Op::ColSumSq(a))
    }

    /// Averages equally shaped values.
    pub fn mean_of(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "mean of nothing");
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        self.scale(acc, 1.0 / vars.len() as Real)
    }

    /// Row-wise `(z - mean) / (std + eps)` without affine terms. With a mask,
    /// statistics use only the active columns and inactive outputs are zero.
    pub fn layer_norm(&mut self, a: Var, eps: Real, mask: Option<&[bool]>) -> Var {
        let va = &self.nodes[a.0].value;
        if let Some(m) = mask {
            assert_eq!(m.len(), va.cols(), "layer-norm mask width");
        }
        let (rows, cols) = va.shape();
        let mut out = Matrix::zeros(rows, cols);
        let mut stats = Vec::with_capacity(rows);
        let active = |c: usize| mask.map_or(true, |m| m[c]);
        let n = (0..cols).filter(|&c| active(c)).count();
        for r in 0..rows {
            let z = va.row(r);
            if n == 0 {
                stats.push((0.0, eps));
                continue;
            }
            let mut sum = 0.0;
            for (c, &x) in z.iter().enumerate() {
                if active(c) {
                    sum += x;
                }
            }
            let mean = sum / n as Real;
            let mut ss = 0.0;
            for (c, &x) in z.iter().enumerate() {
                if active(c) {
                    let d = x - mean;
                    ss += d * d;
                }
            }
            let std = (ss / n as Real).sqrt();
            let denom = std + eps;
            let o = out.row_mut(r);
            for (c, &x) in z.iter().enumerate() {
                if active(c) {
                    o[c] = (x - mean) / denom;
                }
            }
            stats.push((std, denom));
        }
        let rg = self.rg(a);
        self.push(
            out,
            rg,
            Op::LayerNorm {
                input: a,
                mask: mask.map(|m| m.to_vec()),
                stats,
            },
        )
    }

    /// Runs reverse accumulation from a scalar output. Node gradients from a
    /// previous call are discarded first; parameter stores accumulate.
    pub fn backward(&mut self, out: Var) -> Result<(), GradError> {
        let (r, c) = self.nodes[out.0].shape();
        if (r, c) != (1, 1) {
            return Err(GradError::NonScalar(r, c));
        }
        if !self.nodes[out.0].requires_grad {
            return Err(GradError::Detached);
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[out.0].grad = Some(Matrix::scalar(1.0));
        for i in (0..=out.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(g) = node.grad.as_ref() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            propagate(before, node, g);
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: Real) -> Real {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn slot(nodes: &mut [Tensor], v: Var) -> Option<&mut Matrix> {
    let n = &mut nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    let (r, c) = n.value.shape();
    Some(n.grad.get_or_insert_with(|| Matrix::zeros(r, c)))
}

fn grad_slot(n: &mut Tensor) -> &mut Matrix {
    let (r, c) = n.value.shape();
    n.grad.get_or_insert_with(|| Matrix::zeros(r, c))
}

/// `(read, write)` views of two distinct nodes.
fn split_pair(nodes: &mut [Tensor], read: usize, write: usize) -> (&Tensor, &mut Tensor) {
    debug_assert_ne!(read, write);
    if read < write {
        let (l, r) = nodes.split_at_mut(write);
        (&l[read], &mut r[0])
    } else {
        let (l, r) = nodes.split_at_mut(read);
        (&r[0], &mut l[write])
    }
}

/// Gradient update that depends on the input's own value.
fn acc_self(nodes: &mut [Tensor], v: Var, g: &Matrix, f: impl Fn(Real, Real) -> Real) {
    let n = &mut nodes[v.0];
    if !n.requires_grad {
        return;
    }
    let (r, c) = n.value.shape();
    let grad = n.grad.get_or_insert_with(|| Matrix::zeros(r, c));
    for ((d, &gv), &x) in grad.data_mut().iter_mut().zip(g.data()).zip(n.value.data()) {
        *d += f(gv, x);
    }
}

fn acc_map(nodes: &mut [Tensor], v: Var, g: &Matrix, f: impl Fn(usize, Real) -> Real) {
    if let Some(dst) = slot(nodes, v) {
        for (i, (d, &gv)) in dst.data_mut().iter_mut().zip(g.data()).enumerate() {
            *d += f(i, gv);
        }
    }
}

fn propagate(nodes: &mut [Tensor], node: &Tensor, g: &Matrix) {
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = nodes[a.0].value.shape();
            let n = nodes[b.0].value.cols();
            if a == b {
                let v = nodes[a.0].value.clone();
                let da = slot(nodes, *a).unwrap();
                gemm_a_bt_acc(g.data(), v.data(), da.data_mut(), m, n, k);
                gemm_at_b_acc(v.data(), g.data(), da.data_mut(), m, k, n);
                return;
            }
            if nodes[a.0].requires_grad {
                let (bn, an) = split_pair(nodes, b.0, a.0);
                let da = grad_slot(an);
                gemm_a_bt_acc(g.data(), bn.value.data(), da.data_mut(), m, n, k);
            }
            if nodes[b.0].requires_grad {
                let (an, bn) = split_pair(nodes, a.0, b.0);
                let db = grad_slot(bn);
                gemm_at_b_acc(an.value.data(), g.data(), db.data_mut(), m, k, n);
            }
        }
        Op::AddBias(a, b) => {
            acc_map(nodes, *a, g, |_, gv| gv);
            if let Some(db) = slot(nodes, *b) {
                for r in 0..g.rows() {
                    for (d, &gv) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += gv;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            acc_map(nodes, *a, g, |_, gv| gv);
            acc_map(nodes, *b, g, |_, gv| gv);
        }
        Op::Sub(a, b) => {
            acc_map(nodes, *a, g, |_, gv| gv);
            acc_map(nodes, *b, g, |_, gv| -gv);
        }
        Op::Mul(a, b) => {
            if a == b {
                acc_self(nodes, *a, g, |gv, x| 2.0 * gv * x);
                return;
            }
            for (src, dst) in [(b, a), (a, b)] {
                if nodes[dst.0].requires_grad {
                    let (sn, dn) = split_pair(nodes, src.0, dst.0);
                    let d = grad_slot(dn);
                    for ((dv, &gv), &sv) in d.data_mut().iter_mut().zip(g.data()).zip(sn.value.data()) {
                        *dv += gv * sv;
                    }
                }
            }
        }
        Op::Minimum(a, b) => {
            let av = nodes[a.0].value.clone();
            let bv = nodes[b.0].value.clone();
            let pick_a = |i: usize| av.data()[i] <= bv.data()[i];
            acc_map(nodes, *a, g, |i, gv| if pick_a(i) { gv } else { 0.0 });
            acc_map(nodes, *b, g, |i, gv| if pick_a(i) { 0.0 } else { gv });
        }
        Op::Scale(a, c) => acc_map(nodes, *a, g, |_, gv| gv * c),
        Op::AddScalar(a) => acc_map(nodes, *a, g, |_, gv| gv),
        Op::Sigmoid(a) => acc_map(nodes, *a, g, |i, gv| {
            let s = y.data()[i];
            gv * s * (1.0 - s)
        }),
        Op::Tanh(a) => acc_map(nodes, *a, g, |i, gv| {
            let t = y.data()[i];
            gv * (1.0 - t * t)
        }),
        Op::Relu(a) => acc_map(nodes, *a, g, |i, gv| if y.data()[i] > 0.0 { gv } else { 0.0 }),
        Op::Exp(a) => acc_map(nodes, *a, g, |i, gv| gv * y.data()[i]),
        Op::Softplus(a) => acc_self(nodes, *a, g, |gv, x| gv * sigmoid(x)),
        Op::Square(a) => acc_self(nodes, *a, g, |gv, x| 2.0 * gv * x),
        Op::Sqrt(a) => acc_map(nodes, *a, g, |i, gv| {
            let s = y.data()[i];
            if s > 0.0 {
                0.5 * gv / s
            } else {
                0.0
            }
        }),
        Op::Clamp(a, lo, hi) => acc_self(nodes, *a, g, |gv, x| {
            if x >= *lo && x <= *hi {
                gv
            } else {
                0.0
            }
        }),
        Op::ConcatCols(a, b) => {
            let ca = nodes[a.0].value.cols();
            let cb = nodes[b.0].value.cols();
            if let Some(da) = slot(nodes, *a) {
                for r in 0..g.rows() {
                    for (d, &gv) in da.row_mut(r).iter_mut().zip(&g.row(r)[..ca]) {
                        *d += gv;
                    }
                }
            }
            if let Some(db) = slot(nodes, *b) {
                for r in 0..g.rows() {
                    for (d, &gv) in db.row_mut(r).iter_mut().zip(&g.row(r)[ca..ca + cb]) {
                        *d += gv;
                    }
                }
            }
        }
        Op::SliceCols(a, start) => {
            let len = g.cols();
            if let Some(da) = slot(nodes, *a) {
                for r in 0..g.rows() {
                    for (d, &gv) in da.row_mut(r)[*start..*start + len].iter_mut().zip(g.row(r)) {
                        *d += gv;
                    }
                }
            }
        }
        Op::SumCols(a) => {
            if let Some(da) = slot(nodes, *a) {
                for r in 0..da.rows() {
                    let gv = g.get(r, 0);
                    da.row_mut(r).iter_mut().for_each(|d| *d += gv);
                }
            }
        }
        Op::SumAll(a) => {
            let gv = g.scalar_value();
            if let Some(da) = slot(nodes, *a) {
                da.data_mut().iter_mut().for_each(|d| *d += gv);
            }
        }
        Op::MeanAll(a) => {
            let gv = g.scalar_value();
            if let Some(da) = slot(nodes, *a) {
                let s = gv / da.len() as Real;
                da.data_mut().iter_mut().for_each(|d| *d += s);
            }
        }
        Op::ColSumSq(a) => {
            let node = &mut nodes[a.0];
            if !node.requires_grad {
                return;
            }
            let (r, c) = node.value.shape();
            let da = node.grad.get_or_insert_with(|| Matrix::zeros(r, c));
            for row in 0..r {
                let x = node.value.row(row);
                for ((d, &xv), &gv) in da.row_mut(row).iter_mut().zip(x).zip(g.data()) {
                    *d += 2.0 * xv * gv;
                }
            }
        }
        Op::LayerNorm { input, mask, stats } => {
            let Some(da) = slot(nodes, *input) else {
                return;
            };
            let cols = y.cols();
            let active = |c: usize| mask.as_ref().map_or(true, |m| m[c]);
            let n = (0..cols).filter(|&c| active(c)).count();
            if n == 0 {
                return;
            }
            let nf = n as Real;
            for r in 0..y.rows() {
                let (std, denom) = stats[r];
                let yr = y.row(r);
                let gr = g.row(r);
                let mut gsum = 0.0;
                let mut gd = 0.0;
                for c in 0..cols {
                    if active(c) {
                        gsum += gr[c];
                        gd += gr[c] * yr[c] * denom;
                    }
                }
                let gmean = gsum / nf;
                let dr = da.row_mut(r);
                for c in 0..cols {
                    if !active(c) {
                        continue;
                    }
                    let mut v = (gr[c] - gmean) / denom;
                    if std > 0.0 {
                        let d = yr[c] * denom;
                        v -= gd / (denom * denom) * d / (nf * std);
                    }
                    dr[c] += v;
                }
            }
        }
    }
}

impl ParamStore {
    /// Adds the gradients the graph computed for this store's trainable leaves.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        let uid = self.uid();
        for (id, v) in graph.param_leaves() {
            if id.store != uid {
                continue;
            }
            if let Some(g) = graph.grad(v) {
                self.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in evaluation order, so node indices
//! are already a topological order. [`Tape::backward`] seeds the 1x1 output
//! with adjoint 1 and sweeps the tape in reverse, accumulating adjoints by
//! addition where a value fans out.
//!
//! Non-differentiable points use subgradient 0: `relu` at 0, `max_scalar`
//! at the threshold, `sqrt` and `frobenius_norm` at 0.

use crate::error::{GipError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    Recip(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Sqrt(Var),
    Sum(Var),
    Trace(Var),
    FrobeniusNorm(Var),
    LogSumExp(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Slice { input: Var, row0: usize, col0: usize },
    MaxScalar(Var, T),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation. Single-threaded; use one tape per thread.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    adjoints: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match &self.adjoints[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.adjoints[v.0].as_ref()
    }
}

fn shape_err<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> GipError {
    GipError::Shape(format!(
        "{op}: left is {}x{}, right is {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

/// Reduce an adjoint to the shape of a possibly scalar-broadcast input.
fn unbroadcast<T: Scalar>(g: Tensor<T>, shape: (usize, usize)) -> Tensor<T> {
    if g.shape() == shape {
        g
    } else {
        Tensor::scalar(g.sum())
    }
}

fn row_softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z = z + *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    out
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives an adjoint.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    pub fn scalar_constant(&mut self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push_leaf(&mut self, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(GipError::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x, y));
        }
        let out = x.matmul_unchecked(y);
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() == y.shape() {
            Ok(x.zip_map(y, f))
        } else if y.is_scalar() {
            let s = y.item();
            Ok(x.map(|v| f(v, s)))
        } else if x.is_scalar() {
            let s = x.item();
            Ok(y.map(|v| f(s, v)))
        } else {
            Err(shape_err(name, x, y))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("div", a, b, |x, y| x / y)?;
        self.push("div", out, Op::Div(a, b), &[a, b])
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let out = self.value(a).map(|x| x + c);
        self.push("add_scalar", out, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("mul_scalar", out, Op::MulScalar(a, c), &[a])
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.recip());
        self.push("recip", out, Op::Recip(a), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.mul_scalar(a, -T::one())
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let out = row_softmax(self.value(a));
        self.push("row_softmax", out, Op::RowSoftmax(a), &[a])
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut out = x.clone();
        let cols = x.cols();
        for row in out.data_mut().chunks_mut(cols.max(1)) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            for v in row.iter_mut() {
                *v = *v - lse;
            }
        }
        self.push("row_log_softmax", out, Op::RowLogSoftmax(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| {
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        });
        self.push("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push("relu", out, Op::Relu(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::ln);
        self.push("log", out, Op::Log(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::exp);
        self.push("exp", out, Op::Exp(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::sqrt);
        self.push("sqrt", out, Op::Sqrt(a), &[a])
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != x.cols() {
            return Err(GipError::Shape(format!("trace of non-square {}x{}", x.rows(), x.cols())));
        }
        let t = (0..x.rows()).map(|i| x[(i, i)]).sum();
        self.push("trace", Tensor::scalar(t), Op::Trace(a), &[a])
    }

    pub fn frobenius_norm(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).data().iter().map(|&x| x * x).sum::<T>().sqrt();
        self.push("frobenius_norm", Tensor::scalar(n), Op::FrobeniusNorm(a), &[a])
    }

    /// `log Σ exp(x)` over all entries, evaluated with max-shift.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let m = x.data().iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + x.data().iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        self.push("log_sum_exp", Tensor::scalar(lse), Op::LogSumExp(a), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map(|&v| self.shape(v).1).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let x = self.value(p);
            if x.cols() != cols {
                return Err(shape_err("concat_rows", self.value(parts[0]), x));
            }
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&v| self.shape(v).0).unwrap_or(0);
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(shape_err("concat_cols", self.value(parts[0]), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rectangular block `[row0, row0+rows) x [col0, col0+cols)`.
    pub fn slice(&mut self, a: Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let x = self.value(a);
        if row0 + rows > x.rows() || col0 + cols > x.cols() {
            return Err(GipError::Shape(format!(
                "slice [{row0}+{rows}, {col0}+{cols}] out of {}x{}",
                x.rows(),
                x.cols()
            )));
        }
        let out = Tensor::from_fn(rows, cols, |i, j| x[(row0 + i, col0 + j)]);
        self.push("slice", out, Op::Slice { input: a, row0, col0 }, &[a])
    }

    pub fn max_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(c));
        self.push("max_scalar", out, Op::MaxScalar(a, c), &[a])
    }

    // Composite helpers built from the primitives above.

    /// `x + 1·b` where `b` is a 1xF row broadcast over the N rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let n = self.shape(x).0;
        let ones = self.constant(Tensor::ones(n, 1));
        let tiled = self.matmul(ones, b)?;
        self.add(x, tiled)
    }

    /// Sum over rows: 1xF column totals.
    pub fn col_sums(&mut self, x: Var) -> Result<Var> {
        let n = self.shape(x).0;
        let ones = self.constant(Tensor::ones(1, n));
        self.matmul(ones, x)
    }

    /// Sum over columns: Nx1 row totals.
    pub fn row_sums(&mut self, x: Var) -> Result<Var> {
        let f = self.shape(x).1;
        let ones = self.constant(Tensor::ones(f, 1));
        self.matmul(x, ones)
    }

    /// Replicate an Nx1 column across `cols` columns.
    pub fn tile_col(&mut self, x: Var, cols: usize) -> Result<Var> {
        let ones = self.constant(Tensor::ones(1, cols));
        self.matmul(x, ones)
    }

    /// Reverse sweep from a 1x1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.value(output);
        if !out.is_scalar() {
            return Err(GipError::NonScalarOutput { rows: out.rows(), cols: out.cols() });
        }
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        adj.resize(self.nodes.len(), None);
        Ok(Gradients { adjoints: adj, shapes })
    }

    fn accumulate(&self, adj: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let g = unbroadcast(g, self.shape(v));
        match &mut adj[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a = *a + *b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, adj: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(adj, *a, g.matmul_t(self.value(*b)));
                }
                if self.wants(*b) {
                    self.accumulate(adj, *b, self.value(*a).t_matmul(g));
                }
            }
            Op::Transpose(a) => self.accumulate(adj, *a, g.transpose()),
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (x, z) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    self.accumulate(adj, *a, broadcast_zip(g, z, |gi, zi| gi * zi));
                }
                if self.wants(*b) {
                    self.accumulate(adj, *b, broadcast_zip(g, x, |gi, xi| gi * xi));
                }
            }
            Op::Div(a, b) => {
                let z = self.value(*b);
                if self.wants(*a) {
                    self.accumulate(adj, *a, broadcast_zip(g, z, |gi, zi| gi / zi));
                }
                if self.wants(*b) {
                    // d(x/z)/dz = -y/z
                    let gy = g.zip_map(y, |gi, yi| gi * yi);
                    self.accumulate(adj, *b, broadcast_zip(&gy, z, |v, zi| -v / zi));
                }
            }
            Op::AddScalar(a) => self.accumulate(adj, *a, g.clone()),
            Op::MulScalar(a, c) => self.accumulate(adj, *a, g.map(|v| v * *c)),
            Op::Recip(a) => self.accumulate(adj, *a, g.zip_map(y, |gi, yi| -gi * yi * yi)),
            Op::RowSoftmax(a) => {
                let cols = y.cols().max(1);
                let mut dx = g.zip_map(y, |gi, yi| gi * yi);
                for (row, yrow) in dx.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                    let s: T = row.iter().copied().sum();
                    for (d, &yi) in row.iter_mut().zip(yrow) {
                        *d = *d - yi * s;
                    }
                }
                self.accumulate(adj, *a, dx);
            }
            Op::RowLogSoftmax(a) => {
                let cols = y.cols().max(1);
                let mut dx = g.clone();
                for (row, yrow) in dx.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                    let s: T = row.iter().copied().sum();
                    for (d, &yi) in row.iter_mut().zip(yrow) {
                        *d = *d - yi.exp() * s;
                    }
                }
                self.accumulate(adj, *a, dx);
            }
            Op::Sigmoid(a) => {
                self.accumulate(adj, *a, g.zip_map(y, |gi, yi| gi * yi * (T::one() - yi)))
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accumulate(adj, *a, g.zip_map(x, |gi, xi| if xi > T::zero() { gi } else { T::zero() }))
            }
            Op::Log(a) => {
                let x = self.value(*a);
                self.accumulate(adj, *a, g.zip_map(x, |gi, xi| gi / xi))
            }
            Op::Exp(a) => self.accumulate(adj, *a, g.zip_map(y, |gi, yi| gi * yi)),
            Op::Sqrt(a) => self.accumulate(
                adj,
                *a,
                g.zip_map(y, |gi, yi| if yi > T::zero() { gi / (yi + yi) } else { T::zero() }),
            ),
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(adj, *a, Tensor::full(r, c, g.item()));
            }
            Op::Trace(a) => {
                let n = self.shape(*a).0;
                self.accumulate(adj, *a, Tensor::identity(n).map(|v| v * g.item()));
            }
            Op::FrobeniusNorm(a) => {
                let norm = y.item();
                let gi = g.item();
                let x = self.value(*a);
                let dx = if norm > T::zero() { x.map(|v| gi * v / norm) } else { Tensor::zeros(x.rows(), x.cols()) };
                self.accumulate(adj, *a, dx);
            }
            Op::LogSumExp(a) => {
                let lse = y.item();
                let gi = g.item();
                self.accumulate(adj, *a, self.value(*a).map(|v| gi * (v - lse).exp()));
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let r = self.shape(p).0;
                    if self.wants(p) {
                        let block = g.data()[offset * cols..(offset + r) * cols].to_vec();
                        self.accumulate(adj, p, Tensor::from_vec(r, cols, block).expect("concat block"));
                    }
                    offset += r;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.wants(p) {
                        let block = Tensor::from_fn(r, c, |i, j| g[(i, offset + j)]);
                        self.accumulate(adj, p, block);
                    }
                    offset += c;
                }
            }
            Op::Slice { input, row0, col0 } => {
                let (r, c) = self.shape(*input);
                let mut dx = Tensor::zeros(r, c);
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        dx[(row0 + i, col0 + j)] = g[(i, j)];
                    }
                }
                self.accumulate(adj, *input, dx);
            }
            Op::MaxScalar(a, c) => {
                let x = self.value(*a);
                self.accumulate(adj, *a, g.zip_map(x, |gi, xi| if xi > *c { gi } else { T::zero() }))
            }
        }
    }
}

/// `f(g, other)` elementwise, where `other` may be a broadcast 1x1.
fn broadcast_zip<T: Scalar>(g: &Tensor<T>, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    if other.shape() == g.shape() {
        g.zip_map(other, f)
    } else if other.is_scalar() {
        let s = other.item();
        g.map(|v| f(v, s))
    } else {
        unreachable!("elementwise outputs always carry the larger operand's shape")
    }
}

//! Reverse-mode tape over batched row-major matrices.
//!
//! Every recorded value is a matrix whose rows are independent items (samples,
//! or graph nodes across samples). Parameters are read from a borrowed
//! [`ParameterStore`]; [`Tape::backward`] accumulates into a [`Gradients`]
//! with the store's layout, for frozen groups as well as trainable ones.

use std::rc::Rc;

use super::params::{Gradients, ParamId, ParameterStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    /// `x · Wᵀ + b` with `W` stored out×in.
    Linear {
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    /// `out[r] += x[s]` for each (s, r).
    ScatterSum {
        x: Var,
        pairs: Rc<[(usize, usize)]>,
    },
    GatherRows {
        x: Var,
        rows: Rc<[usize]>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
}

/// Adjoints of every recorded value after a backward pass.
pub struct Adjoints {
    adj: Vec<Option<Tensor>>,
}

impl Adjoints {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adj[v.0].as_ref()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// A leaf whose adjoint is reported by [`Tape::backward`].
    pub fn input_with_grad(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    pub fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Result<Var> {
        let wt = self.store.get(w);
        let xv = self.value(x);
        let (n, d_in, d_out) = (xv.rows(), wt.cols(), wt.rows());
        if xv.cols() != d_in {
            return Err(Error::Shape(format!(
                "linear layer expects width {d_in}, got {}",
                xv.cols()
            )));
        }
        let mut out = Tensor::zeros(n, d_out);
        gemm(n, d_in, d_out, (xv.data(), d_in, 1), (wt.data(), 1, d_in), 0.0, out.data_mut());
        if let Some(b) = b {
            let bias = self.store.get(b);
            if bias.len() != d_out {
                return Err(Error::Shape(format!("bias of length {} for width {d_out}", bias.len())));
            }
            for row in out.data_mut().chunks_exact_mut(d_out) {
                for (y, bj) in row.iter_mut().zip(bias.data()) {
                    *y += bj;
                }
            }
        }
        Ok(self.push(out, Op::Linear { x, w, b }, true))
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(av, bv, what)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let rg = self.needs(x);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.needs(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Sums source rows into `out_rows` destination rows along `(src, dst)` pairs.
    pub fn scatter_sum(&mut self, x: Var, pairs: Rc<[(usize, usize)]>, out_rows: usize) -> Result<Var> {
        let xv = self.value(x);
        let width = xv.cols();
        if let Some(&(s, r)) = pairs.iter().find(|(s, r)| *s >= xv.rows() || *r >= out_rows) {
            return Err(Error::Shape(format!("scatter pair ({s}, {r}) out of range")));
        }
        let mut out = Tensor::zeros(out_rows, width);
        let dst = out.data_mut();
        for &(s, r) in pairs.iter() {
            let src = &xv.data()[s * width..(s + 1) * width];
            for (o, v) in dst[r * width..(r + 1) * width].iter_mut().zip(src) {
                *o += v;
            }
        }
        let rg = self.needs(x);
        Ok(self.push(out, Op::ScatterSum { x, pairs }, rg))
    }

    pub fn gather_rows(&mut self, x: Var, rows: Rc<[usize]>) -> Result<Var> {
        let xv = self.value(x);
        let width = xv.cols();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows.iter() {
            if r >= xv.rows() {
                return Err(Error::Shape(format!("gather row {r} out of range")));
            }
            data.extend_from_slice(xv.row(r));
        }
        let out = Tensor::from_vec(rows.len(), width, data)?;
        let rg = self.needs(x);
        Ok(self.push(out, Op::GatherRows { x, rows }, rg))
    }

    /// Back-propagates `seed = ∂loss/∂output` and adds parameter gradients into `grads`.
    pub fn backward(&self, output: Var, seed: Tensor, grads: &mut Gradients) -> Result<Adjoints> {
        same_shape(&seed, self.value(output), "backward seed")?;
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = adj[i].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Linear { x, w, b } => {
                    let wt = self.store.get(*w);
                    let xv = self.value(*x);
                    let (n, d_in, d_out) = (xv.rows(), wt.cols(), wt.rows());
                    if self.needs(*x) {
                        let (dx, beta) = slot(&mut adj, *x, n, d_in);
                        gemm(n, d_out, d_in, (dy.data(), d_out, 1), (wt.data(), d_in, 1), beta, dx.data_mut());
                    }
                    let dw = grads.get_mut(*w);
                    gemm(d_out, n, d_in, (dy.data(), 1, d_out), (xv.data(), d_in, 1), 1.0, dw.data_mut());
                    if let Some(b) = b {
                        let db = grads.get_mut(*b).data_mut();
                        for row in dy.data().chunks_exact(d_out) {
                            for (g, d) in db.iter_mut().zip(row) {
                                *g += d;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            accumulate(&mut adj, v, &dy, |d| d);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut adj, *a, &dy, |d| d);
                    }
                    if self.needs(*b) {
                        accumulate(&mut adj, *b, &dy, |d| -d);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let other = self.value(*b).data();
                        accumulate_indexed(&mut adj, *a, &dy, |k, d| d * other[k]);
                    }
                    if self.needs(*b) {
                        let other = self.value(*a).data();
                        accumulate_indexed(&mut adj, *b, &dy, |k, d| d * other[k]);
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    accumulate_indexed(&mut adj, *x, &dy, |k, d| d * (1.0 - y[k] * y[k]));
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    accumulate_indexed(&mut adj, *x, &dy, |k, d| d * y[k] * (1.0 - y[k]));
                }
                Op::ScatterSum { x, pairs } => {
                    let xv = self.value(*x);
                    let width = xv.cols();
                    let (dx, beta) = slot(&mut adj, *x, xv.rows(), width);
                    if beta == 0.0 {
                        dx.data_mut().fill(0.0);
                    }
                    let dxd = dx.data_mut();
                    for &(s, r) in pairs.iter() {
                        let src = &dy.data()[r * width..(r + 1) * width];
                        for (o, v) in dxd[s * width..(s + 1) * width].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
                Op::GatherRows { x, rows } => {
                    let xv = self.value(*x);
                    let width = xv.cols();
                    let (dx, beta) = slot(&mut adj, *x, xv.rows(), width);
                    if beta == 0.0 {
                        dx.data_mut().fill(0.0);
                    }
                    let dxd = dx.data_mut();
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, v) in dxd[r * width..(r + 1) * width].iter_mut().zip(dy.row(k)) {
                            *o += v;
                        }
                    }
                }
            }
            adj[i] = Some(dy);
        }
        Ok(Adjoints { adj })
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

/// Adjoint buffer for `v`, plus the `beta` to use when writing into it with
/// gemm (0 for a fresh buffer, 1 to accumulate).
fn slot(adj: &mut [Option<Tensor>], v: Var, rows: usize, cols: usize) -> (&mut Tensor, f64) {
    let fresh = adj[v.0].is_none();
    let t = adj[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols));
    (t, if fresh { 0.0 } else { 1.0 })
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, dy: &Tensor, f: impl Fn(f64) -> f64) {
    accumulate_indexed(adj, v, dy, |_, d| f(d));
}

fn accumulate_indexed(adj: &mut [Option<Tensor>], v: Var, dy: &Tensor, f: impl Fn(usize, f64) -> f64) {
    match &mut adj[v.0] {
        Some(t) => {
            for (k, (o, &d)) in t.data_mut().iter_mut().zip(dy.data()).enumerate() {
                *o += f(k, d);
            }
        }
        slot @ None => {
            let data = dy.data().iter().enumerate().map(|(k, &d)| f(k, d)).collect();
            *slot = Some(Tensor::from_vec(dy.rows(), dy.cols(), data).expect("shape preserved"));
        }
    }
}

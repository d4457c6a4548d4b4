//! Reverse-mode automatic differentiation over a fixed primitive set.
//!
//! A [`Tape`] records every primitive applied during the forward pass; calling
//! [`Tape::backward`] walks the record in reverse and accumulates
//! vector-Jacobian products. Nodes that depend on no parameter carry no
//! gradient and their backward rules are skipped.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::tensor::gemm;
use super::{trig, SparseMatrix, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A primitive whose forward value is computed outside the tape and whose
/// vector-Jacobian product is supplied by the implementor.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input; entries whose `needs` flag is false may
    /// be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sin(Var),
    /// Keeps `c·cos(c·a)` for the backward pass.
    SinScaled(Var, Tensor),
    Cos(Var),
    Exp(Var),
    Abs(Var),
    Relu(Var),
    Powf(Var, f64),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Sparse(Arc<SparseMatrix>, Var),
    ConcatCols(Vec<Var>),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Wengert list of recorded primitives.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `like`'s shape when nothing flowed into it.
    pub fn take_or_zeros(&mut self, v: Var, like: &Tensor) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn binary_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    a.same_shape(b, what)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).dims2()?;
        let (br, bc) = self.value(b).dims2()?;
        if ac != br {
            return Err(Error::build(format!("matmul: [{ar},{ac}] x [{br},{bc}]")));
        }
        let out = gemm(self.value(a).data(), (ar, ac), false, self.value(b).data(), (br, bc), false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![ar, bc], out)?, Op::MatMul(a, b), rg))
    }

    /// `x w + b` with `x: [n, k]`, `w: [k, m]` and `b: [m]` added to every row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xr, xc) = self.value(x).dims2()?;
        let (wr, wc) = self.value(w).dims2()?;
        if xc != wr || self.value(b).shape() != [wc] {
            return Err(Error::build(format!(
                "affine: [{xr},{xc}] x [{wr},{wc}] + {:?}",
                self.value(b).shape()
            )));
        }
        let mut out = gemm(self.value(x).data(), (xr, xc), false, self.value(w).data(), (wr, wc), false);
        let bias = self.value(b).data();
        for row in out.chunks_mut(wc.max(1)) {
            for (o, bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::new(vec![xr, wc], out)?, Op::Affine(x, w, b), rg))
    }

    /// Adds a row vector `b` of shape `[m]` to every row of `a` (`[n, m]`).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = self.value(a).dims2()?;
        if self.value(b).shape() != [m] {
            return Err(Error::build(format!(
                "add_row: bias {:?} for [{n},{m}]",
                self.value(b).shape()
            )));
        }
        let bias = self.value(b).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(m.max(1)) {
            for (o, bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::AddRow(a, b), rg))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        binary_shape(self.value(a), self.value(b), what)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, trig::sin, Op::Sin(a))
    }

    /// `sin(c·a)`.
    pub fn sin_scaled(&mut self, a: Var, c: f64) -> Var {
        let x = self.value(a);
        let mut sin = vec![0.0; x.len()];
        let mut dcos = vec![0.0; x.len()];
        for ((s, d), &v) in sin.iter_mut().zip(dcos.iter_mut()).zip(x.data()) {
            let (sv, cv) = trig::sin_cos(c * v);
            *s = sv;
            *d = c * cv;
        }
        let shape = x.shape().to_vec();
        let rg = self.rg(a);
        let value = Tensor::new(shape.clone(), sin).expect("shape preserved");
        let deriv = Tensor::new(shape, dcos).expect("shape preserved");
        self.push(value, Op::SinScaled(a, deriv), rg)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, trig::cos, Op::Cos(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, |x| x.powf(p), Op::Powf(a, p))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::build("mean of an empty tensor"));
        }
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s / n as f64), Op::Mean(a), rg))
    }

    /// Applies a fixed sparse operator: `A x`.
    pub fn sparse(&mut self, a: Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let value = a.apply(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Sparse(a, x), rg))
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::build("concat of nothing"))?;
        let (n, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != n {
                return Err(Error::build(format!("concat_cols: {r} rows vs {n}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..n {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(vec![n, total], out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Records a primitive whose value was computed by the caller.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], output: Tensor) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(output, Op::Custom(op, inputs.to_vec()), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::build(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let acc = |grads: &mut Vec<Option<Tensor>>, v: Var, t: Tensor| {
                if !self.rg(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let va = self.value(*a);
                    let vb = self.value(*b);
                    let (ar, ac) = va.dims2()?;
                    let (br, bc) = vb.dims2()?;
                    if self.rg(*a) {
                        let ga = gemm(g.data(), (ar, bc), false, vb.data(), (br, bc), true);
                        acc(&mut grads, *a, Tensor::new(vec![ar, ac], ga)?);
                    }
                    if self.rg(*b) {
                        let gb = gemm(va.data(), (ar, ac), true, g.data(), (ar, bc), false);
                        acc(&mut grads, *b, Tensor::new(vec![br, bc], gb)?);
                    }
                }
                Op::Affine(x, w, b) => {
                    let vx = self.value(*x);
                    let vw = self.value(*w);
                    let (xr, xc) = vx.dims2()?;
                    let (wr, wc) = vw.dims2()?;
                    if self.rg(*b) {
                        let mut gb = vec![0.0; wc];
                        for row in g.data().chunks(wc.max(1)) {
                            for (s, v) in gb.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                        acc(&mut grads, *b, Tensor::new(vec![wc], gb)?);
                    }
                    if self.rg(*w) {
                        let gw = gemm(vx.data(), (xr, xc), true, g.data(), (xr, wc), false);
                        acc(&mut grads, *w, Tensor::new(vec![wr, wc], gw)?);
                    }
                    if self.rg(*x) {
                        let gx = gemm(g.data(), (xr, wc), false, vw.data(), (wr, wc), true);
                        acc(&mut grads, *x, Tensor::new(vec![xr, xc], gx)?);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.rg(*b) {
                        let (_, m) = g.dims2()?;
                        let mut gb = vec![0.0; m];
                        for row in g.data().chunks(m.max(1)) {
                            for (s, v) in gb.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                        acc(&mut grads, *b, Tensor::new(vec![m], gb)?);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        acc(&mut grads, *b, g.clone());
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        acc(&mut grads, *b, g.map(|x| -x));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, hadamard(&g, self.value(*b)));
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, hadamard(&g, self.value(*a)));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| c * x)),
                Op::Offset(a) => acc(&mut grads, *a, g),
                Op::Sin(a) => acc(&mut grads, *a, zip_map(&g, self.value(*a), |gg, x| gg * trig::cos(x))),
                Op::SinScaled(a, deriv) => acc(&mut grads, *a, hadamard(&g, deriv)),
                Op::Square(a) => acc(&mut grads, *a, zip_map(&g, self.value(*a), |gg, x| 2.0 * gg * x)),
                Op::Cos(a) => acc(&mut grads, *a, zip_map(&g, self.value(*a), |gg, x| -gg * trig::sin(x))),
                Op::Exp(a) => acc(&mut grads, *a, hadamard(&g, &node.value)),
                Op::Abs(a) => acc(&mut grads, *a, zip_map(&g, self.value(*a), |gg, x| gg * sign(x))),
                Op::Relu(a) => acc(
                    &mut grads,
                    *a,
                    zip_map(&g, self.value(*a), |gg, x| if x > 0.0 { gg } else { 0.0 }),
                ),
                Op::Powf(a, p) => {
                    let p = *p;
                    acc(
                        &mut grads,
                        *a,
                        zip_map(&g, self.value(*a), |gg, x| gg * p * x.powf(p - 1.0)),
                    )
                }
                Op::Sum(a) => {
                    let s = g.item();
                    acc(&mut grads, *a, Tensor::full(self.value(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    acc(&mut grads, *a, Tensor::full(self.value(*a).shape(), g.item() / n));
                }
                Op::Sparse(m, x) => acc(&mut grads, *x, m.apply_transpose(&g)?),
                Op::ConcatCols(parts) => {
                    let (n, total) = g.dims2()?;
                    let mut off = 0;
                    for &p in parts {
                        let (_, w) = self.value(p).dims2()?;
                        if self.rg(p) {
                            let mut gp = vec![0.0; n * w];
                            for r in 0..n {
                                gp[r * w..(r + 1) * w]
                                    .copy_from_slice(&g.data()[r * total + off..r * total + off + w]);
                            }
                            acc(&mut grads, p, Tensor::new(vec![n, w], gp)?);
                        }
                        off += w;
                    }
                }
                Op::Custom(op, inputs) => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                    let needs: Vec<bool> = inputs.iter().map(|&v| self.rg(v)).collect();
                    let out = op.backward(&vals, &node.value, &g, &needs)?;
                    if out.len() != inputs.len() {
                        return Err(Error::build(format!(
                            "custom op `{}` returned {} gradients for {} inputs",
                            op.name(),
                            out.len(),
                            inputs.len()
                        )));
                    }
                    for ((&v, gv), need) in inputs.iter().zip(out).zip(needs) {
                        match gv {
                            Some(t) => {
                                self.value(v).same_shape(&t, op.name())?;
                                acc(&mut grads, v, t)
                            }
                            None if need => {
                                return Err(Error::build(format!(
                                    "custom op `{}` gave no gradient for a differentiable input",
                                    op.name()
                                )))
                            }
                            None => {}
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Sign with `sign(0) = 0`, the subgradient used for absolute values.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked at record time")
}

/// Evaluates `f` on fresh leaves for `params` and returns the scalar loss and
/// one gradient per parameter.
pub fn value_and_grad<F>(params: &[Tensor], f: F) -> Result<(f64, Vec<Tensor>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::TrainingDiverged { step: 0, loss: value });
    }
    let mut grads = tape.backward(loss)?;
    let out = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.take_or_zeros(v, p))
        .collect();
    Ok((value, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_at_zero() {
        let (loss, g) = value_and_grad(&[Tensor::scalar(0.0)], |t, v| {
            let s = t.sin(v[0]);
            Ok(t.sum(s))
        })
        .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g[0].item(), 1.0);
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let (loss, g) = value_and_grad(&[x], |t, v| {
            let s = t.square(v[0]);
            Ok(t.sum(s))
        })
        .unwrap();
        assert_eq!(loss, 5.0);
        assert_eq!(g[0].data(), &[2.0, 4.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(3.0));
        let p = tape.param(Tensor::scalar(2.0));
        let m = tape.mul(c, p).unwrap();
        let grads = tape.backward(m).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().item(), 3.0);
    }

    #[test]
    fn matmul_and_bias_gradients() {
        // loss = sum(x W + b)
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![2, 1], vec![0.5, -1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![0.25]).unwrap();
        let (loss, g) = value_and_grad(&[x, w, b], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_row(y, v[2])?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!((loss - (-1.5 - 2.5 + 0.5)).abs() < 1e-12);
        assert_eq!(g[0].data(), &[0.5, -1.0, 0.5, -1.0]);
        assert_eq!(g[1].data(), &[4.0, 6.0]);
        assert_eq!(g[2].data(), &[2.0]);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let x = Tensor::new(vec![3], vec![-2.0, 0.0, 1.0]).unwrap();
        let (_, g) = value_and_grad(&[x], |t, v| {
            let a = t.abs(v[0]);
            Ok(t.sum(a))
        })
        .unwrap();
        assert_eq!(g[0].data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let err = value_and_grad(&[Tensor::scalar(0.0)], |t, v| {
            let l = t.powf(v[0], -1.0);
            Ok(t.sum(l))
        })
        .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }));
    }

    #[test]
    fn shape_mismatch_is_build_error() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(&[2]));
        let b = tape.param(Tensor::zeros(&[3]));
        assert!(matches!(tape.add(a, b), Err(Error::Build(_))));
    }

    #[test]
    fn concat_routes_gradients() {
        let a = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let (_, g) = value_and_grad(&[a, b], |t, v| {
            let c = t.concat_cols(&[v[0], v[1]])?;
            let w = t.constant(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0])?);
            let y = t.matmul(c, w)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert_eq!(g[0].data(), &[1.0, 1.0]);
        assert_eq!(g[1].data(), &[2.0, 3.0, 2.0, 3.0]);
    }
}

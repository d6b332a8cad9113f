//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! Every node holds a materialized [`Matrix`]. Complex quantities are carried
//! as a [`CVar`], a pair of real nodes; real linear maps act on both planes
//! through the ordinary matmul rule, so no complex-specific backward rules
//! are needed.

use std::fmt;
use std::sync::Arc;

use crate::error::{dim_err, Error, Result};
use crate::numeric::Matrix;

/// Lower bound applied to the second distribution inside [`Tape::kl_div`].
pub const KL_FLOOR: f64 = 1e-12;
/// Smoothing used by the Frobenius-norm backward rule at the origin.
pub const FROBENIUS_EPS: f64 = 1e-8;
/// Rows with a smaller norm are rejected by [`Tape::l2_normalize_rows`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A complex node: real plane and imaginary plane of identical shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

/// A matrix-valued function of one scalar, with its derivative.
///
/// Used to put order-dependent transforms on the tape without the tape
/// knowing how they are built.
pub trait MatrixPath: Send + Sync {
    fn value(&self, t: f64) -> Matrix;
    fn derivative(&self, t: f64) -> Matrix;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    Transpose(Var),
    HStack(Vec<Var>),
    VStack(Vec<Var>),
    L2NormalizeRows(Var),
    KlDiv { p: Var, q: Var },
    CrossEntropy { logits: Var, labels: Vec<usize> },
    FrobeniusNorm(Var),
    Sum(Var),
    Path { t: Var, path: Arc<dyn MatrixPath> },
    Opaque { name: &'static str, parents: Vec<Var> },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::MeanRows(..) => "mean_rows",
            Op::Transpose(..) => "transpose",
            Op::HStack(..) => "hstack",
            Op::VStack(..) => "vstack",
            Op::L2NormalizeRows(..) => "l2_normalize_rows",
            Op::KlDiv { .. } => "kl_div",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::FrobeniusNorm(..) => "frobenius_norm",
            Op::Sum(..) => "sum",
            Op::Path { .. } => "matrix_path",
            Op::Opaque { name, .. } => name,
        };
        f.write_str(name)
    }
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records operations for one forward pass. Not shared across threads.
#[derive(Default)]
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn cvalue(&self, v: CVar) -> crate::numeric::ComplexMatrix {
        crate::numeric::ComplexMatrix { re: self.value(v.re).clone(), im: self.value(v.im).clone() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node. Gradients are reported for every leaf; callers decide
    /// which leaves are parameters.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn complex_leaf(&mut self, value: crate::numeric::ComplexMatrix) -> CVar {
        CVar { re: self.leaf(value.re), im: self.leaf(value.im) }
    }

    /// Records a value derived by a non-differentiable rule. Backward fails
    /// if any gradient reaches it.
    pub fn opaque(&mut self, name: &'static str, value: Matrix, parents: Vec<Var>) -> Var {
        self.push(value, Op::Opaque { name, parents })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Adds the `1 × n` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let v = self.value(a).add_row_broadcast(self.value(r))?;
        Ok(self.push(v, Op::AddRow(a, r)))
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        let v = self.value(a).scale(alpha);
        self.push(v, Op::Scale(a, alpha))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = softmax_rows(self.value(a))?;
        Ok(self.push(v, Op::SoftmaxRows(a)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_rows();
        self.push(v, Op::MeanRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let blocks: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hstack(&blocks)?;
        Ok(self.push(v, Op::HStack(parts.to_vec())))
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("vstack of nothing");
        }
        let blocks: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::vstack(&blocks)?;
        Ok(self.push(v, Op::VStack(parts.to_vec())))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let v = l2_normalize_rows(self.value(a))?;
        Ok(self.push(v, Op::L2NormalizeRows(a)))
    }

    /// `Σ p·ln(p / max(q, KL_FLOOR))` for two `1 × n` distributions.
    pub fn kl_div(&mut self, p: Var, q: Var) -> Result<Var> {
        let v = kl_divergence(self.value(p).as_slice(), self.value(q).as_slice())?;
        Ok(self.push(Matrix::scalar(v), Op::KlDiv { p, q }))
    }

    /// Mean softmax cross-entropy of a `B × C` logit block.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        if z.rows() != labels.len() || z.rows() == 0 {
            return dim_err(format!("{} logit rows for {} labels", z.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= z.cols()) {
            return dim_err(format!("label {bad} with {} classes", z.cols()));
        }
        let mut total = 0.0;
        for (b, &y) in labels.iter().enumerate() {
            total += log_sum_exp(z.row(b)) - z[(b, y)];
        }
        let v = total / labels.len() as f64;
        Ok(self.push(Matrix::scalar(v), Op::CrossEntropy { logits, labels: labels.to_vec() }))
    }

    /// Exact Frobenius norm; the backward rule uses `X / √(‖X‖² + ε²)`.
    pub fn frobenius_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).frobenius_norm();
        self.push(Matrix::scalar(v), Op::FrobeniusNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum();
        self.push(Matrix::scalar(v), Op::Sum(a))
    }

    /// Evaluates `path` at the scalar held by `t`.
    pub fn path(&mut self, t: Var, path: Arc<dyn MatrixPath>) -> Result<Var> {
        let tv = self.value(t);
        if tv.shape() != (1, 1) {
            return dim_err("matrix path parameter must be a 1x1 node");
        }
        let v = path.value(tv.item());
        Ok(self.push(v, Op::Path { t, path }))
    }

    // Complex helpers. Real matrices act on both planes.

    pub fn cmatmul_real(&mut self, a: CVar, w: Var) -> Result<CVar> {
        Ok(CVar { re: self.matmul(a.re, w)?, im: self.matmul(a.im, w)? })
    }

    /// `a · w` where both are complex.
    pub fn cmatmul(&mut self, a: CVar, w: CVar) -> Result<CVar> {
        let rr = self.matmul(a.re, w.re)?;
        let ii = self.matmul(a.im, w.im)?;
        let ri = self.matmul(a.re, w.im)?;
        let ir = self.matmul(a.im, w.re)?;
        Ok(CVar { re: self.sub(rr, ii)?, im: self.add(ri, ir)? })
    }

    pub fn cadd(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar { re: self.add(a.re, b.re)?, im: self.add(a.im, b.im)? })
    }

    pub fn cadd_row(&mut self, a: CVar, r: CVar) -> Result<CVar> {
        Ok(CVar { re: self.add_row(a.re, r.re)?, im: self.add_row(a.im, r.im)? })
    }

    pub fn cscale(&mut self, a: CVar, alpha: f64) -> CVar {
        CVar { re: self.scale(a.re, alpha), im: self.scale(a.im, alpha) }
    }

    pub fn crelu(&mut self, a: CVar) -> CVar {
        CVar { re: self.relu(a.re), im: self.relu(a.im) }
    }

    pub fn cmean_rows(&mut self, a: CVar) -> CVar {
        CVar { re: self.mean_rows(a.re), im: self.mean_rows(a.im) }
    }

    /// `[Re | Im]` as one real node.
    pub fn flatten(&mut self, a: CVar) -> Result<Var> {
        self.hstack(&[a.re, a.im])
    }

    /// Reverse sweep from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return dim_err("backward needs a scalar loss node");
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut visited = 0usize;

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            visited += 1;
            let node = &self.nodes[idx];
            let acc = |v: Var, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                accumulate(&mut grads[v.0], delta);
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.scale(-1.0), &mut grads);
                }
                Op::AddRow(a, r) => {
                    let col_sum = Matrix::filled(1, g.rows(), 1.0).matmul(&g)?;
                    acc(*a, g, &mut grads);
                    acc(*r, col_sum, &mut grads);
                }
                Op::Scale(a, alpha) => acc(*a, g.scale(*alpha), &mut grads),
                Op::Relu(a) => {
                    let mask = self.value(*a);
                    acc(*a, g.zip_map(mask, |gi, x| if x > 0.0 { gi } else { 0.0 }), &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut out = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let s: f64 = y.row(r).iter().zip(g.row(r)).map(|(yi, gi)| yi * gi).sum();
                        for c in 0..y.cols() {
                            out[(r, c)] = y[(r, c)] * (g[(r, c)] - s);
                        }
                    }
                    acc(*a, out, &mut grads);
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).rows();
                    let inv = 1.0 / rows as f64;
                    let out = Matrix::from_fn(rows, g.cols(), |_, c| g[(0, c)] * inv);
                    acc(*a, out, &mut grads);
                }
                Op::Transpose(a) => acc(*a, g.transpose(), &mut grads),
                Op::HStack(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let part = Matrix::from_fn(g.rows(), w, |r, c| g[(r, offset + c)]);
                        offset += w;
                        acc(*p, part, &mut grads);
                    }
                }
                Op::VStack(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = self.value(*p).rows();
                        let part = Matrix::from_fn(h, g.cols(), |r, c| g[(offset + r, c)]);
                        offset += h;
                        acc(*p, part, &mut grads);
                    }
                }
                Op::L2NormalizeRows(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut out = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = crate::numeric::matrix::dot(x.row(r), x.row(r)).sqrt();
                        let yg = crate::numeric::matrix::dot(y.row(r), g.row(r));
                        for c in 0..x.cols() {
                            out[(r, c)] = (g[(r, c)] - y[(r, c)] * yg) / norm;
                        }
                    }
                    acc(*a, out, &mut grads);
                }
                Op::KlDiv { p, q } => {
                    let gs = g.item();
                    let pv = self.value(*p);
                    let qv = self.value(*q);
                    let gp = pv.zip_map(qv, |pi, qi| {
                        if pi > 0.0 {
                            gs * (pi.ln() + 1.0 - qi.max(KL_FLOOR).ln())
                        } else {
                            0.0
                        }
                    });
                    let gq = pv.zip_map(qv, |pi, qi| if qi > KL_FLOOR { -gs * pi / qi } else { 0.0 });
                    acc(*p, gp, &mut grads);
                    acc(*q, gq, &mut grads);
                }
                Op::CrossEntropy { logits, labels } => {
                    let z = self.value(*logits);
                    let mut out = softmax_rows(z)?;
                    let scale = g.item() / labels.len() as f64;
                    for (b, &y) in labels.iter().enumerate() {
                        out[(b, y)] -= 1.0;
                    }
                    acc(*logits, out.scale(scale), &mut grads);
                }
                Op::FrobeniusNorm(a) => {
                    let x = self.value(*a);
                    let denom = (x.frobenius_norm().powi(2) + FROBENIUS_EPS * FROBENIUS_EPS).sqrt();
                    acc(*a, x.scale(g.item() / denom), &mut grads);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(*a, Matrix::filled(r, c, g.item()), &mut grads);
                }
                Op::Path { t, path } => {
                    let d = path.derivative(self.value(*t).item());
                    let dot = crate::numeric::matrix::dot(d.as_slice(), g.as_slice());
                    acc(*t, Matrix::scalar(dot), &mut grads);
                }
                Op::Opaque { name, parents } => {
                    if !parents.is_empty() {
                        return Err(Error::UnsupportedOp((*name).to_string()));
                    }
                }
            }
        }
        Ok(Gradients { grads, visited })
    }
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&delta).expect("gradient shape matches node"),
        None => *slot = Some(delta),
    }
}

/// Gradients of one scalar with respect to every node that influenced it.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    visited: usize,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `v`'s shape when it did not influence the loss.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            Matrix::zeros(r, c)
        })
    }

    /// Number of nodes the reverse sweep processed.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax of a vector.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return dim_err("softmax of an empty vector");
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / s).collect())
}

pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&softmax(m.row(r))?);
    }
    Ok(out)
}

pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// Unit vector in the direction of `v`.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = crate::numeric::matrix::dot(v, v).sqrt();
    if !(norm > NORM_EPS) {
        return Err(Error::Degenerate(format!("vector norm {norm:e} is too small to normalize")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&l2_normalize(m.row(r))?);
    }
    Ok(out)
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return dim_err(format!("KL between lengths {} and {}", p.len(), q.len()));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.max(KL_FLOOR).ln()))
        .sum())
}

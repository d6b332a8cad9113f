//! Discrete fractional Fourier transform built from discrete Hermite-Gaussians.
//!
//! The eigenvectors come from the real symmetric matrix
//!
//! ```text
//! S[n][n]       = 2·cos(2πn/N) − 4
//! S[n][n ± 1]   = 1   (indices mod N)
//! ```
//!
//! which commutes with the unitary DFT. Its eigenvectors are even or odd
//! under `n → −n mod N`; within each parity, decreasing eigenvalue of `S`
//! follows increasing Hermite order. Even vectors take indices `0, 2, 4, …`
//! and odd vectors `1, 3, 5, …`, except that for even `N` the highest even
//! vector takes index `N`. The index set is `{0, …, N−2, N}` for even `N`
//! and `{0, …, N−1}` for odd `N`.
//!
//! With `λ_k = exp(−jπk/2)` the order-`p` matrix is
//! `F_p = Σ_k v_k λ_k^p v_kᵀ`. `F_1` is the unitary DFT, `F_2` the index
//! reversal, and orders add: `F_a F_b = F_{a+b}`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{dim_err, Result};
use crate::numeric::{sym_eig, ComplexMatrix, Matrix, MatrixPath};

const SIGN_TOL: f64 = 1e-9;

/// Eigenbasis and Hermite index assignment for one signal length.
#[derive(Clone, Debug)]
pub struct DfrftPlan {
    n: usize,
    basis: Matrix,
    hermite_index: Vec<usize>,
    exponents: Vec<f64>,
    dft: ComplexMatrix,
}

impl DfrftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return dim_err(format!("fractional transform length must be at least 2, got {n}"));
        }
        let s = commuting_matrix(n);
        // S is degenerate across parities when 4 | N, so each parity
        // subspace is decomposed on its own.
        let mut even = parity_eigenpairs(&s, &parity_basis(n, true))?;
        let mut odd = parity_eigenpairs(&s, &parity_basis(n, false))?;
        // Descending eigenvalue within a parity class is ascending Hermite order.
        even.sort_by(|a, b| b.0.total_cmp(&a.0));
        odd.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut columns: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n);
        let even_count = even.len();
        for (i, (_, v)) in even.into_iter().enumerate() {
            let index = if n % 2 == 0 && i + 1 == even_count { n } else { 2 * i };
            columns.push((index, v));
        }
        for (i, (_, v)) in odd.into_iter().enumerate() {
            columns.push((2 * i + 1, v));
        }
        columns.sort_by_key(|(index, _)| *index);

        let mut basis = Matrix::zeros(n, n);
        let mut hermite_index = Vec::with_capacity(n);
        for (c, (index, mut v)) in columns.into_iter().enumerate() {
            if let Some(first) = v.iter().find(|x| x.abs() > SIGN_TOL) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            for (r, x) in v.into_iter().enumerate() {
                basis[(r, c)] = x;
            }
            hermite_index.push(index);
        }
        let exponents = hermite_index.iter().map(|&k| k as f64).collect();

        Ok(Self { n, basis, hermite_index, exponents, dft: dft_matrix(n) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Orthonormal eigenvectors as columns, ordered by Hermite index.
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn hermite_index(&self) -> &[usize] {
        &self.hermite_index
    }

    /// Unitary DFT matrix of the same length, kept for consistency checks.
    pub fn dft(&self) -> &ComplexMatrix {
        &self.dft
    }

    /// `λ_k` for column `k`, as `(re, im)`.
    pub fn eigenvalue(&self, k: usize) -> (f64, f64) {
        let phase = -PI * self.exponents[k] / 2.0;
        (phase.cos(), phase.sin())
    }

    /// Shifts the phase exponent of one eigenvector. Only meant for
    /// exercising the invariant checks with a known-bad plan.
    pub fn perturb_eigenvalue(&mut self, k: usize, delta: f64) {
        self.exponents[k] += delta;
    }

    fn synthesize(&self, weight: impl Fn(f64) -> (f64, f64)) -> ComplexMatrix {
        let n = self.n;
        let weights: Vec<(f64, f64)> = self.exponents.iter().map(|&e| weight(e)).collect();
        let mut re = Matrix::zeros(n, n);
        let mut im = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut sr = 0.0;
                let mut si = 0.0;
                for (k, (wr, wi)) in weights.iter().enumerate() {
                    let vv = self.basis[(i, k)] * self.basis[(j, k)];
                    sr += vv * wr;
                    si += vv * wi;
                }
                re[(i, j)] = sr;
                re[(j, i)] = sr;
                im[(i, j)] = si;
                im[(j, i)] = si;
            }
        }
        ComplexMatrix { re, im }
    }

    /// `F_p = Σ_k v_k λ_k^p v_kᵀ`. Complex symmetric and unitary.
    pub fn fractional_matrix(&self, p: f64) -> ComplexMatrix {
        self.synthesize(|e| {
            let phase = -PI * e * p / 2.0;
            (phase.cos(), phase.sin())
        })
    }

    /// `dF_p/dp = Σ_k v_k (−jπk/2) λ_k^p v_kᵀ`.
    pub fn order_gradient(&self, p: f64) -> ComplexMatrix {
        self.synthesize(|e| {
            let rate = -PI * e / 2.0;
            let phase = rate * p;
            // (j·rate)·(cos + j sin) = −rate·sin + j·rate·cos
            (-rate * phase.sin(), rate * phase.cos())
        })
    }

    /// Applies `F_p` to a complex column signal of length `N` in `O(N²)`.
    pub fn apply(&self, p: f64, re: &[f64], im: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if re.len() != self.n || im.len() != self.n {
            return dim_err(format!("signal length {} for a plan of length {}", re.len(), self.n));
        }
        let n = self.n;
        let mut out_re = vec![0.0; n];
        let mut out_im = vec![0.0; n];
        for k in 0..n {
            let (mut cr, mut ci) = (0.0, 0.0);
            for i in 0..n {
                cr += self.basis[(i, k)] * re[i];
                ci += self.basis[(i, k)] * im[i];
            }
            let phase = -PI * self.exponents[k] * p / 2.0;
            let (c, s) = (phase.cos(), phase.sin());
            let (yr, yi) = (cr * c - ci * s, cr * s + ci * c);
            for i in 0..n {
                out_re[i] += self.basis[(i, k)] * yr;
                out_im[i] += self.basis[(i, k)] * yi;
            }
        }
        Ok((out_re, out_im))
    }

    pub fn apply_real(&self, p: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.apply(p, x, &vec![0.0; x.len()])
    }
}

/// Orthonormal basis (as columns) of the signals that are even (or odd)
/// under `n → −n mod N`.
fn parity_basis(n: usize, even: bool) -> Matrix {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if even {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        cols.push(e);
    }
    for i in 1..n.div_ceil(2) {
        let mut e = vec![0.0; n];
        e[i] = half;
        e[n - i] = if even { half } else { -half };
        cols.push(e);
    }
    if even && n % 2 == 0 {
        let mut e = vec![0.0; n];
        e[n / 2] = 1.0;
        cols.push(e);
    }
    Matrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

/// Eigenpairs of `S` restricted to the span of `basis`, lifted back to
/// length-`N` vectors.
fn parity_eigenpairs(s: &Matrix, basis: &Matrix) -> Result<Vec<(f64, Vec<f64>)>> {
    if basis.cols() == 0 {
        return Ok(Vec::new());
    }
    let restricted = basis.t_matmul(&s.matmul(basis)?)?;
    let restricted = Matrix::from_fn(restricted.rows(), restricted.cols(), |i, j| {
        0.5 * (restricted[(i, j)] + restricted[(j, i)])
    });
    let eig = sym_eig(&restricted)?;
    let lifted = basis.matmul(&eig.vectors)?;
    Ok((0..lifted.cols()).map(|k| (eig.values[k], lifted.column(k))).collect())
}

/// The real symmetric matrix whose eigenvectors are the discrete
/// Hermite-Gaussians of length `n`.
pub fn commuting_matrix(n: usize) -> Matrix {
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = 2.0 * (2.0 * PI * i as f64 / n as f64).cos() - 4.0;
        s[(i, (i + 1) % n)] += 1.0;
        s[(i, (i + n - 1) % n)] += 1.0;
    }
    s
}

/// Unitary DFT: `W[m][k] = exp(−2πj·mk/N) / √N`, origin at index 0.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    let angle = |m: usize, k: usize| -2.0 * PI * ((m * k) % n) as f64 / n as f64;
    ComplexMatrix {
        re: Matrix::from_fn(n, n, |m, k| angle(m, k).cos() * scale),
        im: Matrix::from_fn(n, n, |m, k| angle(m, k).sin() * scale),
    }
}

/// Fractional order, learnable unless pinned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalOrder {
    pub value: f64,
    pub trainable: bool,
}

impl FractionalOrder {
    pub fn learnable(value: f64) -> Self {
        Self { value, trainable: true }
    }

    pub fn fixed(value: f64) -> Self {
        Self { value, trainable: false }
    }
}

impl std::fmt::Display for FractionalOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.trainable {
            write!(f, "{}", self.value)
        } else {
            write!(f, "fixed:{}", self.value)
        }
    }
}

impl std::str::FromStr for FractionalOrder {
    type Err = String;

    /// `0.5` (learnable) or `fixed:0` / `fixed:1`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad order {t:?}: {e}"));
        let order = match s.strip_prefix("fixed:") {
            Some(rest) => Self::fixed(parse(rest)?),
            None => Self::learnable(parse(s)?),
        };
        if !order.value.is_finite() {
            return Err(format!("order must be finite, got {s}"));
        }
        Ok(order)
    }
}

/// One plane of `F_p` as a function of `p`, for use on a gradient tape.
pub struct FractionalPlane {
    plan: Arc<DfrftPlan>,
    imaginary: bool,
}

impl FractionalPlane {
    pub fn real(plan: Arc<DfrftPlan>) -> Self {
        Self { plan, imaginary: false }
    }

    pub fn imaginary(plan: Arc<DfrftPlan>) -> Self {
        Self { plan, imaginary: true }
    }
}

impl MatrixPath for FractionalPlane {
    fn value(&self, p: f64) -> Matrix {
        let f = self.plan.fractional_matrix(p);
        if self.imaginary {
            f.im
        } else {
            f.re
        }
    }

    fn derivative(&self, p: f64) -> Matrix {
        let d = self.plan.order_gradient(p);
        if self.imaginary {
            d.im
        } else {
            d.re
        }
    }
}

/// Holds `F_p` for the most recent `p`; recomputes when `p` moves.
pub struct FractionalCache {
    plan: Arc<DfrftPlan>,
    entry: Option<(f64, ComplexMatrix)>,
}

impl FractionalCache {
    pub fn new(plan: Arc<DfrftPlan>) -> Self {
        Self { plan, entry: None }
    }

    pub fn get(&mut self, p: f64) -> &ComplexMatrix {
        let stale = match &self.entry {
            Some((cached, _)) => (cached - p).abs() > 1e-15,
            None => true,
        };
        if stale {
            self.entry = Some((p, self.plan.fractional_matrix(p)));
        }
        &self.entry.as_ref().expect("filled above").1
    }
}

/// Continuous fractional Fourier kernel `K_p(u₀, u_p)` with `α = pπ/2`.
///
/// Returns `None` where the kernel degenerates to a delta function
/// (`α` a multiple of `π`).
pub fn continuous_kernel(p: f64, u0: f64, up: f64) -> Option<(f64, f64)> {
    let alpha = p * PI / 2.0;
    let s = alpha.sin();
    if s.abs() < 1e-12 {
        return None;
    }
    let cot = alpha.cos() / s;
    let csc = 1.0 / s;
    // A_α = √((1 − j·cot α) / 2π), principal branch.
    let (ar, ai) = complex_sqrt(1.0 / (2.0 * PI), -cot / (2.0 * PI));
    let phase = u0 * u0 * cot / 2.0 - up * u0 * csc + up * up * cot / 2.0;
    let (c, sn) = (phase.cos(), phase.sin());
    Some((ar * c - ai * sn, ar * sn + ai * c))
}

fn complex_sqrt(re: f64, im: f64) -> (f64, f64) {
    let r = (re * re + im * im).sqrt();
    let a = ((r + re) / 2.0).sqrt();
    let b = ((r - re) / 2.0).sqrt().copysign(im);
    (a, b)
}

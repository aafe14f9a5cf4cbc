//! Dense primitives, the stable softmax, and the two-layer tanh scorer used by
//! both attention modules.
//!
//! Everything here is a pure function of its arguments. Sums run in index
//! order so results do not depend on who calls them or from which thread.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok(self.iter_rows().map(|r| dot(r, x)).collect())
    }

    /// Glorot-uniform initialization: entries in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let a = glorot_bound(cols, rows);
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect(),
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, actual })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `acc += scale * x`
pub fn axpy(acc: &mut [f64], scale: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += scale * v;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !all_finite(scores) {
        return Err(Error::NonFinite("attention score".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Backward pass of softmax: given the output `p` and `dL/dp`, returns `dL/ds`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let inner = dot(p, grad_p);
    p.iter().zip(grad_p).map(|(pi, gi)| pi * (gi - inner)).collect()
}

/// A parameter set exposed as an ordered list of flat tensors. Gradients use
/// the same type, so optimizers and gradient checks walk both in lockstep.
pub trait Params {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Elementwise `self += other`.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| all_finite(t))
    }
}

/// Attention scorer `x -> w2 · tanh(w1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    /// `h × d`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradients share the parameter layout.
pub type ScorerGrad = ScorerParams;

impl ScorerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        ScorerParams {
            w1: Matrix::zeros(hidden, input_dim),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Weights Glorot-uniform, biases zero.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let w1 = Matrix::glorot(hidden, input_dim, rng);
        let a = glorot_bound(hidden, 1);
        let w2 = (0..hidden).map(|_| rng.random_range(-a..=a)).collect();
        ScorerParams {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.b1.len() != h || self.w2.len() != h || self.w1.data.len() != h * self.w1.cols {
            return Err(Error::Shape(format!(
                "scorer with hidden size {h} has b1 {}, w2 {}",
                self.b1.len(),
                self.w2.len()
            )));
        }
        Ok(())
    }
}

impl Params for ScorerParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.w1.data,
            &self.b1,
            &self.w2,
            std::slice::from_ref(&self.b2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }
}

fn hidden_activations(params: &ScorerParams, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.input_dim(), x.len())?;
    Ok(params
        .w1
        .iter_rows()
        .zip(&params.b1)
        .map(|(row, b)| (dot(row, x) + b).tanh())
        .collect())
}

pub fn scorer_forward(params: &ScorerParams, x: &[f64]) -> Result<f64> {
    let hidden = hidden_activations(params, x)?;
    Ok(dot(&params.w2, &hidden) + params.b2)
}

/// Gradients of `upstream * scorer_forward(params, x)` with respect to the
/// parameters and the input.
pub fn scorer_backward(
    params: &ScorerParams,
    x: &[f64],
    upstream: f64,
) -> Result<(ScorerGrad, Vec<f64>)> {
    let mut grad = ScorerParams::zeros(params.input_dim(), params.hidden());
    let grad_x = scorer_backward_into(params, x, upstream, &mut grad)?;
    Ok((grad, grad_x))
}

/// Like [`scorer_backward`] but accumulates the parameter gradient into `grad`.
pub fn scorer_backward_into(
    params: &ScorerParams,
    x: &[f64],
    upstream: f64,
    grad: &mut ScorerGrad,
) -> Result<Vec<f64>> {
    let hidden = hidden_activations(params, x)?;
    let d = params.input_dim();
    let mut grad_x = vec![0.0; d];
    grad.b2 += upstream;
    for (u, &t) in hidden.iter().enumerate() {
        grad.w2[u] += upstream * t;
        // d tanh(z)/dz = 1 - tanh(z)^2
        let dz = upstream * params.w2[u] * (1.0 - t * t);
        grad.b1[u] += dz;
        axpy(grad.w1.row_mut(u), dz, x);
        axpy(&mut grad_x, dz, params.w1.row(u));
    }
    Ok(grad_x)
}

/// Central finite differences of `f` over every scorer coordinate.
pub fn finite_difference_grad<T, F>(f: F, params: &ScorerParams, eps: f64) -> Result<ScorerGrad>
where
    T: Real,
    F: Fn(&ScorerParams) -> T,
{
    finite_difference(f, params, eps)
}

/// Central differences `(f(p + eps e) - f(p - eps e)) / 2 eps` for every
/// coordinate of any parameter set. The difference is taken in the
/// objective's own scalar type, so a `DoubleDouble` objective keeps the
/// cancellation error far below what `f64` allows.
pub fn finite_difference<P, T, F>(f: F, params: &P, eps: f64) -> Result<P>
where
    P: Params + Clone,
    T: Real,
    F: Fn(&P) -> T,
{
    if !(eps > 0.0) {
        return Err(Error::config("eps", "must be positive"));
    }
    let mut probe = params.clone();
    let mut grad = params.clone();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = params.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + eps;
            let plus = f(&probe);
            probe.tensors_mut()[t][i] = orig - eps;
            let minus = f(&probe);
            probe.tensors_mut()[t][i] = orig;
            if !plus.to_f64().is_finite() || !minus.to_f64().is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective at tensor {t} coordinate {i}"
                )));
            }
            grad.tensors_mut()[t][i] = (plus - minus).to_f64() / (2.0 * eps);
        }
    }
    Ok(grad)
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

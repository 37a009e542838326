//! Transformer building blocks with explicit backward passes.
//!
//! Every `forward` returns its output and a cache; the matching `backward`
//! takes that cache and the output gradient, accumulates parameter gradients
//! into a structure of the same type as the layer, and returns the input
//! gradient.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, matmul, matmul_nt, matmul_tn_acc, softmax_in_place, Matrix};
use crate::Scalar;

/// Visit every parameter tensor in a fixed order.
pub trait Params<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T]));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T]));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    /// `in × out`
    pub w: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    /// Xavier-uniform weights, zero bias.
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid range");
        let data = (0..input * output).map(|_| T::of(dist.sample(rng))).collect();
        Linear {
            w: Matrix::from_vec(input, output, data),
            b: vec![T::zero(); output],
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut y = matmul(x, &self.w);
        for i in 0..y.rows() {
            axpy(T::one(), &self.b, y.row_mut(i));
        }
        y
    }

    pub fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>, grad: &mut Linear<T>) -> Matrix<T> {
        matmul_tn_acc(x, dy, &mut grad.w);
        for i in 0..dy.rows() {
            axpy(T::one(), dy.row(i), &mut grad.b);
        }
        matmul_nt(dy, &self.w)
    }
}

impl<T: Scalar> Params<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        f(&format!("{prefix}.w"), self.w.data());
        f(&format!("{prefix}.b"), &self.b);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        f(&format!("{prefix}.w"), self.w.data_mut());
        f(&format!("{prefix}.b"), &mut self.b);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub struct LayerNormCache<T> {
    xhat: Matrix<T>,
    inv_std: Vec<T>,
}

const LN_EPS: f64 = 1e-5;

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![T::one(); dim],
            beta: vec![T::zero(); dim],
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, LayerNormCache<T>) {
        let n = T::of_usize(x.cols());
        let mut xhat = Matrix::zeros(x.rows(), x.cols());
        let mut y = Matrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + T::of(LN_EPS)).sqrt();
            inv_std.push(inv);
            let xh = xhat.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                xh[j] = (v - mean) * inv;
            }
            let yr = y.row_mut(i);
            for (j, out) in yr.iter_mut().enumerate() {
                *out = self.gamma[j] * xhat.get(i, j) + self.beta[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<T>, dy: &Matrix<T>, grad: &mut LayerNorm<T>) -> Matrix<T> {
        let cols = dy.cols();
        let n = T::of_usize(cols);
        let mut dx = Matrix::zeros(dy.rows(), cols);
        let mut dxhat = vec![T::zero(); cols];
        for i in 0..dy.rows() {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            for j in 0..cols {
                grad.gamma[j] += dyr[j] * xh[j];
                grad.beta[j] += dyr[j];
                dxhat[j] = dyr[j] * self.gamma[j];
            }
            let sum_d = dxhat.iter().copied().sum::<T>();
            let sum_dx = dot(&dxhat, xh);
            let scale = cache.inv_std[i] / n;
            let dxr = dx.row_mut(i);
            for j in 0..cols {
                dxr[j] = scale * (n * dxhat[j] - sum_d - xh[j] * sum_dx);
            }
        }
        dx
    }
}

impl<T: Scalar> Params<T> for LayerNorm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        f(&format!("{prefix}.gamma"), &self.gamma);
        f(&format!("{prefix}.beta"), &self.beta);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        f(&format!("{prefix}.gamma"), &mut self.gamma);
        f(&format!("{prefix}.beta"), &mut self.beta);
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
}

pub struct AttentionCache<T> {
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// One `queries × keys` matrix per head.
    pub probs: Vec<Matrix<T>>,
    context: Matrix<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn new<R: Rng>(dim: usize, rng: &mut R) -> Self {
        Attention {
            query: Linear::new(dim, dim, rng),
            key: Linear::new(dim, dim, rng),
            value: Linear::new(dim, dim, rng),
            output: Linear::new(dim, dim, rng),
        }
    }

    /// Attend from `xq` rows to `xkv` rows. With `causal`, query `i` only sees keys `0..=i`.
    pub fn forward(&self, xq: &Matrix<T>, xkv: &Matrix<T>, heads: usize, causal: bool) -> (Matrix<T>, AttentionCache<T>) {
        let q = self.query.forward(xq);
        let k = self.key.forward(xkv);
        let v = self.value.forward(xkv);
        let dim = q.cols();
        let dk = dim / heads;
        let scale = T::one() / T::of_usize(dk).sqrt();
        let (nq, nk) = (q.rows(), k.rows());
        let mut context = Matrix::zeros(nq, dim);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            let mut p = Matrix::zeros(nq, nk);
            for i in 0..nq {
                let qi = &q.row(i)[cols.clone()];
                let row = p.row_mut(i);
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = if causal && j > i {
                        T::neg_infinity()
                    } else {
                        dot(qi, &k.row(j)[cols.clone()]) * scale
                    };
                }
                softmax_in_place(row);
                let ctx = &mut context.row_mut(i)[cols.clone()];
                for j in 0..nk {
                    let pij = p.get(i, j);
                    if pij != T::zero() {
                        axpy(pij, &v.row(j)[cols.clone()], ctx);
                    }
                }
            }
            probs.push(p);
        }
        let out = self.output.forward(&context);
        (out, AttentionCache { q, k, v, probs, context })
    }

    /// Returns `(d xq, d xkv)`.
    pub fn backward(
        &self,
        cache: &AttentionCache<T>,
        xq: &Matrix<T>,
        xkv: &Matrix<T>,
        dout: &Matrix<T>,
        grad: &mut Attention<T>,
    ) -> (Matrix<T>, Matrix<T>) {
        let heads = cache.probs.len();
        let dcontext = self.output.backward(&cache.context, dout, &mut grad.output);
        let dim = cache.q.cols();
        let dk = dim / heads;
        let scale = T::one() / T::of_usize(dk).sqrt();
        let (nq, nk) = (cache.q.rows(), cache.k.rows());
        let mut dq = Matrix::zeros(nq, dim);
        let mut dkm = Matrix::zeros(nk, dim);
        let mut dv = Matrix::zeros(nk, dim);
        let mut dscore = vec![T::zero(); nk];
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = h * dk..(h + 1) * dk;
            for i in 0..nq {
                let dci = &dcontext.row(i)[cols.clone()];
                let prow = p.row(i);
                let mut weighted = T::zero();
                for j in 0..nk {
                    let dp = dot(dci, &cache.v.row(j)[cols.clone()]);
                    dscore[j] = dp;
                    weighted += dp * prow[j];
                    if prow[j] != T::zero() {
                        axpy(prow[j], dci, &mut dv.row_mut(j)[cols.clone()]);
                    }
                }
                for j in 0..nk {
                    let ds = prow[j] * (dscore[j] - weighted) * scale;
                    if ds != T::zero() {
                        axpy(ds, &cache.k.row(j)[cols.clone()], &mut dq.row_mut(i)[cols.clone()]);
                        axpy(ds, &cache.q.row(i)[cols.clone()], &mut dkm.row_mut(j)[cols.clone()]);
                    }
                }
            }
        }
        let dxq = self.query.backward(xq, &dq, &mut grad.query);
        let mut dxkv = self.key.backward(xkv, &dkm, &mut grad.key);
        dxkv.add_assign(&self.value.backward(xkv, &dv, &mut grad.value));
        (dxq, dxkv)
    }
}

impl<T: Scalar> Params<T> for Attention<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        self.query.visit(&format!("{prefix}.query"), f);
        self.key.visit(&format!("{prefix}.key"), f);
        self.value.visit(&format!("{prefix}.value"), f);
        self.output.visit(&format!("{prefix}.output"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        self.query.visit_mut(&format!("{prefix}.query"), f);
        self.key.visit_mut(&format!("{prefix}.key"), f);
        self.value.visit_mut(&format!("{prefix}.value"), f);
        self.output.visit_mut(&format!("{prefix}.output"), f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward<T> {
    pub inner: Linear<T>,
    pub outer: Linear<T>,
}

pub struct FeedForwardCache<T> {
    hidden: Matrix<T>,
}

impl<T: Scalar> FeedForward<T> {
    pub fn new<R: Rng>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        FeedForward {
            inner: Linear::new(dim, hidden, rng),
            outer: Linear::new(hidden, dim, rng),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, FeedForwardCache<T>) {
        let mut hidden = self.inner.forward(x);
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        let y = self.outer.forward(&hidden);
        (y, FeedForwardCache { hidden })
    }

    pub fn backward(&self, cache: &FeedForwardCache<T>, x: &Matrix<T>, dy: &Matrix<T>, grad: &mut FeedForward<T>) -> Matrix<T> {
        let mut dhidden = self.outer.backward(&cache.hidden, dy, &mut grad.outer);
        for (d, &h) in dhidden.data_mut().iter_mut().zip(cache.hidden.data()) {
            if h <= T::zero() {
                *d = T::zero();
            }
        }
        self.inner.backward(x, &dhidden, &mut grad.inner)
    }
}

impl<T: Scalar> Params<T> for FeedForward<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        self.inner.visit(&format!("{prefix}.inner"), f);
        self.outer.visit(&format!("{prefix}.outer"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        self.inner.visit_mut(&format!("{prefix}.inner"), f);
        self.outer.visit_mut(&format!("{prefix}.outer"), f);
    }
}

/// Inverted dropout. Returns the scale mask, or `None` when inactive.
pub fn dropout<T: Scalar, R: Rng>(x: &mut Matrix<T>, rate: f64, rng: Option<&mut R>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.data().len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    for (v, &m) in x.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

pub fn dropout_backward<T: Scalar>(dy: &mut Matrix<T>, mask: &Option<Vec<T>>) {
    if let Some(mask) = mask {
        for (d, &m) in dy.data_mut().iter_mut().zip(mask) {
            *d *= m;
        }
    }
}

//! Dense numeric substrate: row-major `f64` matrices and 3-D arrays,
//! stable activations, and the attention primitive the decoder builds on.
//!
//! Everything here is a pure function over value types. There is no
//! broadcasting beyond the operations that explicitly state it, which keeps
//! the scalar-loop oracles in the test suite one-to-one with the code.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains non-finite values"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows"));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self + other`, same shape required.
    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense 3-D array of `f64` with dims `(a, b, c)`, `c` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(a: usize, b: usize, c: usize) -> Self {
        Tensor3 { dims: (a, b, c), data: vec![0.0; a * b * c] }
    }

    pub fn from_vec(a: usize, b: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != a * b * c {
            return Err(Error::shape(format!(
                "tensor data length {} does not match {}x{}x{}",
                data.len(),
                a,
                b,
                c
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(Tensor3 { dims: (a, b, c), data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (_, b, c) = self.dims;
        self.data[(i * b + j) * c + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let (_, b, c) = self.dims;
        self.data[(i * b + j) * c + k] = v;
    }

    /// Copies slice `i` (a `b x c` matrix) out of the tensor.
    pub fn slice(&self, i: usize) -> Matrix {
        let (_, b, c) = self.dims;
        let start = i * b * c;
        Matrix { rows: b, cols: c, data: self.data[start..start + b * c].to_vec() }
    }

    pub fn set_slice(&mut self, i: usize, m: &Matrix) {
        let (_, b, c) = self.dims;
        assert_eq!((m.rows, m.cols), (b, c));
        let start = i * b * c;
        self.data[start..start + b * c].copy_from_slice(&m.data);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = out.row_mut(i);
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// Numerically stable softmax over a non-empty vector.
///
/// Subtracts the maximum before exponentiating, so `[1000, 0]` maps to
/// `[~1, ~0]` instead of overflowing.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("softmax input contains non-finite values"));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Backward pass of softmax: given outputs `alpha` and upstream `d_alpha`,
/// returns the gradient with respect to the pre-softmax scores.
pub fn softmax_backward(alpha: &[f64], d_alpha: &[f64]) -> Vec<f64> {
    let dot: f64 = alpha.iter().zip(d_alpha).map(|(a, d)| a * d).sum();
    alpha.iter().zip(d_alpha).map(|(a, d)| a * (d - dot)).collect()
}

/// Logistic sigmoid, stable on both tails.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Projection parameters for one multi-head attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

impl AttnParams {
    pub fn zeros(dim: usize) -> Self {
        AttnParams {
            wq: Matrix::zeros(dim, dim),
            wk: Matrix::zeros(dim, dim),
            wv: Matrix::zeros(dim, dim),
            wo: Matrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        AttnParams {
            wq: Matrix::identity(dim),
            wk: Matrix::identity(dim),
            wv: Matrix::identity(dim),
            wo: Matrix::identity(dim),
        }
    }
}

/// Intermediates of an attention forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttnCache {
    q_proj: Matrix,
    k_proj: Matrix,
    v_proj: Matrix,
    /// Per-head attention weights, each `queries.rows x keys.rows`.
    weights: Vec<Matrix>,
    concat: Matrix,
    heads: usize,
}

impl AttnCache {
    /// Attention weights of head `h` (rows sum to 1).
    pub fn head_weights(&self, h: usize) -> &Matrix {
        &self.weights[h]
    }
}

/// Gradients of one attention block.
#[derive(Debug, Clone)]
pub struct AttnGrads {
    pub queries: Matrix,
    pub keys: Matrix,
    pub values: Matrix,
    pub params: AttnParams,
}

/// Multi-head scaled dot-product attention.
///
/// Keys and values must have the same number of rows; the embedding dim must
/// be divisible by `heads`. Heads are contiguous column blocks of the
/// projected matrices; outputs are concatenated and projected by `wo`.
pub fn multi_head_attention(
    queries: &Matrix,
    keys: &Matrix,
    values: &Matrix,
    heads: usize,
    params: &AttnParams,
) -> Result<Matrix> {
    Ok(mha_forward(queries, keys, values, heads, params)?.0)
}

/// Attention forward pass that also returns the cache needed for backward.
pub fn mha_forward(
    queries: &Matrix,
    keys: &Matrix,
    values: &Matrix,
    heads: usize,
    params: &AttnParams,
) -> Result<(Matrix, AttnCache)> {
    let dim = queries.cols();
    if keys.rows() != values.rows() {
        return Err(Error::shape(format!(
            "attention: {} keys vs {} values",
            keys.rows(),
            values.rows()
        )));
    }
    if keys.cols() != dim || values.cols() != dim {
        return Err(Error::shape("attention: inconsistent embedding dims"));
    }
    if heads == 0 || !dim.is_multiple_of(heads) {
        return Err(Error::config(format!(
            "attention: dim {} not divisible by {} heads",
            dim, heads
        )));
    }
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q_proj = matmul(queries, &params.wq)?;
    let k_proj = matmul(keys, &params.wk)?;
    let v_proj = matmul(values, &params.wv)?;

    let m = queries.rows();
    let l = keys.rows();
    let mut concat = Matrix::zeros(m, dim);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let off = h * dh;
        let mut alpha = Matrix::zeros(m, l);
        for i in 0..m {
            let mut scores = vec![0.0; l];
            for (j, score) in scores.iter_mut().enumerate() {
                let mut s = 0.0;
                for t in 0..dh {
                    s += q_proj.get(i, off + t) * k_proj.get(j, off + t);
                }
                *score = s * scale;
            }
            let soft = softmax(&scores)?;
            alpha.row_mut(i).copy_from_slice(&soft);
        }
        for i in 0..m {
            for t in 0..dh {
                let mut acc = 0.0;
                for j in 0..l {
                    acc += alpha.get(i, j) * v_proj.get(j, off + t);
                }
                concat.set(i, off + t, acc);
            }
        }
        weights.push(alpha);
    }
    let out = matmul(&concat, &params.wo)?;
    let cache = AttnCache { q_proj, k_proj, v_proj, weights, concat, heads };
    Ok((out, cache))
}

/// Backward pass through multi-head attention.
///
/// Returns gradients for the query source, key source, value source, and the
/// projection parameters. When self-attending, the caller sums the three
/// source gradients.
pub fn mha_backward(
    queries: &Matrix,
    keys: &Matrix,
    values: &Matrix,
    params: &AttnParams,
    cache: &AttnCache,
    d_out: &Matrix,
) -> AttnGrads {
    let dim = queries.cols();
    let heads = cache.heads;
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let m = queries.rows();
    let l = keys.rows();

    // out = concat · wo
    let d_wo = matmul(&cache.concat.transpose(), d_out).expect("shape");
    let d_concat = matmul(d_out, &params.wo.transpose()).expect("shape");

    let mut d_qp = Matrix::zeros(m, dim);
    let mut d_kp = Matrix::zeros(l, dim);
    let mut d_vp = Matrix::zeros(l, dim);

    for h in 0..heads {
        let off = h * dh;
        let alpha = &cache.weights[h];
        for i in 0..m {
            // dV_h += alpha^T · dO_h ; d_alpha = dO_h · V_h^T
            let mut d_alpha = vec![0.0; l];
            for j in 0..l {
                let mut acc = 0.0;
                for t in 0..dh {
                    acc += d_concat.get(i, off + t) * cache.v_proj.get(j, off + t);
                }
                d_alpha[j] = acc;
                let aij = alpha.get(i, j);
                for t in 0..dh {
                    let v = d_vp.get(j, off + t) + aij * d_concat.get(i, off + t);
                    d_vp.set(j, off + t, v);
                }
            }
            let d_scores = softmax_backward(alpha.row(i), &d_alpha);
            for (j, ds) in d_scores.iter().enumerate() {
                let ds = ds * scale;
                for t in 0..dh {
                    let q = d_qp.get(i, off + t) + ds * cache.k_proj.get(j, off + t);
                    d_qp.set(i, off + t, q);
                    let k = d_kp.get(j, off + t) + ds * cache.q_proj.get(i, off + t);
                    d_kp.set(j, off + t, k);
                }
            }
        }
    }

    let d_wq = matmul(&queries.transpose(), &d_qp).expect("shape");
    let d_wk = matmul(&keys.transpose(), &d_kp).expect("shape");
    let d_wv = matmul(&values.transpose(), &d_vp).expect("shape");
    let d_queries = matmul(&d_qp, &params.wq.transpose()).expect("shape");
    let d_keys = matmul(&d_kp, &params.wk.transpose()).expect("shape");
    let d_values = matmul(&d_vp, &params.wv.transpose()).expect("shape");

    AttnGrads {
        queries: d_queries,
        keys: d_keys,
        values: d_values,
        params: AttnParams { wq: d_wq, wk: d_wk, wv: d_wv, wo: d_wo },
    }
}

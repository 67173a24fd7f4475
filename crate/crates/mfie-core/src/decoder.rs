//! Set decoder: a fixed bank of learnable event queries refined by stacked
//! layers of self-attention, inter-attention over the encoded tokens, and a
//! feed-forward block. Masking and positional encodings are deliberately
//! absent, so the queries carry no order.
//!
//! Each layer is post-norm: layer normalization is applied to the residual
//! sum after every sub-block. After the last layer the m refined queries are
//! expanded to an `m x l x d` tensor by broadcast-adding each query to every
//! token row; [`expand_queries`] isolates that construction so an alternative
//! (e.g. concat-project) can be swapped in at one place.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pointer::{self, PointerGrid, PointerParams};
use crate::tensor::{matmul, mha_backward, mha_forward, AttnCache, AttnParams, Matrix, Tensor3};

/// Default number of event query slots.
pub const DEFAULT_QUERY_COUNT: usize = 16;

/// Default number of decoder layers.
pub const DEFAULT_LAYERS: usize = 3;

/// Default attention head count at toy scale.
pub const DEFAULT_HEADS: usize = 4;

const LAYER_NORM_EPS: f64 = 1e-5;

/// The m learnable query embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBank {
    /// `m x d`.
    pub queries: Matrix,
}

impl QueryBank {
    /// Seeded uniform init in [-0.1, 0.1].
    pub fn init(m: usize, dim: usize, rng: &mut impl Rng) -> Self {
        QueryBank { queries: Matrix::from_fn(m, dim, |_, _| rng.random_range(-0.1..0.1)) }
    }

    pub fn count(&self) -> usize {
        self.queries.rows()
    }

    pub fn dim(&self) -> usize {
        self.queries.cols()
    }
}

/// Per-row scale and shift after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNormParams {
    pub fn identity(dim: usize) -> Self {
        LayerNormParams { gamma: vec![1.0; dim], beta: vec![0.0; dim] }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNormParams { gamma: vec![0.0; dim], beta: vec![0.0; dim] }
    }
}

/// Two affine maps around a tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    /// `d x hidden`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `hidden x d`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl FfnParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        FfnParams {
            w1: Matrix::zeros(dim, hidden),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, dim),
            b2: vec![0.0; dim],
        }
    }
}

/// One decoder layer: self-attention, inter-attention, feed-forward, each
/// followed by residual + layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub self_attn: AttnParams,
    pub inter_attn: AttnParams,
    pub ffn: FfnParams,
    pub ln1: LayerNormParams,
    pub ln2: LayerNormParams,
    pub ln3: LayerNormParams,
}

/// N stacked decoder layers sharing a head count.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStack {
    pub layers: Vec<DecoderLayer>,
    pub heads: usize,
}

impl DecoderStack {
    /// Seeded init: attention and FFN weights uniform in +-1/sqrt(d), layer
    /// norms at identity. FFN hidden dim is 4d.
    pub fn init(layers: usize, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if layers == 0 {
            return Err(Error::config("decoder needs at least one layer"));
        }
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::config(format!("dim {dim} not divisible by {heads} heads")));
        }
        let scale = 1.0 / (dim as f64).sqrt();
        let hidden = 4 * dim;
        fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
            Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
        }
        let layers = (0..layers)
            .map(|_| DecoderLayer {
                self_attn: AttnParams {
                    wq: uniform(dim, dim, scale, rng),
                    wk: uniform(dim, dim, scale, rng),
                    wv: uniform(dim, dim, scale, rng),
                    wo: uniform(dim, dim, scale, rng),
                },
                inter_attn: AttnParams {
                    wq: uniform(dim, dim, scale, rng),
                    wk: uniform(dim, dim, scale, rng),
                    wv: uniform(dim, dim, scale, rng),
                    wo: uniform(dim, dim, scale, rng),
                },
                ffn: FfnParams {
                    w1: uniform(dim, hidden, scale, rng),
                    b1: vec![0.0; hidden],
                    w2: uniform(hidden, dim, scale, rng),
                    b2: vec![0.0; dim],
                },
                ln1: LayerNormParams::identity(dim),
                ln2: LayerNormParams::identity(dim),
                ln3: LayerNormParams::identity(dim),
            })
            .collect();
        Ok(DecoderStack { layers, heads })
    }

    /// All-zero stack with the same shapes, for gradient accumulation.
    pub fn zeros_like(&self) -> DecoderStack {
        let dim = self.layers[0].ln1.gamma.len();
        let hidden = self.layers[0].ffn.b1.len();
        DecoderStack {
            heads: self.heads,
            layers: self
                .layers
                .iter()
                .map(|_| DecoderLayer {
                    self_attn: AttnParams::zeros(dim),
                    inter_attn: AttnParams::zeros(dim),
                    ffn: FfnParams::zeros(dim, hidden),
                    ln1: LayerNormParams::zeros(dim),
                    ln2: LayerNormParams::zeros(dim),
                    ln3: LayerNormParams::zeros(dim),
                })
                .collect(),
        }
    }
}

struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

fn layer_norm_forward(x: &Matrix, params: &LayerNormParams) -> (Matrix, LayerNormCache) {
    let rows = x.rows();
    let d = x.cols();
    let mut out = Matrix::zeros(rows, d);
    let mut normalized = Matrix::zeros(rows, d);
    let mut inv_std = vec![0.0; rows];
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[i] = istd;
        for t in 0..d {
            let xhat = (row[t] - mean) * istd;
            normalized.set(i, t, xhat);
            out.set(i, t, params.gamma[t] * xhat + params.beta[t]);
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

fn layer_norm_backward(
    params: &LayerNormParams,
    cache: &LayerNormCache,
    d_out: &Matrix,
    d_params: &mut LayerNormParams,
) -> Matrix {
    let rows = d_out.rows();
    let d = d_out.cols();
    let mut d_x = Matrix::zeros(rows, d);
    for i in 0..rows {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for t in 0..d {
            let dy = d_out.get(i, t);
            let xhat = cache.normalized.get(i, t);
            d_params.gamma[t] += dy * xhat;
            d_params.beta[t] += dy;
            let dxhat = dy * params.gamma[t];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        let inv_d = 1.0 / d as f64;
        for t in 0..d {
            let dy = d_out.get(i, t);
            let xhat = cache.normalized.get(i, t);
            let dxhat = dy * params.gamma[t];
            d_x.set(
                i,
                t,
                cache.inv_std[i] * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat),
            );
        }
    }
    d_x
}

struct FfnCache {
    hidden: Matrix,
}

fn ffn_forward(x: &Matrix, params: &FfnParams) -> (Matrix, FfnCache) {
    let mut hidden = matmul(x, &params.w1).expect("shape");
    for i in 0..hidden.rows() {
        let row = hidden.row_mut(i);
        for (t, v) in row.iter_mut().enumerate() {
            *v = (*v + params.b1[t]).tanh();
        }
    }
    let mut out = matmul(&hidden, &params.w2).expect("shape");
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for (t, v) in row.iter_mut().enumerate() {
            *v += params.b2[t];
        }
    }
    (out, FfnCache { hidden })
}

fn ffn_backward(
    x: &Matrix,
    params: &FfnParams,
    cache: &FfnCache,
    d_out: &Matrix,
    d_params: &mut FfnParams,
) -> Matrix {
    for i in 0..d_out.rows() {
        for (t, db) in d_params.b2.iter_mut().enumerate() {
            *db += d_out.get(i, t);
        }
    }
    d_params.w2.add_assign(&matmul(&cache.hidden.transpose(), d_out).expect("shape"));
    let mut d_hidden = matmul(d_out, &params.w2.transpose()).expect("shape");
    for i in 0..d_hidden.rows() {
        for t in 0..d_hidden.cols() {
            let hv = cache.hidden.get(i, t);
            d_hidden.set(i, t, d_hidden.get(i, t) * (1.0 - hv * hv));
        }
    }
    for i in 0..d_hidden.rows() {
        for (t, db) in d_params.b1.iter_mut().enumerate() {
            *db += d_hidden.get(i, t);
        }
    }
    d_params.w1.add_assign(&matmul(&x.transpose(), &d_hidden).expect("shape"));
    matmul(&d_hidden, &params.w1.transpose()).expect("shape")
}

struct LayerCache {
    input: Matrix,
    attn1: AttnCache,
    ln1: LayerNormCache,
    q1: Matrix,
    attn2: AttnCache,
    ln2: LayerNormCache,
    q2: Matrix,
    ffn: FfnCache,
    ln3: LayerNormCache,
}

/// Everything the backward pass needs from a [`decode_with_cache`] call.
pub struct DecoderCache {
    layers: Vec<LayerCache>,
    refined: Matrix,
}

impl DecoderCache {
    /// The refined queries after the last layer (`m x d`).
    pub fn refined_queries(&self) -> &Matrix {
        &self.refined
    }
}

/// Gradients of a decoder pass.
pub struct DecoderGrads {
    pub tokens: Matrix,
    pub queries: Matrix,
    pub stack: DecoderStack,
}

/// Broadcast-add each refined query to every token row, producing the
/// per-event, per-token tensor consumed by the output pointer heads.
pub fn expand_queries(refined: &Matrix, tokens: &Matrix) -> Tensor3 {
    let m = refined.rows();
    let l = tokens.rows();
    let d = tokens.cols();
    let mut t = Tensor3::zeros(m, l, d);
    for i in 0..m {
        for j in 0..l {
            for c in 0..d {
                t.set(i, j, c, refined.get(i, c) + tokens.get(j, c));
            }
        }
    }
    t
}

/// Refines the query bank through the stack and expands to `m x l x d`.
pub fn decode(tokens: &Matrix, queries: &QueryBank, stack: &DecoderStack) -> Result<Tensor3> {
    Ok(decode_with_cache(tokens, queries, stack)?.0)
}

/// Decoder forward pass that retains per-layer caches for backprop.
pub fn decode_with_cache(
    tokens: &Matrix,
    queries: &QueryBank,
    stack: &DecoderStack,
) -> Result<(Tensor3, DecoderCache)> {
    if tokens.cols() != queries.dim() {
        return Err(Error::shape(format!(
            "decoder: token dim {} vs query dim {}",
            tokens.cols(),
            queries.dim()
        )));
    }
    let mut q = queries.queries.clone();
    let mut layer_caches = Vec::with_capacity(stack.layers.len());
    for layer in &stack.layers {
        let input = q.clone();
        let (a1, attn1) = mha_forward(&input, &input, &input, stack.heads, &layer.self_attn)?;
        let (q1, ln1) = layer_norm_forward(&input.add(&a1), &layer.ln1);
        let (a2, attn2) = mha_forward(&q1, tokens, tokens, stack.heads, &layer.inter_attn)?;
        let (q2, ln2) = layer_norm_forward(&q1.add(&a2), &layer.ln2);
        let (f, ffn) = ffn_forward(&q2, &layer.ffn);
        let (q3, ln3) = layer_norm_forward(&q2.add(&f), &layer.ln3);
        layer_caches.push(LayerCache { input, attn1, ln1, q1, attn2, ln2, q2, ffn, ln3 });
        q = q3;
    }
    let tensor = expand_queries(&q, tokens);
    Ok((tensor, DecoderCache { layers: layer_caches, refined: q }))
}

/// Backward pass through expansion and all decoder layers.
pub fn decode_backward(
    tokens: &Matrix,
    stack: &DecoderStack,
    cache: &DecoderCache,
    d_tensor: &Tensor3,
) -> DecoderGrads {
    let (m, l, d) = d_tensor.dims();
    let mut d_tokens = Matrix::zeros(l, d);
    let mut d_q = Matrix::zeros(m, d);
    for i in 0..m {
        for j in 0..l {
            for c in 0..d {
                let g = d_tensor.get(i, j, c);
                d_q.set(i, c, d_q.get(i, c) + g);
                d_tokens.set(j, c, d_tokens.get(j, c) + g);
            }
        }
    }

    let mut d_stack = stack.zeros_like();
    for (layer, (params, lc)) in stack.layers.iter().zip(&cache.layers).enumerate().rev() {
        let d_layer = &mut d_stack.layers[layer];
        // q3 = ln3(q2 + f)
        let d_sum3 = layer_norm_backward(&params.ln3, &lc.ln3, &d_q, &mut d_layer.ln3);
        // f = ffn(q2)
        let d_q2_ffn = ffn_backward(&lc.q2, &params.ffn, &lc.ffn, &d_sum3, &mut d_layer.ffn);
        let d_q2 = d_sum3.add(&d_q2_ffn);
        // q2 = ln2(q1 + a2)
        let d_sum2 = layer_norm_backward(&params.ln2, &lc.ln2, &d_q2, &mut d_layer.ln2);
        // a2 = inter-attention(q1; tokens)
        let attn2 = mha_backward(&lc.q1, tokens, tokens, &params.inter_attn, &lc.attn2, &d_sum2);
        d_layer.inter_attn = attn2.params;
        d_tokens.add_assign(&attn2.keys);
        d_tokens.add_assign(&attn2.values);
        let d_q1 = d_sum2.add(&attn2.queries);
        // q1 = ln1(input + a1)
        let d_sum1 = layer_norm_backward(&params.ln1, &lc.ln1, &d_q1, &mut d_layer.ln1);
        // a1 = self-attention(input)
        let attn1 =
            mha_backward(&lc.input, &lc.input, &lc.input, &params.self_attn, &lc.attn1, &d_sum1);
        d_layer.self_attn = attn1.params;
        let mut d_input = d_sum1;
        d_input.add_assign(&attn1.queries);
        d_input.add_assign(&attn1.keys);
        d_input.add_assign(&attn1.values);
        d_q = d_input;
    }
    DecoderGrads { tokens: d_tokens, queries: d_q, stack: d_stack }
}

/// Applies a pointer head independently to every slice of the decoder output.
pub fn pointer_outputs(t: &Tensor3, params: &PointerParams) -> Result<Vec<PointerGrid>> {
    let (m, _, d) = t.dims();
    if d != params.dim() {
        return Err(Error::shape(format!(
            "pointer outputs: tensor dim {} vs params dim {}",
            d,
            params.dim()
        )));
    }
    (0..m).map(|i| pointer::score(&t.slice(i), params)).collect()
}

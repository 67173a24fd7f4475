//! Trigger pooling and the additive-attention fusion that folds a pooled
//! trigger representation back into the token sequence.
//!
//! Fusion computes one scalar score per token, `V . tanh(W1 h_j + W2 t)`,
//! softmaxes the scores into weights `alpha`, and reweights each token row:
//! `H_hat[j] = alpha[j] * H[j]`. Reweighting (rather than a weighted sum)
//! keeps the `l x d` shape the downstream pointer head needs.

use crate::error::{Error, Result};
use crate::tensor::{softmax, softmax_backward, Matrix};

/// Learnable fusion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// Score vector, length d.
    pub v: Vec<f64>,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl FusionParams {
    pub fn zeros(dim: usize) -> Self {
        FusionParams { v: vec![0.0; dim], w1: Matrix::zeros(dim, dim), w2: Matrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }
}

/// Coordinate-wise max over trigger representations. `None` when there are
/// no triggers; the caller falls back to identity fusion.
pub fn pool_triggers(trigger_reps: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = trigger_reps.first()?;
    let mut out = first.clone();
    for rep in &trigger_reps[1..] {
        for (o, v) in out.iter_mut().zip(rep) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    Some(out)
}

/// Indexes of the argmax input per coordinate, for routing gradients back
/// through the max-pool.
pub fn pool_argmax(trigger_reps: &[Vec<f64>]) -> Vec<usize> {
    let dim = trigger_reps.first().map_or(0, Vec::len);
    (0..dim)
        .map(|t| {
            let mut best = 0;
            for (i, rep) in trigger_reps.iter().enumerate() {
                if rep[t] > trigger_reps[best][t] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Intermediates of a fusion forward pass.
#[derive(Debug, Clone)]
pub struct FusionCache {
    /// tanh(W1 h_j + W2 t), per token.
    tanh_u: Matrix,
    /// Softmax weights over tokens.
    pub alpha: Vec<f64>,
}

/// Gradients of a fusion pass.
#[derive(Debug, Clone)]
pub struct FusionGrads {
    pub tokens: Matrix,
    pub trigger: Vec<f64>,
    pub params: FusionParams,
}

/// Fuses a pooled trigger vector into the token representations.
pub fn fuse(tokens: &Matrix, trigger: &[f64], params: &FusionParams) -> Result<Matrix> {
    Ok(fuse_with_cache(tokens, trigger, params)?.0)
}

/// Fusion forward pass that retains the cache for backprop.
pub fn fuse_with_cache(
    tokens: &Matrix,
    trigger: &[f64],
    params: &FusionParams,
) -> Result<(Matrix, FusionCache)> {
    let d = params.dim();
    let l = tokens.rows();
    if tokens.cols() != d || trigger.len() != d {
        return Err(Error::shape(format!(
            "fusion: tokens {}x{}, trigger {}, params dim {}",
            l,
            tokens.cols(),
            trigger.len(),
            d
        )));
    }
    if params.w1.rows() != d || params.w1.cols() != d || params.w2.rows() != d || params.w2.cols() != d
    {
        return Err(Error::shape("fusion: W1/W2 must be d x d"));
    }
    // W2 t is shared across tokens
    let mut w2t = vec![0.0; d];
    for (t, w2t_t) in w2t.iter_mut().enumerate() {
        *w2t_t = (0..d).map(|c| params.w2.get(t, c) * trigger[c]).sum();
    }
    let mut tanh_u = Matrix::zeros(l, d);
    let mut scores = vec![0.0; l];
    for j in 0..l {
        let h = tokens.row(j);
        let mut score = 0.0;
        for t in 0..d {
            let u: f64 = (0..d).map(|c| params.w1.get(t, c) * h[c]).sum::<f64>() + w2t[t];
            let tu = u.tanh();
            tanh_u.set(j, t, tu);
            score += params.v[t] * tu;
        }
        scores[j] = score;
    }
    let alpha = softmax(&scores)?;
    let mut fused = Matrix::zeros(l, d);
    for j in 0..l {
        for t in 0..d {
            fused.set(j, t, alpha[j] * tokens.get(j, t));
        }
    }
    Ok((fused, FusionCache { tanh_u, alpha }))
}

/// Backward pass of [`fuse`].
pub fn fuse_backward(
    tokens: &Matrix,
    trigger: &[f64],
    params: &FusionParams,
    cache: &FusionCache,
    d_fused: &Matrix,
) -> FusionGrads {
    let d = params.dim();
    let l = tokens.rows();
    let alpha = &cache.alpha;

    let mut d_tokens = Matrix::zeros(l, d);
    let mut d_alpha = vec![0.0; l];
    for j in 0..l {
        for t in 0..d {
            let g = d_fused.get(j, t);
            d_alpha[j] += g * tokens.get(j, t);
            d_tokens.set(j, t, alpha[j] * g);
        }
    }
    let d_scores = softmax_backward(alpha, &d_alpha);

    let mut d_params = FusionParams::zeros(d);
    let mut d_trigger = vec![0.0; d];
    for j in 0..l {
        let h = tokens.row(j);
        for t in 0..d {
            let tu = cache.tanh_u.get(j, t);
            d_params.v[t] += d_scores[j] * tu;
            let du = d_scores[j] * params.v[t] * (1.0 - tu * tu);
            for c in 0..d {
                d_params.w1.set(t, c, d_params.w1.get(t, c) + du * h[c]);
                d_params.w2.set(t, c, d_params.w2.get(t, c) + du * trigger[c]);
                d_tokens.set(j, c, d_tokens.get(j, c) + du * params.w1.get(t, c));
                d_trigger[c] += du * params.w2.get(t, c);
            }
        }
    }
    FusionGrads { tokens: d_tokens, trigger: d_trigger, params: d_params }
}

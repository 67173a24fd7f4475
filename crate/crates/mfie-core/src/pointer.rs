//! Pointer-labeling heads: per-type start/end probabilities over a token
//! sequence, span decoding, and the binary cross-entropy loss with its
//! analytic gradient.

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Matrix};

/// Separator between event type and role when they are concatenated into one
/// entity-type label. An ASCII unit separator cannot collide with text.
pub const TYPE_ROLE_SEPARATOR: char = '\u{1f}';

/// Joins an event type and role into a pointer entity-type label.
pub fn entity_type_label(event_type: &str, role: &str) -> String {
    format!("{event_type}{TYPE_ROLE_SEPARATOR}{role}")
}

/// Splits a pointer entity-type label back into (event type, role).
pub fn split_entity_type_label(label: &str) -> Option<(&str, &str)> {
    label.split_once(TYPE_ROLE_SEPARATOR)
}

/// Per-type start/end affine parameters over d-dimensional token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerParams {
    /// `r x d`: row i is the start weight vector of type i.
    pub start_weights: Matrix,
    pub start_bias: Vec<f64>,
    /// `r x d`: row i is the end weight vector of type i.
    pub end_weights: Matrix,
    pub end_bias: Vec<f64>,
}

impl PointerParams {
    pub fn zeros(types: usize, dim: usize) -> Self {
        PointerParams {
            start_weights: Matrix::zeros(types, dim),
            start_bias: vec![0.0; types],
            end_weights: Matrix::zeros(types, dim),
            end_bias: vec![0.0; types],
        }
    }

    pub fn type_count(&self) -> usize {
        self.start_weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.start_weights.cols()
    }
}

/// Start/end probability grids, both `l x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerGrid {
    pub starts: Matrix,
    pub ends: Matrix,
}

impl PointerGrid {
    pub fn token_count(&self) -> usize {
        self.starts.rows()
    }

    pub fn type_count(&self) -> usize {
        self.starts.cols()
    }
}

/// Pre-sigmoid logits retained by [`score_with_cache`] for backprop.
#[derive(Debug, Clone)]
pub struct PointerCache {
    pub start_logits: Matrix,
    pub end_logits: Matrix,
}

/// A decoded typed span over token indexes, end inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedSpan {
    pub type_index: usize,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Gradients of a pointer head.
#[derive(Debug, Clone)]
pub struct PointerGrads {
    pub tokens: Matrix,
    pub params: PointerParams,
}

/// Computes start/end probabilities for every (token, type) pair:
/// `starts[j][i] = sigmoid(W_i^S . h_j + b_i^S)` and likewise for ends.
pub fn score(tokens: &Matrix, params: &PointerParams) -> Result<PointerGrid> {
    Ok(score_with_cache(tokens, params)?.0)
}

/// Scoring that also returns the logits for the backward pass.
pub fn score_with_cache(
    tokens: &Matrix,
    params: &PointerParams,
) -> Result<(PointerGrid, PointerCache)> {
    if tokens.cols() != params.dim() {
        return Err(Error::shape(format!(
            "pointer head: token dim {} vs params dim {}",
            tokens.cols(),
            params.dim()
        )));
    }
    let l = tokens.rows();
    let r = params.type_count();
    let mut start_logits = Matrix::zeros(l, r);
    let mut end_logits = Matrix::zeros(l, r);
    for j in 0..l {
        let h = tokens.row(j);
        for i in 0..r {
            let ws = params.start_weights.row(i);
            let we = params.end_weights.row(i);
            let zs: f64 = ws.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + params.start_bias[i];
            let ze: f64 = we.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + params.end_bias[i];
            start_logits.set(j, i, zs);
            end_logits.set(j, i, ze);
        }
    }
    let starts = Matrix::from_fn(l, r, |j, i| sigmoid(start_logits.get(j, i)));
    let ends = Matrix::from_fn(l, r, |j, i| sigmoid(end_logits.get(j, i)));
    Ok((PointerGrid { starts, ends }, PointerCache { start_logits, end_logits }))
}

/// Backward pass of [`score`]: routes logit gradients to tokens and params.
pub fn score_backward(
    tokens: &Matrix,
    params: &PointerParams,
    d_start_logits: &Matrix,
    d_end_logits: &Matrix,
) -> PointerGrads {
    let l = tokens.rows();
    let r = params.type_count();
    let d = params.dim();
    let mut d_tokens = Matrix::zeros(l, d);
    let mut d_params = PointerParams::zeros(r, d);
    for j in 0..l {
        let h = tokens.row(j);
        for i in 0..r {
            let ds = d_start_logits.get(j, i);
            let de = d_end_logits.get(j, i);
            d_params.start_bias[i] += ds;
            d_params.end_bias[i] += de;
            for t in 0..d {
                let sw = params.start_weights.get(i, t);
                let ew = params.end_weights.get(i, t);
                d_tokens.set(j, t, d_tokens.get(j, t) + ds * sw + de * ew);
                d_params
                    .start_weights
                    .set(i, t, d_params.start_weights.get(i, t) + ds * h[t]);
                d_params
                    .end_weights
                    .set(i, t, d_params.end_weights.get(i, t) + de * h[t]);
            }
        }
    }
    PointerGrads { tokens: d_tokens, params: d_params }
}

/// Decodes typed spans from a probability grid.
///
/// Per type, independently: each position with start probability at or above
/// the threshold opens a span, which closes at the nearest not-yet-used
/// position at or after it whose end probability clears the threshold.
/// Unclosed starts are discarded. Span score is min(start, end) probability.
/// Spans of different types may overlap freely.
pub fn decode_spans(grid: &PointerGrid, threshold: f64) -> Vec<TypedSpan> {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    let l = grid.token_count();
    let r = grid.type_count();
    let mut spans = Vec::new();
    for type_index in 0..r {
        let mut next_free_end = 0usize;
        for start in 0..l {
            let ps = grid.starts.get(start, type_index);
            if ps < threshold {
                continue;
            }
            let from = next_free_end.max(start);
            let end = (from..l).find(|&j| grid.ends.get(j, type_index) >= threshold);
            if let Some(end) = end {
                let pe = grid.ends.get(end, type_index);
                spans.push(TypedSpan { type_index, start, end, score: ps.min(pe) });
                next_free_end = end + 1;
            }
        }
    }
    spans
}

/// Mean binary cross-entropy between a probability grid and 0/1 gold grids.
///
/// Returns the loss and the gradient with respect to the logits:
/// `(p - y) / count` per position. Probabilities are clamped to
/// `[1e-12, 1 - 1e-12]` inside the logs.
pub fn bce_loss(grid: &PointerGrid, gold: &PointerGrid) -> Result<(f64, PointerGrads2)> {
    let l = grid.token_count();
    let r = grid.type_count();
    if gold.token_count() != l || gold.type_count() != r {
        return Err(Error::shape(format!(
            "bce: prediction {}x{} vs gold {}x{}",
            l,
            r,
            gold.token_count(),
            gold.type_count()
        )));
    }
    for v in gold.starts.data().iter().chain(gold.ends.data()) {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::invalid(format!("gold grid entry {v} is not 0 or 1")));
        }
    }
    let count = (l * r * 2) as f64;
    let mut loss = 0.0;
    let mut d_start = Matrix::zeros(l, r);
    let mut d_end = Matrix::zeros(l, r);
    for j in 0..l {
        for i in 0..r {
            for (pred, gold_m, d) in [
                (&grid.starts, &gold.starts, &mut d_start),
                (&grid.ends, &gold.ends, &mut d_end),
            ] {
                let p = pred.get(j, i);
                let y = gold_m.get(j, i);
                let pc = p.clamp(1e-12, 1.0 - 1e-12);
                loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
                d.set(j, i, (p - y) / count);
            }
        }
    }
    Ok((loss / count, PointerGrads2 { d_start_logits: d_start, d_end_logits: d_end }))
}

/// Logit gradients of a BCE loss over a pointer grid.
#[derive(Debug, Clone)]
pub struct PointerGrads2 {
    pub d_start_logits: Matrix,
    pub d_end_logits: Matrix,
}

/// Builds a 0/1 gold grid from typed spans.
pub fn gold_grid(l: usize, r: usize, spans: &[TypedSpan]) -> PointerGrid {
    let mut starts = Matrix::zeros(l, r);
    let mut ends = Matrix::zeros(l, r);
    for s in spans {
        starts.set(s.start, s.type_index, 1.0);
        ends.set(s.end, s.type_index, 1.0);
    }
    PointerGrid { starts, ends }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(starts: &[Vec<f64>], ends: &[Vec<f64>]) -> PointerGrid {
        PointerGrid {
            starts: Matrix::from_rows(starts).unwrap(),
            ends: Matrix::from_rows(ends).unwrap(),
        }
    }

    #[test]
    fn zero_params_give_half_everywhere() {
        let tokens = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let grid = score(&tokens, &PointerParams::zeros(2, 4)).unwrap();
        for v in grid.starts.data().iter().chain(grid.ends.data()) {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn scalar_case_matches_oracle() {
        let tokens = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let mut params = PointerParams::zeros(1, 1);
        params.start_weights.set(0, 0, 1.0);
        let grid = score(&tokens, &params).unwrap();
        let oracle = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((grid.starts.get(0, 0) - oracle).abs() < 1e-15);
        assert_eq!(grid.ends.get(0, 0), 0.5);
    }

    #[test]
    fn grid_shape_contract() {
        let tokens = Matrix::from_fn(5, 3, |i, j| ((i + j) as f64).sin());
        let grid = score(&tokens, &PointerParams::zeros(7, 3)).unwrap();
        assert_eq!((grid.starts.rows(), grid.starts.cols()), (5, 7));
        assert_eq!((grid.ends.rows(), grid.ends.cols()), (5, 7));
    }

    #[test]
    fn dim_mismatch_is_shape_error() {
        let tokens = Matrix::zeros(2, 3);
        assert!(matches!(
            score(&tokens, &PointerParams::zeros(1, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn decode_simple_pair() {
        let lo = vec![vec![0.1], vec![0.1], vec![0.9], vec![0.1], vec![0.1]];
        let ends = vec![vec![0.1], vec![0.1], vec![0.1], vec![0.1], vec![0.8]];
        let spans = decode_spans(&grid_from(&lo, &ends), 0.5);
        assert_eq!(spans, vec![TypedSpan { type_index: 0, start: 2, end: 4, score: 0.8 }]);
    }

    #[test]
    fn decode_nothing_below_threshold() {
        let rows = vec![vec![0.4, 0.4]; 4];
        let spans = decode_spans(&grid_from(&rows, &rows), 0.5);
        assert!(spans.is_empty());
    }

    #[test]
    fn decode_overlapping_types() {
        // same token fires for two types
        let starts = vec![vec![0.9, 0.8], vec![0.0, 0.0]];
        let ends = vec![vec![0.0, 0.0], vec![0.7, 0.9]];
        let spans = decode_spans(&grid_from(&starts, &ends), 0.5);
        assert_eq!(spans.len(), 2);
        assert!(spans.iter().any(|s| s.type_index == 0 && s.start == 0 && s.end == 1));
        assert!(spans.iter().any(|s| s.type_index == 1 && s.start == 0 && s.end == 1));
    }

    #[test]
    fn decode_discards_unclosed_start_and_forbids_end_reuse() {
        let starts = vec![vec![0.9], vec![0.8], vec![0.0]];
        let ends = vec![vec![0.0], vec![0.0], vec![0.9]];
        let spans = decode_spans(&grid_from(&starts, &ends), 0.5);
        // first start takes the only end; second start stays unclosed
        assert_eq!(spans, vec![TypedSpan { type_index: 0, start: 0, end: 2, score: 0.9 }]);
    }

    #[test]
    fn decode_single_token_span() {
        let starts = vec![vec![0.9], vec![0.1]];
        let ends = vec![vec![0.7], vec![0.1]];
        let spans = decode_spans(&grid_from(&starts, &ends), 0.5);
        assert_eq!(spans, vec![TypedSpan { type_index: 0, start: 0, end: 0, score: 0.7 }]);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let pred = grid_from(&[vec![1.0 - 1e-12]], &[vec![1e-12]]);
        let gold = grid_from(&[vec![1.0]], &[vec![0.0]]);
        let (loss, _) = bce_loss(&pred, &gold).unwrap();
        assert!((0.0..1e-10).contains(&loss));
    }

    #[test]
    fn bce_half_everywhere_is_ln2() {
        let pred = grid_from(&[vec![0.5, 0.5], vec![0.5, 0.5]], &[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let gold = grid_from(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let (loss, _) = bce_loss(&pred, &gold).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_non_binary_gold() {
        let pred = grid_from(&[vec![0.5]], &[vec![0.5]]);
        let gold = grid_from(&[vec![0.3]], &[vec![0.0]]);
        assert!(bce_loss(&pred, &gold).is_err());
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        // random 3x2 grid of logits; gradient wrt logits checked by central FD
        let mut x: f64 = 0.37;
        let mut next = || {
            x = (x * 997.0 + 0.1234).fract();
            x * 4.0 - 2.0
        };
        let l = 3;
        let r = 2;
        let start_logits = Matrix::from_fn(l, r, |_, _| next());
        let end_logits = Matrix::from_fn(l, r, |_, _| next());
        let gold = grid_from(
            &[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]],
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        );
        let to_grid = |sl: &Matrix, el: &Matrix| PointerGrid {
            starts: Matrix::from_fn(l, r, |j, i| sigmoid(sl.get(j, i))),
            ends: Matrix::from_fn(l, r, |j, i| sigmoid(el.get(j, i))),
        };
        let (_, grads) = bce_loss(&to_grid(&start_logits, &end_logits), &gold).unwrap();
        let h = 1e-5;
        for j in 0..l {
            for i in 0..r {
                for (which, analytic) in [(0, &grads.d_start_logits), (1, &grads.d_end_logits)] {
                    let mut plus = (start_logits.clone(), end_logits.clone());
                    let mut minus = (start_logits.clone(), end_logits.clone());
                    let (p_m, m_m) = if which == 0 {
                        (&mut plus.0, &mut minus.0)
                    } else {
                        (&mut plus.1, &mut minus.1)
                    };
                    p_m.set(j, i, p_m.get(j, i) + h);
                    m_m.set(j, i, m_m.get(j, i) - h);
                    let (lp, _) = bce_loss(&to_grid(&plus.0, &plus.1), &gold).unwrap();
                    let (lm, _) = bce_loss(&to_grid(&minus.0, &minus.1), &gold).unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let an = analytic.get(j, i);
                    let denom = an.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        ((an - fd) / denom).abs() < 1e-6,
                        "logit ({j},{i},{which}): analytic {an} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn entity_type_label_round_trip() {
        let label = entity_type_label("finance/trading-limit down", "time");
        let (et, role) = split_entity_type_label(&label).unwrap();
        assert_eq!(et, "finance/trading-limit down");
        assert_eq!(role, "time");
    }
}

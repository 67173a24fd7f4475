//! Bipartite matching loss: an exact Hungarian assignment between predicted
//! and ground-truth event slots, followed by cross-entropy over the aligned
//! tensors.
//!
//! The pairwise cost is the negated sum of the elementwise product of a
//! prediction slice and a gold slice, so minimizing total cost maximizes
//! agreement mass. The raw (un-negated) product is available behind
//! [`CostSign::RawAgreement`] for ablation. The permutation found by the
//! matcher is treated as a constant between forward and backward, so the
//! loss gradient is plain cross-entropy routed through the alignment.

use crate::error::{Error, Result};
use crate::pointer::PointerGrid;

/// Per-event start/end label tensor with dims `(m, l, 2, r)`: predictions
/// hold probabilities, gold tensors hold 0/1 indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTensor {
    events: usize,
    tokens: usize,
    types: usize,
    data: Vec<f64>,
}

impl LabelTensor {
    pub fn zeros(events: usize, tokens: usize, types: usize) -> Self {
        LabelTensor { events, tokens, types, data: vec![0.0; events * tokens * 2 * types] }
    }

    /// Stacks per-event pointer grids into a label tensor. Axis 2 is
    /// start (0) / end (1).
    pub fn from_grids(grids: &[PointerGrid]) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| Error::invalid("label tensor needs at least one event slot"))?;
        let tokens = first.token_count();
        let types = first.type_count();
        let mut out = LabelTensor::zeros(grids.len(), tokens, types);
        for (i, grid) in grids.iter().enumerate() {
            if grid.token_count() != tokens || grid.type_count() != types {
                return Err(Error::shape("label tensor: inconsistent grid shapes"));
            }
            for j in 0..tokens {
                for t in 0..types {
                    out.set(i, j, 0, t, grid.starts.get(j, t));
                    out.set(i, j, 1, t, grid.ends.get(j, t));
                }
            }
        }
        Ok(out)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.events, self.tokens, 2, self.types)
    }

    pub fn event_count(&self) -> usize {
        self.events
    }

    /// Number of scalar positions per event slice.
    pub fn slice_len(&self) -> usize {
        self.tokens * 2 * self.types
    }

    #[inline]
    fn offset(&self, event: usize, token: usize, side: usize, ty: usize) -> usize {
        ((event * self.tokens + token) * 2 + side) * self.types + ty
    }

    #[inline]
    pub fn get(&self, event: usize, token: usize, side: usize, ty: usize) -> f64 {
        self.data[self.offset(event, token, side, ty)]
    }

    #[inline]
    pub fn set(&mut self, event: usize, token: usize, side: usize, ty: usize, v: f64) {
        let o = self.offset(event, token, side, ty);
        self.data[o] = v;
    }

    pub fn slice(&self, event: usize) -> &[f64] {
        let len = self.slice_len();
        &self.data[event * len..(event + 1) * len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn same_shape(&self, other: &LabelTensor) -> bool {
        self.events == other.events && self.tokens == other.tokens && self.types == other.types
    }
}

/// Sign convention for the matching cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostSign {
    /// Cost = -(sum of elementwise products): minimizing maximizes agreement.
    #[default]
    NegatedAgreement,
    /// Cost = +(sum of elementwise products), for ablation only.
    RawAgreement,
}

/// Square matrix of pairwise matching costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    size: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_vec(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::invalid(format!(
                "cost matrix data length {} for size {}",
                data.len(),
                size
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cost matrix contains non-finite values"));
        }
        Ok(CostMatrix { size, data })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                data.push(f(i, j));
            }
        }
        CostMatrix { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    /// Total cost of assigning row i to column `perm[i]`.
    pub fn total(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Agreement between one prediction slice and one gold slice, reduced to a
/// scalar by summing the elementwise product over all positions.
pub fn pairwise_cost(pred_slice: &[f64], gold_slice: &[f64], sign: CostSign) -> Result<f64> {
    if pred_slice.len() != gold_slice.len() {
        return Err(Error::shape(format!(
            "pairwise cost: slice lengths {} vs {}",
            pred_slice.len(),
            gold_slice.len()
        )));
    }
    let agreement: f64 = pred_slice.iter().zip(gold_slice).map(|(p, y)| p * y).sum();
    Ok(match sign {
        CostSign::NegatedAgreement => -agreement,
        CostSign::RawAgreement => agreement,
    })
}

/// Exact minimum-cost assignment via shortest augmenting paths, O(n^3).
///
/// Returns `perm` with `perm[i]` = column assigned to row i. Ties are broken
/// deterministically to the lexicographically smallest optimal permutation.
pub fn hungarian(cost: &CostMatrix) -> Result<Vec<usize>> {
    let n = cost.size();
    if n == 0 {
        return Ok(Vec::new());
    }
    let optimal = solve_assignment(cost, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>());
    let target = optimal.1;
    let tol = 1e-9 * (1.0 + target.abs());

    // Lexicographic refinement: fix rows in order, choosing the smallest
    // column whose optimal completion still reaches the optimal total.
    let mut perm = vec![usize::MAX; n];
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let remaining_rows: Vec<usize> = (i + 1..n).collect();
        let mut chosen = None;
        for (slot, &j) in free_cols.iter().enumerate() {
            let candidate = fixed_cost + cost.get(i, j);
            let completion = if remaining_rows.is_empty() {
                0.0
            } else {
                let cols_left: Vec<usize> =
                    free_cols.iter().copied().filter(|&c| c != j).collect();
                solve_assignment(cost, &remaining_rows, &cols_left).1
            };
            if (candidate + completion - target).abs() <= tol {
                chosen = Some((slot, j));
                break;
            }
        }
        let (slot, j) = chosen.expect("an optimal completion always exists");
        perm[i] = j;
        fixed_cost += cost.get(i, j);
        free_cols.remove(slot);
    }
    Ok(perm)
}

/// Solves the assignment restricted to the given rows/columns; returns the
/// column choice per row (as indexes into `cols`) and the optimal total.
///
/// Shortest-augmenting-path formulation with dual potentials and a virtual
/// column 0.
fn solve_assignment(cost: &CostMatrix, rows: &[usize], cols: &[usize]) -> (Vec<usize>, f64) {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j] = 1-based row occupying column j; column 0 is virtual
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.get(rows[i], cols[j]))
        .sum();
    (assignment, total)
}

/// Result of a matching loss evaluation.
#[derive(Debug, Clone)]
pub struct MatchingLoss {
    pub loss: f64,
    /// `perm[i]` = prediction slot aligned with gold event i.
    pub assignment: Vec<usize>,
    /// Gradient with respect to the prediction logits, same layout as the
    /// prediction tensor.
    pub d_logits: LabelTensor,
}

/// Bipartite matching loss between prediction probabilities and 0/1 gold.
///
/// Finds the optimal permutation, reorders the prediction slices to align
/// with gold, and applies mean binary cross-entropy over all positions. Gold
/// tensors for documents with fewer events than slots are padded upstream
/// with all-zero slices.
pub fn matching_loss(pred: &LabelTensor, gold: &LabelTensor) -> Result<MatchingLoss> {
    matching_loss_with_sign(pred, gold, CostSign::NegatedAgreement)
}

/// [`matching_loss`] with an explicit cost sign, for ablation.
pub fn matching_loss_with_sign(
    pred: &LabelTensor,
    gold: &LabelTensor,
    sign: CostSign,
) -> Result<MatchingLoss> {
    if !pred.same_shape(gold) {
        return Err(Error::shape(format!(
            "matching loss: prediction dims {:?} vs gold dims {:?}",
            pred.dims(),
            gold.dims()
        )));
    }
    for v in gold.data() {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::invalid("gold label tensor entries must be 0 or 1"));
        }
    }
    let m = pred.event_count();
    let mut cost = CostMatrix::from_fn(m, |_, _| 0.0);
    for gold_idx in 0..m {
        for pred_idx in 0..m {
            let c = pairwise_cost(pred.slice(pred_idx), gold.slice(gold_idx), sign)?;
            cost.data[gold_idx * m + pred_idx] = c;
        }
    }
    let assignment = hungarian(&cost)?;

    // Cross-entropy over aligned slices; the permutation is a constant here.
    // Accumulation runs in prediction-slot order so that permuting the gold
    // events (which permutes the assignment but not the aligned contents)
    // reproduces the loss bitwise.
    let mut gold_of = vec![usize::MAX; m];
    for (gold_idx, &pred_idx) in assignment.iter().enumerate() {
        gold_of[pred_idx] = gold_idx;
    }
    let count = (m * pred.slice_len()) as f64;
    let mut loss = 0.0;
    let mut d_logits = LabelTensor::zeros(m, pred.tokens, pred.types);
    for (pred_idx, &gold_idx) in gold_of.iter().enumerate() {
        let ps = pred.slice(pred_idx);
        let ys = gold.slice(gold_idx);
        let base = pred_idx * pred.slice_len();
        for (k, (p, y)) in ps.iter().zip(ys).enumerate() {
            let pc = p.clamp(1e-12, 1.0 - 1e-12);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            d_logits.data[base + k] = (p - y) / count;
        }
    }
    Ok(MatchingLoss { loss: loss / count, assignment, d_logits })
}

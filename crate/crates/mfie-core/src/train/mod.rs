//! Desk-scale trainable pipelines: a toy embedding encoder with analytic
//! gradients end-to-end, FGM adversarial perturbation, and the training
//! loops for sentence-level (pointer + trigger multi-task) and
//! document-level (set decoder + matching loss) extraction.
//!
//! Everything is deterministic under a fixed seed: initialization draws in a
//! fixed order from one seeded generator, examples are visited in corpus
//! order, and no step consumes randomness.

mod augment;
mod checkpoint;

pub use augment::{random_delete, synonyms_replace, synonyms_replace_masked, SynonymDict};
pub use checkpoint::{load_dee_model, load_see_model, save_dee_model, save_see_model, ModelKind};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{
    decode_with_cache, decode_backward, DecoderStack, QueryBank, DEFAULT_HEADS, DEFAULT_LAYERS,
    DEFAULT_QUERY_COUNT,
};
use crate::error::{Error, Result};
use crate::matching::{matching_loss, LabelTensor};
use crate::metrics::{dee_f1_corpus, see_f1_corpus, AssignmentStrategy, Event};
use crate::pointer::{
    bce_loss, entity_type_label, gold_grid, score_backward, score_with_cache,
    split_entity_type_label, PointerParams, TypedSpan,
};
use crate::records::EventRecord;
use crate::tensor::Matrix;
use crate::text::{find_token_subsequence, tokenize, Token};
use crate::trigger::{fuse_backward, fuse_with_cache, pool_argmax, pool_triggers, FusionParams};
use crate::window::{merge, split, Segment};

/// Reserved row 0 of every embedding table.
pub const UNK_TOKEN: &str = "<unk>";

/// Hyperparameters for the toy trainers. Loaded from the TOML config file by
/// the CLI; flags override fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Embedding and model width.
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// FGM perturbation radius; 0 disables the adversarial pass.
    pub fgm_epsilon: f64,
    /// Weight of the argument pointer loss.
    pub arg_loss_weight: f64,
    /// Weight of the auxiliary trigger loss; 0 disables the trigger task
    /// (no trigger loss, no fusion), reducing to single-task training.
    pub trigger_loss_weight: f64,
    /// Epochs trained without fusion before the trigger representations are
    /// merged in. Mirrors the next-iteration merge of the original training
    /// scheme, and keeps the argument head off the dead region where the
    /// fusion weights zero out exactly the tokens that still carry loss.
    pub fusion_warmup_epochs: usize,
    /// Decoupled weight decay on weight matrices; 0 disables.
    pub weight_decay: f64,
    pub seed: u64,
    /// Probability a non-entity token is replaced by a synonym (augment op).
    pub synonym_prob: f64,
    /// Probability a non-entity token is deleted (augment op).
    pub delete_prob: f64,
    /// Number of event query slots (document-level).
    pub query_count: usize,
    /// Decoder layers (document-level).
    pub decoder_layers: usize,
    /// Attention heads (document-level).
    pub heads: usize,
    /// Sliding window size in characters (document-level).
    pub window: usize,
    /// Sliding window stride in characters (document-level).
    pub stride: usize,
    /// Apply the tanh projection after the embedding lookup.
    pub use_projection: bool,
    /// Span decoding threshold used during evaluation and prediction.
    pub decode_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            learning_rate: 2.0,
            epochs: 200,
            fgm_epsilon: 0.5,
            arg_loss_weight: 1.0,
            trigger_loss_weight: 0.5,
            fusion_warmup_epochs: 50,
            weight_decay: 0.0,
            seed: 7,
            synonym_prob: 0.1,
            delete_prob: 0.1,
            query_count: DEFAULT_QUERY_COUNT,
            decoder_layers: DEFAULT_LAYERS,
            heads: DEFAULT_HEADS,
            window: 512,
            stride: 256,
            use_projection: true,
            decode_threshold: 0.5,
        }
    }
}

// ---------------------------------------------------------------------------
// Toy encoder
// ---------------------------------------------------------------------------

/// Affine map plus tanh applied after the embedding lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Trainable token-embedding encoder standing in for a pretrained model.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    pub vocab: Vec<String>,
    vocab_index: HashMap<String, usize>,
    /// `|V| x d`.
    pub embedding: Matrix,
    pub projection: Option<Projection>,
}

impl ToyEncoder {
    /// Builds an encoder over a vocabulary; row 0 is the unknown token.
    pub fn init(tokens: &[String], dim: usize, use_projection: bool, rng: &mut impl Rng) -> Self {
        let mut vocab = vec![UNK_TOKEN.to_string()];
        vocab.extend(tokens.iter().filter(|t| t.as_str() != UNK_TOKEN).cloned());
        let vocab_index: HashMap<String, usize> =
            vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let embedding = Matrix::from_fn(vocab.len(), dim, |_, _| rng.random_range(-0.5..0.5));
        let scale = 1.0 / (dim as f64).sqrt();
        let projection = use_projection.then(|| Projection {
            weight: Matrix::from_fn(dim, dim, |_, _| rng.random_range(-scale..scale)),
            bias: vec![0.0; dim],
        });
        ToyEncoder { vocab, vocab_index, embedding, projection }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn from_parts(vocab: Vec<String>, embedding: Matrix, projection: Option<Projection>) -> Self {
        let vocab_index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        ToyEncoder { vocab, vocab_index, embedding, projection }
    }

    pub fn dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.vocab_index.get(token).copied().unwrap_or(0)
    }

    pub fn ids(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.token_id(&t.text)).collect()
    }

    /// Embedding rows for a token-id sequence.
    pub fn gather(&self, ids: &[usize]) -> Matrix {
        Matrix::from_fn(ids.len(), self.dim(), |j, c| self.embedding.get(ids[j], c))
    }

    /// Applies the optional projection; returns the token representations.
    pub fn represent(&self, embedded: &Matrix) -> Matrix {
        match &self.projection {
            None => embedded.clone(),
            Some(p) => {
                let mut h = crate::tensor::matmul(embedded, &p.weight).expect("shape");
                for j in 0..h.rows() {
                    let row = h.row_mut(j);
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = (*v + p.bias[c]).tanh();
                    }
                }
                h
            }
        }
    }

    /// Backward through the projection: given `h = represent(embedded)` and
    /// its gradient, returns the embedded-sequence gradient and projection
    /// gradients.
    pub fn represent_backward(
        &self,
        embedded: &Matrix,
        h: &Matrix,
        d_h: &Matrix,
    ) -> (Matrix, Option<Projection>) {
        match &self.projection {
            None => (d_h.clone(), None),
            Some(p) => {
                let mut d_pre = Matrix::zeros(h.rows(), h.cols());
                for j in 0..h.rows() {
                    for c in 0..h.cols() {
                        let t = h.get(j, c);
                        d_pre.set(j, c, d_h.get(j, c) * (1.0 - t * t));
                    }
                }
                let d_weight =
                    crate::tensor::matmul(&embedded.transpose(), &d_pre).expect("shape");
                let mut d_bias = vec![0.0; h.cols()];
                for j in 0..d_pre.rows() {
                    for (c, db) in d_bias.iter_mut().enumerate() {
                        *db += d_pre.get(j, c);
                    }
                }
                let d_embedded =
                    crate::tensor::matmul(&d_pre, &p.weight.transpose()).expect("shape");
                (d_embedded, Some(Projection { weight: d_weight, bias: d_bias }))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// FGM
// ---------------------------------------------------------------------------

/// The FGM perturbation `r_adv = epsilon * g / ||g||_2` over a whole
/// embedding sequence (Frobenius norm). A zero gradient yields a zero
/// perturbation.
pub fn fgm_perturb(grad: &Matrix, epsilon: f64) -> Matrix {
    debug_assert!(epsilon >= 0.0);
    let norm = grad.frobenius_norm();
    if norm == 0.0 || epsilon == 0.0 {
        return Matrix::zeros(grad.rows(), grad.cols());
    }
    grad.scale(epsilon / norm)
}

/// Outcome of the one- or two-pass FGM evaluation.
pub struct FgmPasses<G> {
    pub clean_loss: f64,
    pub adv_loss: Option<f64>,
    /// Parameter gradients of the clean pass, then of the adversarial pass.
    pub grads: Vec<G>,
    /// Embedding-sequence gradients in the same order.
    pub embedding_grads: Vec<Matrix>,
}

/// Evaluates the loss on the clean embeddings, perturbs them along the
/// normalized gradient, and re-evaluates. With `epsilon == 0` the
/// adversarial pass is skipped entirely, making the step identical to a
/// plain one.
pub fn fgm_passes<G>(
    embedded: &Matrix,
    epsilon: f64,
    mut eval: impl FnMut(&Matrix) -> Result<(f64, Matrix, G)>,
) -> Result<FgmPasses<G>> {
    let (clean_loss, d_embedded, grads) = eval(embedded)?;
    if !clean_loss.is_finite() {
        return Err(Error::training(format!("non-finite loss {clean_loss}")));
    }
    let mut passes = FgmPasses {
        clean_loss,
        adv_loss: None,
        grads: vec![grads],
        embedding_grads: Vec::new(),
    };
    if epsilon > 0.0 {
        let r_adv = fgm_perturb(&d_embedded, epsilon);
        let perturbed = embedded.add(&r_adv);
        let (adv_loss, d_adv, adv_grads) = eval(&perturbed)?;
        if !adv_loss.is_finite() {
            return Err(Error::training(format!("non-finite adversarial loss {adv_loss}")));
        }
        passes.adv_loss = Some(adv_loss);
        passes.grads.push(adv_grads);
        passes.embedding_grads.push(d_embedded);
        passes.embedding_grads.push(d_adv);
    } else {
        passes.embedding_grads.push(d_embedded);
    }
    Ok(passes)
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

struct Sgd {
    lr: f64,
    weight_decay: f64,
}

impl Sgd {
    fn matrix(&self, param: &mut Matrix, grad: &Matrix, decay: bool) {
        let wd = if decay { self.weight_decay } else { 0.0 };
        for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
            *p -= self.lr * g + self.lr * wd * *p;
        }
    }

    fn vector(&self, param: &mut [f64], grad: &[f64]) {
        for (p, g) in param.iter_mut().zip(grad) {
            *p -= self.lr * g;
        }
    }
}

// ---------------------------------------------------------------------------
// Sentence-level model and corpus
// ---------------------------------------------------------------------------

/// Sentence-level extraction model: encoder, trigger head, fusion, argument
/// head.
#[derive(Debug, Clone)]
pub struct SeeModel {
    pub encoder: ToyEncoder,
    pub fusion: FusionParams,
    pub arg_head: PointerParams,
    pub trigger_head: PointerParams,
    /// Argument labels: `event_type + separator + role`.
    pub arg_types: Vec<String>,
    /// Trigger labels: event types.
    pub trigger_types: Vec<String>,
    /// Whether the trigger task (loss and fusion) is active.
    pub use_trigger: bool,
    pub decode_threshold: f64,
}

fn init_pointer(types: usize, dim: usize, rng: &mut impl Rng) -> PointerParams {
    let scale = 1.0 / (dim as f64).sqrt();
    PointerParams {
        start_weights: Matrix::from_fn(types, dim, |_, _| rng.random_range(-scale..scale)),
        start_bias: vec![0.0; types],
        end_weights: Matrix::from_fn(types, dim, |_, _| rng.random_range(-scale..scale)),
        end_bias: vec![0.0; types],
    }
}

impl SeeModel {
    pub fn init(
        vocab: &[String],
        arg_types: Vec<String>,
        trigger_types: Vec<String>,
        config: &TrainConfig,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = ToyEncoder::init(vocab, config.dim, config.use_projection, &mut rng);
        // Fusion starts at unit scale so the softmax weights are peaked from
        // the first step; a near-uniform start scales every row by ~1/l and
        // the argument head sits on a plateau it cannot leave.
        let fusion = FusionParams {
            v: (0..config.dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            w1: Matrix::from_fn(config.dim, config.dim, |_, _| rng.random_range(-1.0..1.0)),
            w2: Matrix::from_fn(config.dim, config.dim, |_, _| rng.random_range(-1.0..1.0)),
        };
        let arg_head = init_pointer(arg_types.len(), config.dim, &mut rng);
        let trigger_head = init_pointer(trigger_types.len().max(1), config.dim, &mut rng);
        SeeModel {
            encoder,
            fusion,
            arg_head,
            trigger_head,
            arg_types,
            trigger_types,
            use_trigger: config.trigger_loss_weight > 0.0,
            decode_threshold: config.decode_threshold,
        }
    }
}

/// One training sentence with located gold spans.
#[derive(Debug, Clone)]
pub struct SeeExample {
    pub text: String,
    pub tokens: Vec<Token>,
    pub token_ids: Vec<usize>,
    pub arg_spans: Vec<TypedSpan>,
    pub trigger_spans: Vec<TypedSpan>,
    pub gold_events: Vec<Event>,
}

/// A sentence-level corpus with its vocabularies.
#[derive(Debug, Clone)]
pub struct SeeCorpus {
    pub examples: Vec<SeeExample>,
    pub vocab: Vec<String>,
    pub arg_types: Vec<String>,
    pub trigger_types: Vec<String>,
}

/// Locates `needle` as a token subsequence; logs and returns None when the
/// surface string cannot be found on token boundaries.
fn locate(tokens: &[Token], needle: &str, what: &str, context: &str) -> Option<(usize, usize)> {
    let needle_tokens: Vec<String> = tokenize(needle).into_iter().map(|t| t.text).collect();
    let found = find_token_subsequence(tokens, &needle_tokens);
    if found.is_none() {
        log::warn!("could not locate {what} {needle:?} in {context:?}; span skipped");
    }
    found
}

impl SeeCorpus {
    /// Builds the corpus, the token vocabulary, and both label vocabularies
    /// from sentence-level records.
    pub fn from_records(records: &[EventRecord]) -> Result<SeeCorpus> {
        if records.is_empty() {
            return Err(Error::invalid("empty training corpus"));
        }
        let mut vocab: Vec<String> = Vec::new();
        let mut arg_types: Vec<String> = Vec::new();
        let mut trigger_types: Vec<String> = Vec::new();
        for record in records {
            for token in tokenize(&record.text) {
                vocab.push(token.text);
            }
            for event in &record.event_list {
                trigger_types.push(event.event_type.clone());
                for arg in &event.arguments {
                    arg_types.push(entity_type_label(&event.event_type, &arg.role));
                }
            }
        }
        vocab.sort();
        vocab.dedup();
        arg_types.sort();
        arg_types.dedup();
        trigger_types.sort();
        trigger_types.dedup();

        let arg_index: HashMap<&str, usize> =
            arg_types.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let trigger_index: HashMap<&str, usize> =
            trigger_types.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

        let examples = records
            .iter()
            .map(|record| {
                let tokens = tokenize(&record.text);
                let mut arg_spans = Vec::new();
                let mut trigger_spans = Vec::new();
                for event in &record.event_list {
                    if let Some(trigger) = &event.trigger {
                        if let Some((s, e)) = locate(&tokens, trigger, "trigger", &record.text) {
                            trigger_spans.push(TypedSpan {
                                type_index: trigger_index[event.event_type.as_str()],
                                start: s,
                                end: e,
                                score: 1.0,
                            });
                        }
                    }
                    for arg in &event.arguments {
                        let label = entity_type_label(&event.event_type, &arg.role);
                        if let Some((s, e)) = locate(&tokens, &arg.argument, "argument", &record.text)
                        {
                            arg_spans.push(TypedSpan {
                                type_index: arg_index[label.as_str()],
                                start: s,
                                end: e,
                                score: 1.0,
                            });
                        }
                    }
                }
                arg_spans.sort_by_key(|s| (s.type_index, s.start, s.end));
                arg_spans.dedup_by_key(|s| (s.type_index, s.start, s.end));
                trigger_spans.sort_by_key(|s| (s.type_index, s.start, s.end));
                trigger_spans.dedup_by_key(|s| (s.type_index, s.start, s.end));
                SeeExample {
                    text: record.text.clone(),
                    tokens,
                    token_ids: Vec::new(),
                    arg_spans,
                    trigger_spans,
                    gold_events: record.events(),
                }
            })
            .collect();

        let corpus = SeeCorpus { examples, vocab, arg_types, trigger_types };
        Ok(corpus.reindex())
    }

    fn reindex(mut self) -> SeeCorpus {
        let index: HashMap<&str, usize> = std::iter::once((UNK_TOKEN, 0))
            .chain(self.vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i + 1)))
            .collect();
        for ex in &mut self.examples {
            ex.token_ids = ex
                .tokens
                .iter()
                .map(|t| index.get(t.text.as_str()).copied().unwrap_or(0))
                .collect();
        }
        self
    }
}

/// Parameter gradients of one sentence-level pass (embedding table excluded;
/// the caller folds the embedding-sequence gradient into the table).
pub struct SeeGrads {
    pub projection: Option<Projection>,
    pub fusion: FusionParams,
    pub arg_head: PointerParams,
    pub trigger_head: PointerParams,
}

impl SeeGrads {
    fn add_assign(&mut self, other: &SeeGrads) {
        if let (Some(a), Some(b)) = (self.projection.as_mut(), other.projection.as_ref()) {
            a.weight.add_assign(&b.weight);
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        add_fusion(&mut self.fusion, &other.fusion);
        add_pointer(&mut self.arg_head, &other.arg_head);
        add_pointer(&mut self.trigger_head, &other.trigger_head);
    }
}

fn add_pointer(a: &mut PointerParams, b: &PointerParams) {
    a.start_weights.add_assign(&b.start_weights);
    a.end_weights.add_assign(&b.end_weights);
    for (x, y) in a.start_bias.iter_mut().zip(&b.start_bias) {
        *x += y;
    }
    for (x, y) in a.end_bias.iter_mut().zip(&b.end_bias) {
        *x += y;
    }
}

fn add_fusion(a: &mut FusionParams, b: &FusionParams) {
    for (x, y) in a.v.iter_mut().zip(&b.v) {
        *x += y;
    }
    a.w1.add_assign(&b.w1);
    a.w2.add_assign(&b.w2);
}

/// Mean of the token representations over a span.
fn span_representation(h: &Matrix, span: &TypedSpan) -> Vec<f64> {
    let d = h.cols();
    let len = (span.end - span.start + 1) as f64;
    let mut rep = vec![0.0; d];
    for j in span.start..=span.end {
        for (c, r) in rep.iter_mut().enumerate() {
            *r += h.get(j, c) / len;
        }
    }
    rep
}

/// Loss and gradients of one sentence given an explicit embedding sequence.
/// Returns (loss, d_embedded, parameter grads). `fuse` controls whether the
/// gold-trigger representations are merged into the argument-task inputs
/// (off during warm-up epochs).
pub fn see_loss_grads(
    model: &SeeModel,
    example: &SeeExample,
    embedded: &Matrix,
    config: &TrainConfig,
    fuse: bool,
) -> Result<(f64, Matrix, SeeGrads)> {
    let l = example.tokens.len();
    let h = model.encoder.represent(embedded);
    let use_trigger = config.trigger_loss_weight > 0.0;

    // trigger task on the unfused representations
    let (trig_grid, _trig_cache) = score_with_cache(&h, &model.trigger_head)?;
    let trig_gold = gold_grid(l, model.trigger_head.type_count(), &example.trigger_spans);

    // gold-trigger fusion for the argument task
    let trigger_reps: Vec<Vec<f64>> = example
        .trigger_spans
        .iter()
        .map(|s| span_representation(&h, s))
        .collect();
    let pooled = if use_trigger && fuse { pool_triggers(&trigger_reps) } else { None };
    let (fused, fuse_cache) = match &pooled {
        Some(t) => {
            let (f, c) = fuse_with_cache(&h, t, &model.fusion)?;
            (f, Some(c))
        }
        None => (h.clone(), None),
    };

    let (arg_grid, _arg_cache) = score_with_cache(&fused, &model.arg_head)?;
    let arg_gold = gold_grid(l, model.arg_head.type_count(), &example.arg_spans);

    let (arg_loss, arg_bce) = bce_loss(&arg_grid, &arg_gold)?;
    let mut loss = config.arg_loss_weight * arg_loss;

    // backward: argument head
    let d_arg_start = arg_bce.d_start_logits.scale(config.arg_loss_weight);
    let d_arg_end = arg_bce.d_end_logits.scale(config.arg_loss_weight);
    let arg_grads = score_backward(&fused, &model.arg_head, &d_arg_start, &d_arg_end);

    // through fusion back to h
    let mut d_h;
    let mut fusion_grads = FusionParams::zeros(model.fusion.dim());
    match (&pooled, &fuse_cache) {
        (Some(t), Some(cache)) => {
            let fg = fuse_backward(&h, t, &model.fusion, cache, &arg_grads.tokens);
            d_h = fg.tokens;
            fusion_grads = fg.params;
            // pooled trigger gradient routes to the argmax trigger rep, then
            // spreads uniformly over that span's token rows
            let owners = pool_argmax(&trigger_reps);
            for (c, &owner) in owners.iter().enumerate() {
                let span = &example.trigger_spans[owner];
                let len = (span.end - span.start + 1) as f64;
                for j in span.start..=span.end {
                    d_h.set(j, c, d_h.get(j, c) + fg.trigger[c] / len);
                }
            }
        }
        _ => {
            d_h = arg_grads.tokens;
        }
    }

    // trigger head loss and gradients
    let mut trigger_grads = PointerParams::zeros(model.trigger_head.type_count(), model.encoder.dim());
    if use_trigger {
        let (trig_loss, trig_bce) = bce_loss(&trig_grid, &trig_gold)?;
        loss += config.trigger_loss_weight * trig_loss;
        let d_ts = trig_bce.d_start_logits.scale(config.trigger_loss_weight);
        let d_te = trig_bce.d_end_logits.scale(config.trigger_loss_weight);
        let tg = score_backward(&h, &model.trigger_head, &d_ts, &d_te);
        d_h.add_assign(&tg.tokens);
        trigger_grads = tg.params;
    }

    let (d_embedded, projection_grads) = model.encoder.represent_backward(embedded, &h, &d_h);
    Ok((
        loss,
        d_embedded,
        SeeGrads {
            projection: projection_grads,
            fusion: fusion_grads,
            arg_head: arg_grads.params,
            trigger_head: trigger_grads,
        },
    ))
}

/// One FGM training step on a sentence. Returns the clean loss.
pub fn see_fgm_step(
    model: &mut SeeModel,
    example: &SeeExample,
    config: &TrainConfig,
    fuse: bool,
) -> Result<f64> {
    let embedded = model.encoder.gather(&example.token_ids);
    let passes = fgm_passes(&embedded, config.fgm_epsilon, |e| {
        see_loss_grads(model, example, e, config, fuse)
    })?;

    let mut grads = passes.grads;
    let mut total = grads.remove(0);
    for g in &grads {
        total.add_assign(g);
    }
    let sgd = Sgd { lr: config.learning_rate, weight_decay: config.weight_decay };
    // embedding rows touched by this example, summed over both passes
    let dim = model.encoder.dim();
    for d_embedded in &passes.embedding_grads {
        for (j, &id) in example.token_ids.iter().enumerate() {
            for c in 0..dim {
                let v = model.encoder.embedding.get(id, c) - sgd.lr * d_embedded.get(j, c);
                model.encoder.embedding.set(id, c, v);
            }
        }
    }
    if let (Some(p), Some(g)) = (model.encoder.projection.as_mut(), total.projection.as_ref()) {
        sgd.matrix(&mut p.weight, &g.weight, true);
        sgd.vector(&mut p.bias, &g.bias);
    }
    sgd.matrix(&mut model.fusion.w1, &total.fusion.w1, true);
    sgd.matrix(&mut model.fusion.w2, &total.fusion.w2, true);
    sgd.vector(&mut model.fusion.v, &total.fusion.v);
    apply_pointer(&sgd, &mut model.arg_head, &total.arg_head);
    apply_pointer(&sgd, &mut model.trigger_head, &total.trigger_head);
    Ok(passes.clean_loss)
}

fn apply_pointer(sgd: &Sgd, param: &mut PointerParams, grad: &PointerParams) {
    sgd.matrix(&mut param.start_weights, &grad.start_weights, true);
    sgd.matrix(&mut param.end_weights, &grad.end_weights, true);
    sgd.vector(&mut param.start_bias, &grad.start_bias);
    sgd.vector(&mut param.end_bias, &grad.end_bias);
}

/// Per-epoch training log entry.
#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub f1: f64,
}

/// A trained model together with its per-epoch history.
pub struct TrainOutcome<M> {
    pub model: M,
    pub history: Vec<EpochMetrics>,
}

/// Trains the sentence-level model: per sentence, encode, fuse gold
/// triggers, pointer losses on arguments and triggers with configured
/// weights, one FGM step. Logs token-level argument F1 per epoch.
pub fn train_see(corpus: &SeeCorpus, config: &TrainConfig) -> Result<TrainOutcome<SeeModel>> {
    if corpus.examples.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let mut model = SeeModel::init(
        &corpus.vocab,
        corpus.arg_types.clone(),
        corpus.trigger_types.clone(),
        config,
    );
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let fuse = epoch >= config.fusion_warmup_epochs;
        let mut loss_sum = 0.0;
        for (idx, example) in corpus.examples.iter().enumerate() {
            let loss = see_fgm_step(&mut model, example, config, fuse).map_err(|e| {
                Error::training(format!("epoch {epoch}, sentence {idx}: {e}"))
            })?;
            loss_sum += loss;
        }
        let f1 = evaluate_see(&model, corpus);
        history.push(EpochMetrics {
            epoch,
            mean_loss: loss_sum / corpus.examples.len() as f64,
            f1,
        });
        log::info!("see epoch {epoch}: loss {:.6} f1 {:.4}", loss_sum / corpus.examples.len() as f64, f1);
    }
    Ok(TrainOutcome { model, history })
}

/// Argument token-F1 of the model against the corpus gold events.
pub fn evaluate_see(model: &SeeModel, corpus: &SeeCorpus) -> f64 {
    let predictions: Vec<Vec<Event>> = corpus
        .examples
        .iter()
        .map(|ex| predict_see_events(model, &ex.text))
        .collect();
    let pairs: Vec<(&[Event], &[Event])> = predictions
        .iter()
        .zip(&corpus.examples)
        .map(|(pred, ex)| (pred.as_slice(), ex.gold_events.as_slice()))
        .collect();
    see_f1_corpus(pairs).f1
}

fn span_text(text: &str, tokens: &[Token], span: &TypedSpan) -> String {
    let start = tokens[span.start].char_start;
    let end = tokens[span.end].char_end;
    text.chars().skip(start).take(end - start).collect()
}

/// Full sentence-level inference: recognize triggers, pool and fuse their
/// representations, then decode argument spans into events grouped by event
/// type.
pub fn predict_see_events(model: &SeeModel, text: &str) -> Vec<Event> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Vec::new();
    }
    let ids = model.encoder.ids(&tokens);
    let embedded = model.encoder.gather(&ids);
    let h = model.encoder.represent(&embedded);
    let threshold = model.decode_threshold;

    let mut trigger_spans = Vec::new();
    if model.use_trigger {
        if let Ok(grid) = crate::pointer::score(&h, &model.trigger_head) {
            trigger_spans = crate::pointer::decode_spans(&grid, threshold);
        }
    }
    let fused = if model.use_trigger && !trigger_spans.is_empty() {
        let reps: Vec<Vec<f64>> =
            trigger_spans.iter().map(|s| span_representation(&h, s)).collect();
        match pool_triggers(&reps) {
            Some(t) => crate::trigger::fuse(&h, &t, &model.fusion).unwrap_or_else(|_| h.clone()),
            None => h.clone(),
        }
    } else {
        h.clone()
    };
    let Ok(arg_grid) = crate::pointer::score(&fused, &model.arg_head) else {
        return Vec::new();
    };
    let spans = crate::pointer::decode_spans(&arg_grid, threshold);

    // one event per event type; arguments keep decode order
    let mut events: Vec<Event> = Vec::new();
    for span in &spans {
        let label = &model.arg_types[span.type_index];
        let Some((event_type, role)) = split_entity_type_label(label) else { continue };
        let argument = span_text(text, &tokens, span);
        let event = match events.iter_mut().find(|e| e.event_type == event_type) {
            Some(e) => e,
            None => {
                let trigger = trigger_spans
                    .iter()
                    .filter(|t| model.trigger_types[t.type_index] == event_type)
                    .max_by(|a, b| a.score.total_cmp(&b.score))
                    .map(|t| span_text(text, &tokens, t));
                events.push(Event { event_type: event_type.to_string(), arguments: Vec::new(), trigger });
                events.last_mut().unwrap()
            }
        };
        event.arguments.push(crate::metrics::Argument::new(role, argument));
    }
    events
}

// ---------------------------------------------------------------------------
// Document-level model and corpus
// ---------------------------------------------------------------------------

/// Document-level extraction model: encoder, query bank, decoder stack, and
/// the shared output pointer head.
#[derive(Debug, Clone)]
pub struct DeeModel {
    pub encoder: ToyEncoder,
    pub queries: QueryBank,
    pub stack: DecoderStack,
    pub head: PointerParams,
    pub arg_types: Vec<String>,
    pub event_types: Vec<String>,
    pub decode_threshold: f64,
}

impl DeeModel {
    pub fn init(
        vocab: &[String],
        arg_types: Vec<String>,
        event_types: Vec<String>,
        config: &TrainConfig,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = ToyEncoder::init(vocab, config.dim, config.use_projection, &mut rng);
        let queries = QueryBank::init(config.query_count, config.dim, &mut rng);
        let stack = DecoderStack::init(config.decoder_layers, config.dim, config.heads, &mut rng)?;
        let head = init_pointer(arg_types.len(), config.dim, &mut rng);
        Ok(DeeModel {
            encoder,
            queries,
            stack,
            head,
            arg_types,
            event_types,
            decode_threshold: config.decode_threshold,
        })
    }
}

/// One windowed training unit of a document.
#[derive(Debug, Clone)]
pub struct DeeSegment {
    pub segment: Segment,
    pub tokens: Vec<Token>,
    pub token_ids: Vec<usize>,
    /// Gold label tensor, `query_count x tokens x 2 x arg_types`.
    pub gold: LabelTensor,
}

/// One document: gold events plus its training segments.
#[derive(Debug, Clone)]
pub struct DeeDocument {
    pub doc_id: String,
    pub text: String,
    pub gold_events: Vec<Event>,
    pub segments: Vec<DeeSegment>,
}

/// A document-level corpus with its vocabularies.
#[derive(Debug, Clone)]
pub struct DeeCorpus {
    pub documents: Vec<DeeDocument>,
    pub vocab: Vec<String>,
    pub arg_types: Vec<String>,
    pub event_types: Vec<String>,
}

impl DeeCorpus {
    /// Builds the corpus from document-level records, windowing each
    /// document and locating gold argument spans per segment.
    pub fn from_records(records: &[EventRecord], config: &TrainConfig) -> Result<DeeCorpus> {
        if records.is_empty() {
            return Err(Error::invalid("empty training corpus"));
        }
        let mut vocab: Vec<String> = Vec::new();
        let mut arg_types: Vec<String> = Vec::new();
        let mut event_types: Vec<String> = Vec::new();
        for record in records {
            for token in tokenize(&record.full_text()) {
                vocab.push(token.text);
            }
            for event in &record.event_list {
                event_types.push(event.event_type.clone());
                for arg in &event.arguments {
                    arg_types.push(entity_type_label(&event.event_type, &arg.role));
                }
            }
        }
        vocab.sort();
        vocab.dedup();
        arg_types.sort();
        arg_types.dedup();
        event_types.sort();
        event_types.dedup();
        let arg_index: HashMap<&str, usize> =
            arg_types.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let vocab_index: HashMap<&str, usize> = std::iter::once((UNK_TOKEN, 0))
            .chain(vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i + 1)))
            .collect();

        let m = config.query_count;
        let r = arg_types.len().max(1);
        let mut documents = Vec::with_capacity(records.len());
        for (idx, record) in records.iter().enumerate() {
            let doc_id = record
                .id
                .clone()
                .unwrap_or_else(|| format!("doc-{idx}"));
            if record.event_list.len() > m {
                return Err(Error::data(format!(
                    "document {doc_id:?} has {} gold events but only {m} query slots",
                    record.event_list.len()
                )));
            }
            let text = record.full_text();
            let segments = split(&doc_id, &text, config.window, config.stride)?
                .into_iter()
                .map(|segment| {
                    let tokens = tokenize(&segment.text);
                    let token_ids: Vec<usize> = tokens
                        .iter()
                        .map(|t| vocab_index.get(t.text.as_str()).copied().unwrap_or(0))
                        .collect();
                    let mut gold = LabelTensor::zeros(m, tokens.len().max(1), r);
                    for (slot, event) in record.event_list.iter().enumerate() {
                        for arg in &event.arguments {
                            let label = entity_type_label(&event.event_type, &arg.role);
                            let ty = arg_index[label.as_str()];
                            if let Some((s, e)) =
                                find_token_subsequence(&tokens, &tokenize_texts_of(&arg.argument))
                            {
                                gold.set(slot, s, 0, ty, 1.0);
                                gold.set(slot, e, 1, ty, 1.0);
                            }
                        }
                    }
                    DeeSegment { segment, tokens, token_ids, gold }
                })
                .collect();
            documents.push(DeeDocument {
                doc_id,
                text,
                gold_events: record.events(),
                segments,
            });
        }
        Ok(DeeCorpus { documents, vocab, arg_types, event_types })
    }
}

fn tokenize_texts_of(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Parameter gradients of one document-level pass (embedding table excluded).
pub struct DeeGrads {
    pub projection: Option<Projection>,
    pub queries: Matrix,
    pub stack: DecoderStack,
    pub head: PointerParams,
}

impl DeeGrads {
    fn add_assign(&mut self, other: &DeeGrads) {
        if let (Some(a), Some(b)) = (self.projection.as_mut(), other.projection.as_ref()) {
            a.weight.add_assign(&b.weight);
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        self.queries.add_assign(&other.queries);
        add_stack(&mut self.stack, &other.stack);
        add_pointer(&mut self.head, &other.head);
    }
}

fn add_stack(a: &mut DecoderStack, b: &DecoderStack) {
    for (la, lb) in a.layers.iter_mut().zip(&b.layers) {
        for (ma, mb) in [
            (&mut la.self_attn.wq, &lb.self_attn.wq),
            (&mut la.self_attn.wk, &lb.self_attn.wk),
            (&mut la.self_attn.wv, &lb.self_attn.wv),
            (&mut la.self_attn.wo, &lb.self_attn.wo),
            (&mut la.inter_attn.wq, &lb.inter_attn.wq),
            (&mut la.inter_attn.wk, &lb.inter_attn.wk),
            (&mut la.inter_attn.wv, &lb.inter_attn.wv),
            (&mut la.inter_attn.wo, &lb.inter_attn.wo),
            (&mut la.ffn.w1, &lb.ffn.w1),
            (&mut la.ffn.w2, &lb.ffn.w2),
        ] {
            ma.add_assign(mb);
        }
        for (va, vb) in [
            (&mut la.ffn.b1, &lb.ffn.b1),
            (&mut la.ffn.b2, &lb.ffn.b2),
            (&mut la.ln1.gamma, &lb.ln1.gamma),
            (&mut la.ln1.beta, &lb.ln1.beta),
            (&mut la.ln2.gamma, &lb.ln2.gamma),
            (&mut la.ln2.beta, &lb.ln2.beta),
            (&mut la.ln3.gamma, &lb.ln3.gamma),
            (&mut la.ln3.beta, &lb.ln3.beta),
        ] {
            for (x, y) in va.iter_mut().zip(vb) {
                *x += y;
            }
        }
    }
}

/// Loss and gradients for one segment given an explicit embedding sequence.
pub fn dee_loss_grads(
    model: &DeeModel,
    segment: &DeeSegment,
    embedded: &Matrix,
) -> Result<(f64, Matrix, DeeGrads)> {
    let h = model.encoder.represent(embedded);
    let (tensor, cache) = decode_with_cache(&h, &model.queries, &model.stack)?;
    let m = model.queries.count();

    let mut grids = Vec::with_capacity(m);
    for i in 0..m {
        let (grid, _) = score_with_cache(&tensor.slice(i), &model.head)?;
        grids.push(grid);
    }
    let pred = LabelTensor::from_grids(&grids)?;
    let out = matching_loss(&pred, &segment.gold)?;

    // route logit gradients back through each slot's pointer head
    let l = h.rows();
    let r = model.head.type_count();
    let mut d_tensor = crate::tensor::Tensor3::zeros(m, l, model.encoder.dim());
    let mut head_grads = PointerParams::zeros(r, model.encoder.dim());
    for i in 0..m {
        let mut d_start = Matrix::zeros(l, r);
        let mut d_end = Matrix::zeros(l, r);
        for j in 0..l {
            for t in 0..r {
                d_start.set(j, t, out.d_logits.get(i, j, 0, t));
                d_end.set(j, t, out.d_logits.get(i, j, 1, t));
            }
        }
        let slice = tensor.slice(i);
        let g = score_backward(&slice, &model.head, &d_start, &d_end);
        add_pointer(&mut head_grads, &g.params);
        d_tensor.set_slice(i, &g.tokens);
    }

    let dec = decode_backward(&h, &model.stack, &cache, &d_tensor);
    let (d_embedded, projection_grads) = model.encoder.represent_backward(embedded, &h, &dec.tokens);
    Ok((
        out.loss,
        d_embedded,
        DeeGrads {
            projection: projection_grads,
            queries: dec.queries,
            stack: dec.stack,
            head: head_grads,
        },
    ))
}

/// One FGM training step on a document segment. Returns the clean loss.
pub fn dee_fgm_step(model: &mut DeeModel, segment: &DeeSegment, config: &TrainConfig) -> Result<f64> {
    if segment.tokens.is_empty() {
        return Ok(0.0);
    }
    let embedded = model.encoder.gather(&segment.token_ids);
    let passes = fgm_passes(&embedded, config.fgm_epsilon, |e| dee_loss_grads(model, segment, e))?;

    let mut grads = passes.grads;
    let mut total = grads.remove(0);
    for g in &grads {
        total.add_assign(g);
    }
    let sgd = Sgd { lr: config.learning_rate, weight_decay: config.weight_decay };
    let dim = model.encoder.dim();
    for d_embedded in &passes.embedding_grads {
        for (j, &id) in segment.token_ids.iter().enumerate() {
            for c in 0..dim {
                let v = model.encoder.embedding.get(id, c) - sgd.lr * d_embedded.get(j, c);
                model.encoder.embedding.set(id, c, v);
            }
        }
    }
    if let (Some(p), Some(g)) = (model.encoder.projection.as_mut(), total.projection.as_ref()) {
        sgd.matrix(&mut p.weight, &g.weight, true);
        sgd.vector(&mut p.bias, &g.bias);
    }
    sgd.matrix(&mut model.queries.queries, &total.queries, true);
    for (layer, grad) in model.stack.layers.iter_mut().zip(&total.stack.layers) {
        for (m, g) in [
            (&mut layer.self_attn.wq, &grad.self_attn.wq),
            (&mut layer.self_attn.wk, &grad.self_attn.wk),
            (&mut layer.self_attn.wv, &grad.self_attn.wv),
            (&mut layer.self_attn.wo, &grad.self_attn.wo),
            (&mut layer.inter_attn.wq, &grad.inter_attn.wq),
            (&mut layer.inter_attn.wk, &grad.inter_attn.wk),
            (&mut layer.inter_attn.wv, &grad.inter_attn.wv),
            (&mut layer.inter_attn.wo, &grad.inter_attn.wo),
            (&mut layer.ffn.w1, &grad.ffn.w1),
            (&mut layer.ffn.w2, &grad.ffn.w2),
        ] {
            sgd.matrix(m, g, true);
        }
        for (v, g) in [
            (&mut layer.ffn.b1, &grad.ffn.b1),
            (&mut layer.ffn.b2, &grad.ffn.b2),
            (&mut layer.ln1.gamma, &grad.ln1.gamma),
            (&mut layer.ln1.beta, &grad.ln1.beta),
            (&mut layer.ln2.gamma, &grad.ln2.gamma),
            (&mut layer.ln2.beta, &grad.ln2.beta),
            (&mut layer.ln3.gamma, &grad.ln3.gamma),
            (&mut layer.ln3.beta, &grad.ln3.beta),
        ] {
            sgd.vector(v, g);
        }
    }
    apply_pointer(&sgd, &mut model.head, &total.head);
    Ok(passes.clean_loss)
}

/// Trains the document-level model: per segment, encode, decode the query
/// bank, score pointer grids per slot, matching loss, one FGM step. Logs
/// event-level F1 per epoch.
pub fn train_dee(corpus: &DeeCorpus, config: &TrainConfig) -> Result<TrainOutcome<DeeModel>> {
    if corpus.documents.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let mut model = DeeModel::init(
        &corpus.vocab,
        corpus.arg_types.clone(),
        corpus.event_types.clone(),
        config,
    )?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for doc in &corpus.documents {
            for segment in &doc.segments {
                let loss = dee_fgm_step(&mut model, segment, config).map_err(|e| {
                    Error::training(format!("epoch {epoch}, document {}: {e}", doc.doc_id))
                })?;
                loss_sum += loss;
                steps += 1;
            }
        }
        let f1 = evaluate_dee(&model, corpus, config.window, config.stride);
        history.push(EpochMetrics {
            epoch,
            mean_loss: loss_sum / steps.max(1) as f64,
            f1,
        });
        log::info!("dee epoch {epoch}: loss {:.6} f1 {:.4}", loss_sum / steps.max(1) as f64, f1);
    }
    Ok(TrainOutcome { model, history })
}

/// Event-level F1 of the model against the corpus gold events.
pub fn evaluate_dee(model: &DeeModel, corpus: &DeeCorpus, window: usize, stride: usize) -> f64 {
    let predictions: Vec<Vec<Event>> = corpus
        .documents
        .iter()
        .map(|doc| predict_dee_events(model, &doc.doc_id, &doc.text, window, stride))
        .collect();
    let pairs: Vec<(&[Event], &[Event])> = predictions
        .iter()
        .zip(&corpus.documents)
        .map(|(pred, doc)| (pred.as_slice(), doc.gold_events.as_slice()))
        .collect();
    dee_f1_corpus(pairs, AssignmentStrategy::Optimal).f1
}

/// Document-level inference: window the document, decode every segment, and
/// merge each query slot's spans back to document coordinates. A slot emits
/// an event only if it decodes at least one span.
pub fn predict_dee_events(
    model: &DeeModel,
    doc_id: &str,
    text: &str,
    window: usize,
    stride: usize,
) -> Vec<Event> {
    let Ok(segments) = split(doc_id, text, window, stride) else {
        return Vec::new();
    };
    let m = model.queries.count();
    let threshold = model.decode_threshold;
    // per slot, per segment: spans in segment-local character coordinates
    let mut per_slot: Vec<Vec<(Segment, Vec<TypedSpan>)>> = vec![Vec::new(); m];
    for segment in segments {
        let tokens = tokenize(&segment.text);
        if tokens.is_empty() {
            continue;
        }
        let ids = model.encoder.ids(&tokens);
        let embedded = model.encoder.gather(&ids);
        let h = model.encoder.represent(&embedded);
        let Ok(tensor) = crate::decoder::decode(&h, &model.queries, &model.stack) else {
            continue;
        };
        for slot in 0..m {
            let Ok(grid) = crate::pointer::score(&tensor.slice(slot), &model.head) else {
                continue;
            };
            let char_spans: Vec<TypedSpan> = crate::pointer::decode_spans(&grid, threshold)
                .into_iter()
                .map(|s| TypedSpan {
                    type_index: s.type_index,
                    start: tokens[s.start].char_start,
                    end: tokens[s.end].char_end - 1,
                    score: s.score,
                })
                .collect();
            per_slot[slot].push((segment.clone(), char_spans));
        }
    }

    let chars: Vec<char> = text.chars().collect();
    let mut events: Vec<Event> = Vec::new();
    for slot_segments in per_slot {
        let Ok(spans) = merge(&slot_segments) else { continue };
        if spans.is_empty() {
            continue;
        }
        // event type: majority vote over span labels, ties to the smaller
        let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
        for span in &spans {
            if let Some((et, _)) = split_entity_type_label(&model.arg_types[span.type_index]) {
                *counts.entry(et).or_insert(0) += 1;
            }
        }
        let Some((&event_type, _)) = counts.iter().max_by_key(|(et, n)| (**n, std::cmp::Reverse(*et))) else {
            continue;
        };
        let mut arguments = Vec::new();
        for span in &spans {
            let Some((et, role)) = split_entity_type_label(&model.arg_types[span.type_index]) else {
                continue;
            };
            if et != event_type {
                continue;
            }
            let argument: String = chars[span.start..=span.end].iter().collect();
            arguments.push(crate::metrics::Argument::new(role, argument));
        }
        if !arguments.is_empty() {
            let event = Event { event_type: event_type.to_string(), arguments, trigger: None };
            if !events.contains(&event) {
                events.push(event);
            }
        }
    }
    events
}

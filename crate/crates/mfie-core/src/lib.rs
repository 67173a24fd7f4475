//! Algorithmic kernel for multi-format information extraction.
//!
//! Three pipelines share this crate:
//!
//! - **Relations**: multi-slot relation schemas are disintegrated into
//!   single-slot triples, merged across extractor outputs by voting, and
//!   recomposed ([`schema`], [`vote`]).
//! - **Sentence-level events**: pointer-labeling heads tag per-type
//!   start/end tokens, with an auxiliary trigger recognizer whose pooled
//!   representation reweights the token sequence ([`pointer`], [`trigger`]).
//! - **Document-level events**: long documents are windowed, a set decoder
//!   refines a fixed bank of event queries, per-slot pointer grids are
//!   trained against gold events through an exact bipartite matching loss
//!   ([`window`], [`decoder`], [`matching`]).
//!
//! [`train`] wires the pieces into deterministic, desk-scale trainable
//! models with analytic gradients and FGM adversarial steps; [`metrics`]
//! scores all three tasks the way the tasks' leaderboards do; [`synth`]
//! generates seeded toy corpora.

pub mod decoder;
pub mod error;
pub mod matching;
pub mod metrics;
pub mod pointer;
pub mod records;
pub mod schema;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;
pub mod trigger;
pub mod vote;
pub mod window;

pub use error::{Error, Result};
pub use matching::{hungarian, matching_loss, CostMatrix, LabelTensor};
pub use metrics::{dee_f1, macro_average, re_f1, see_f1, Event, ScoreReport};
pub use pointer::{decode_spans, PointerGrid, PointerParams, TypedSpan};
pub use schema::{disintegrate, recompose, Relation, SchemaSet};
pub use tensor::{matmul, multi_head_attention, sigmoid, softmax, Matrix, Tensor3};
pub use train::{fgm_perturb, train_dee, train_see, TrainConfig};
pub use vote::{vote, weighted_vote, PredictionSet};
pub use window::{merge, split, Segment};

//! Knowledge-graph–augmented multiple-choice question answering with
//! entropy-weighted ("active") knowledge infusion.
//!
//! The pipeline: questions become premise/hypothesis pairs
//! ([`nli`], [`retrieval`]); concepts in each pair are linked to a knowledge
//! graph and connected into a subgraph ([`kg`], [`subgraph`]); a text
//! encoder, a GCN with attention pooling and an entity/relation attention
//! module produce three vectors per choice ([`encoders`]); [`training`]
//! scores choices and trains either with plain concatenation (BaseKnow) or
//! with per-question entropy weighting (ActKnow).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod encoders;
mod error;
pub mod kg;
pub mod nli;
pub mod retrieval;
pub mod rng;
pub mod subgraph;
pub mod synth;
pub mod text;
pub mod training;

pub use autodiff::{Tensor, Tape, Var};
pub use error::{Error, Result};
pub use kg::{EmbeddingTable, KnowledgeGraph, Triple};
pub use nli::{NliPair, QaItem};
pub use retrieval::{Corpus, InvertedIndex};
pub use subgraph::{ConceptMention, Subgraph};
pub use training::{Mode, ModelParams, TrainConfig};

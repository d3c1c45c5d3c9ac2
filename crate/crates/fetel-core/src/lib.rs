//! Fine-grained entity typing with type evidence from entity linking.
//!
//! Given a sentence and a mention span, the model in this crate predicts an
//! ancestor-closed set of hierarchical type labels (`/person`,
//! `/person/politician`, ...). Three representations are fused: the sentence
//! context (stacked bidirectional recurrent layers over the sequence with
//! the mention collapsed to a special token), the mention string (mean of
//! its word embeddings), and a one-hot encoding of the types the linked KB
//! entity carries, plus the linker's confidence. Type scores are dot
//! products between the fused mention vector and learned type embeddings;
//! positive scores are predicted.
//!
//! Linking is commonness-based: a mention resolves to the entity most often
//! targeted by anchors with the same surface string, and the commonness
//! value doubles as the confidence feature. Training data comes from anchor
//! links (each anchor weakly labeled with its target entity's mapped
//! types); a penalty-weighted margin loss, random fine-grained person types
//! injected into the KB evidence, and per-epoch NIL dropout keep the model
//! from shortcutting the weak labels through that same evidence.
//!
//! Module map:
//!
//! - [`types`]: type paths, the vocabulary (tag set), KB type mapping
//! - [`kb`]: entity records, anchor statistics, snapshot persistence
//! - [`linker`]: commonness argmax linking and person coreference
//! - [`corpus`]: mention JSONL, embeddings, weak labels, dev splits
//! - [`model`]: the typing model, decoding, checkpoints
//! - [`features`]: dataset featurization shared by training and evaluation
//! - [`training`]: the margin loss, noise mechanisms, optimization loop
//! - [`eval`]: strict accuracy, macro/micro F1, end-to-end evaluation
//! - [`synthetic`]: deterministic toy pipelines for tests and benchmarks

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod kb;
pub mod linker;
pub mod model;
pub mod synthetic;
pub mod training;
pub mod types;

pub use error::{Error, Result};

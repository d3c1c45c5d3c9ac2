//! The typing model: three input representations fused through an MLP and
//! scored against type embeddings.
//!
//! For a mention `m` the model computes a context representation `f_c` (two
//! stacked bidirectional recurrent layers over the sentence with the mention
//! span collapsed to a special token, summing the two layers' outputs at that
//! token), a mention string representation `f_s` (mean of the mention words'
//! embeddings), and a KB type representation `f_e` (one-hot of the linked
//! entity's mapped types) with the link confidence `g`. The concatenation
//! `f_c (+) f_s (+) f_e (+) g` passes through a three-layer MLP to `u_m`, and
//! the score for type `t_i` is the dot product `u_m . t_i`. A type is
//! predicted when its score is positive.

pub mod config;
pub mod lstm;
pub mod mlp;

mod checkpoint;

use std::collections::BTreeSet;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::{EmbedId, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::linker::LinkResult;
use crate::types::{KbTypeMapping, TypePath, TypeVocabulary};

pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint};
pub use config::ModelConfig;

use lstm::{BiLstmLayer, BiLstmTrace};
use mlp::{dropout_mask, Mlp, MlpTrace};

/// How scores are decoded into a label set: `MultiPath` keeps every positive
/// type, `SinglePath` keeps only the best root-to-leaf chain (for tag sets
/// that forbid multiple paths).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodePolicy {
    MultiPath,
    SinglePath,
}

impl FromStr for DecodePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi_path" => Ok(DecodePolicy::MultiPath),
            "single_path" => Ok(DecodePolicy::SinglePath),
            other => Err(Error::SchemaViolation {
                record: 0,
                detail: format!("unknown decode policy {:?}", other),
            }),
        }
    }
}

/// A mention prepared for the model: collapsed token ids, the mention-token
/// position, and the three non-context feature blocks.
#[derive(Debug, Clone)]
pub struct EncodedMention {
    pub ids: Vec<EmbedId>,
    pub mention_pos: usize,
    pub f_s: Array1<f64>,
    /// One-hot KB type vector of length `k`.
    pub f_e: Vec<f64>,
    /// Link confidence.
    pub g: f64,
}

/// Replaces the mention span with the special mention token, producing the
/// encoder input sequence of length `n - l + 1`.
pub fn collapse_span(
    table: &EmbeddingTable,
    tokens: &[String],
    span: (usize, usize),
) -> Result<(Vec<EmbedId>, usize)> {
    let (start, end) = span;
    if start >= end || end > tokens.len() {
        return Err(Error::SpanOutOfRange {
            start,
            end,
            len: tokens.len(),
        });
    }
    let mut ids = Vec::with_capacity(tokens.len() - (end - start) + 1);
    for token in &tokens[..start] {
        ids.push(table.id_of(token));
    }
    ids.push(EmbedId::MentionToken);
    for token in &tokens[end..] {
        ids.push(table.id_of(token));
    }
    Ok((ids, start))
}

/// The mention string representation: arithmetic mean of the span's word
/// embeddings.
pub fn encode_mention_string(
    table: &EmbeddingTable,
    tokens: &[String],
    span: (usize, usize),
) -> Result<Array1<f64>> {
    let (start, end) = span;
    if start >= end || end > tokens.len() {
        return Err(Error::SpanOutOfRange {
            start,
            end,
            len: tokens.len(),
        });
    }
    let mut sum = Array1::zeros(table.dimension());
    for token in &tokens[start..end] {
        sum += &table.lookup(token);
    }
    Ok(sum / (end - start) as f64)
}

/// The KB type representation and confidence for a link result: the one-hot
/// closure of the linked entity's mapped types, or all zeros for NIL.
pub fn encode_kb_types(
    link: &LinkResult,
    kb: &KnowledgeBase,
    mapping: &KbTypeMapping,
    vocab: &TypeVocabulary,
) -> Result<(Vec<f64>, f64)> {
    match &link.entity_id {
        None => Ok((vec![0.0; vocab.len()], 0.0)),
        Some(entity_id) => {
            let kb_types = kb.entity_types(entity_id)?;
            let mapped = mapping.map_kb_types(kb_types, vocab);
            Ok((vocab.one_hot(&mapped)?, link.confidence))
        }
    }
}

/// Activations cached while encoding one sentence.
pub struct ContextTrace {
    layer_traces: Vec<BiLstmTrace>,
    inter_masks: Vec<Option<Array2<f64>>>,
    mention_pos: usize,
}

/// Everything the backward pass needs for one batch.
pub struct BatchTrace {
    contexts: Vec<ContextTrace>,
    pub mlp: MlpTrace,
    u: Array2<f64>,
}

/// Gradients with the same shapes as the trainable parameters.
pub struct ModelGrads {
    pub mention_vec: Array2<f64>,
    pub context_layers: Vec<BiLstmLayer>,
    pub mlp: Mlp,
    pub type_embeddings: Array2<f64>,
}

/// Parameters of the full typing model. Word embeddings stay frozen in the
/// [`EmbeddingTable`]; the mention-token vector is trained.
#[derive(Debug, Clone)]
pub struct TypingModel {
    config: ModelConfig,
    k: usize,
    pub mention_vec: Array2<f64>,
    pub context_layers: Vec<BiLstmLayer>,
    pub mlp: Mlp,
    pub type_embeddings: Array2<f64>,
}

impl TypingModel {
    /// Builds a model with seeded initialization. The mention-token vector
    /// starts from the embedding table's entry and is trained from there.
    pub fn new(config: ModelConfig, k: usize, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        config.validate()?;
        if table.dimension() != config.embed_dim {
            return Err(Error::DimensionMismatch {
                context: "embedding table dimension".to_string(),
                expected: config.embed_dim,
                found: table.dimension(),
            });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut context_layers = Vec::with_capacity(config.recurrent_layers);
        for layer in 0..config.recurrent_layers {
            let input_dim = if layer == 0 {
                config.embed_dim
            } else {
                config.context_dim()
            };
            context_layers.push(BiLstmLayer::new(
                input_dim,
                config.recurrent_hidden,
                &mut rng,
            ));
        }
        let mut mlp_dims = Vec::with_capacity(config.mlp_layers + 1);
        mlp_dims.push(config.fused_dim(k));
        for _ in 0..config.mlp_layers - 1 {
            mlp_dims.push(config.mlp_hidden);
        }
        mlp_dims.push(config.type_embed_dim);
        let mlp = Mlp::new(&mlp_dims, &mut rng);
        let type_embeddings = Array2::from_shape_fn((k, config.type_embed_dim), |_| {
            rng.random_range(-0.05..0.05)
        });
        let mention_vec = table.mention_token_vector().to_owned().insert_axis(Axis(0));
        Ok(TypingModel {
            config,
            k,
            mention_vec,
            context_layers,
            mlp,
            type_embeddings,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Total number of trainable scalars.
    pub fn n_parameters(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    fn input_matrix(
        &self,
        table: &EmbeddingTable,
        ids: &[EmbedId],
        mention_pos: usize,
    ) -> Array2<f64> {
        let mut m = Array2::zeros((ids.len(), self.config.embed_dim));
        for (row, id) in ids.iter().enumerate() {
            if row == mention_pos {
                m.row_mut(row).assign(&self.mention_vec.row(0));
            } else {
                m.row_mut(row).assign(&table.row(*id));
            }
        }
        m
    }

    fn context_forward<R: Rng>(
        &self,
        inputs: Array2<f64>,
        mention_pos: usize,
        train_rng: Option<&mut R>,
    ) -> (Array1<f64>, ContextTrace) {
        let mut layer_traces = Vec::with_capacity(self.context_layers.len());
        let mut inter_masks = Vec::with_capacity(self.context_layers.len().saturating_sub(1));
        let inter_dropout =
            self.config.recurrent_inter_layer_dropout && self.config.dropout_rate > 0.0;
        let mut rng = train_rng;
        let mut cur = inputs;
        for (i, layer) in self.context_layers.iter().enumerate() {
            let trace = layer.forward(&cur);
            cur = trace.output.clone();
            if i + 1 < self.context_layers.len() {
                let mask = match (&mut rng, inter_dropout) {
                    (Some(r), true) => {
                        let mask = dropout_mask(cur.dim(), self.config.dropout_rate, *r);
                        cur = &cur * &mask;
                        Some(mask)
                    }
                    _ => None,
                };
                inter_masks.push(mask);
            }
            layer_traces.push(trace);
        }
        let mut f_c = Array1::zeros(self.config.context_dim());
        for trace in &layer_traces {
            f_c += &trace.output.row(mention_pos);
        }
        (
            f_c,
            ContextTrace {
                layer_traces,
                inter_masks,
                mention_pos,
            },
        )
    }

    fn context_backward(&self, trace: &ContextTrace, d_fc: &Array1<f64>, grads: &mut ModelGrads) {
        let n_layers = self.context_layers.len();
        let mut d_next_input: Option<Array2<f64>> = None;
        for i in (0..n_layers).rev() {
            let layer_trace = &trace.layer_traces[i];
            let mut d_out = Array2::zeros(layer_trace.output.raw_dim());
            {
                let mut row = d_out.row_mut(trace.mention_pos);
                row += d_fc;
            }
            if let Some(from_above) = d_next_input.take() {
                // Gradient flowing out of layer i+1's inputs, through the
                // inter-layer dropout mask when present.
                match &trace.inter_masks[i] {
                    Some(mask) => d_out += &(&from_above * mask),
                    None => d_out += &from_above,
                }
            }
            let dx =
                self.context_layers[i].backward(layer_trace, &d_out, &mut grads.context_layers[i]);
            if i == 0 {
                // Only the mention-token row is trainable.
                let mut mv = grads.mention_vec.row_mut(0);
                mv += &dx.row(trace.mention_pos);
            } else {
                d_next_input = Some(dx);
            }
        }
    }

    /// The context representation for one sentence, in evaluation mode.
    pub fn encode_context(
        &self,
        table: &EmbeddingTable,
        tokens: &[String],
        span: (usize, usize),
    ) -> Result<Array1<f64>> {
        let (ids, mention_pos) = collapse_span(table, tokens, span)?;
        let inputs = self.input_matrix(table, &ids, mention_pos);
        let (f_c, _) = self.context_forward::<ChaCha12Rng>(inputs, mention_pos, None);
        Ok(f_c)
    }

    fn fused_row(
        &self,
        f_c: &Array1<f64>,
        enc: &EncodedMention,
        out: &mut ndarray::ArrayViewMut1<f64>,
    ) {
        let ctx = self.config.context_dim();
        let emb = self.config.embed_dim;
        out.slice_mut(s![..ctx]).assign(f_c);
        out.slice_mut(s![ctx..ctx + emb]).assign(&enc.f_s);
        if self.config.use_el_features {
            for (j, &bit) in enc.f_e.iter().enumerate() {
                out[ctx + emb + j] = bit;
            }
            out[ctx + emb + self.k] = enc.g;
        } else {
            // Ablation: type evidence and confidence are zeroed before fusion.
            for j in 0..=self.k {
                out[ctx + emb + j] = 0.0;
            }
        }
    }

    fn check_encoded(&self, enc: &EncodedMention) -> Result<()> {
        if enc.f_s.len() != self.config.embed_dim {
            return Err(Error::DimensionMismatch {
                context: "f_s".to_string(),
                expected: self.config.embed_dim,
                found: enc.f_s.len(),
            });
        }
        if enc.f_e.len() != self.k {
            return Err(Error::DimensionMismatch {
                context: "f_e".to_string(),
                expected: self.k,
                found: enc.f_e.len(),
            });
        }
        Ok(())
    }

    /// Training-mode forward pass over a batch: batch-normalization uses the
    /// batch's statistics and dropout is active. Returns per-mention scores
    /// (batch x k) and the trace for [`TypingModel::backward_batch`].
    pub fn forward_batch_train<R: Rng>(
        &self,
        table: &EmbeddingTable,
        batch: &[EncodedMention],
        rng: &mut R,
    ) -> Result<(Array2<f64>, BatchTrace)> {
        let fused_dim = self.config.fused_dim(self.k);
        let mut fused = Array2::zeros((batch.len(), fused_dim));
        let mut contexts = Vec::with_capacity(batch.len());
        for (row, enc) in batch.iter().enumerate() {
            self.check_encoded(enc)?;
            let inputs = self.input_matrix(table, &enc.ids, enc.mention_pos);
            let (f_c, trace) = self.context_forward(inputs, enc.mention_pos, Some(rng));
            self.fused_row(&f_c, enc, &mut fused.row_mut(row));
            contexts.push(trace);
        }
        // Non-finite features must fail loudly here: the rectifier and the
        // hinge both map NaN to zero downstream, which would hide a poisoned
        // forward pass behind a finite loss.
        if !fused.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch: 0, step: 0 });
        }
        let (u, mlp_trace) = self
            .mlp
            .forward_train(&fused, self.config.dropout_rate, rng);
        let scores = u.dot(&self.type_embeddings.t());
        Ok((
            scores,
            BatchTrace {
                contexts,
                mlp: mlp_trace,
                u,
            },
        ))
    }

    /// Evaluation-mode forward pass: deterministic, running batch-norm
    /// statistics, no dropout.
    pub fn forward_batch_eval(
        &self,
        table: &EmbeddingTable,
        batch: &[EncodedMention],
    ) -> Result<Array2<f64>> {
        let fused_dim = self.config.fused_dim(self.k);
        let mut fused = Array2::zeros((batch.len(), fused_dim));
        for (row, enc) in batch.iter().enumerate() {
            self.check_encoded(enc)?;
            let inputs = self.input_matrix(table, &enc.ids, enc.mention_pos);
            let (f_c, _) = self.context_forward::<ChaCha12Rng>(inputs, enc.mention_pos, None);
            self.fused_row(&f_c, enc, &mut fused.row_mut(row));
        }
        let u = self.mlp.forward_eval(&fused);
        Ok(u.dot(&self.type_embeddings.t()))
    }

    /// Scores one mention from its representations, in evaluation mode.
    pub fn score_types(
        &self,
        f_c: &Array1<f64>,
        f_s: &Array1<f64>,
        f_e: &[f64],
        g: f64,
    ) -> Result<Vec<f64>> {
        if f_c.len() != self.config.context_dim() {
            return Err(Error::DimensionMismatch {
                context: "f_c".to_string(),
                expected: self.config.context_dim(),
                found: f_c.len(),
            });
        }
        let enc = EncodedMention {
            ids: Vec::new(),
            mention_pos: 0,
            f_s: f_s.clone(),
            f_e: f_e.to_vec(),
            g,
        };
        self.check_encoded(&enc)?;
        let mut fused = Array2::zeros((1, self.config.fused_dim(self.k)));
        self.fused_row(f_c, &enc, &mut fused.row_mut(0));
        let u = self.mlp.forward_eval(&fused);
        Ok(u.dot(&self.type_embeddings.t()).row(0).to_vec())
    }

    /// The fused representation `u_m` for one mention, in evaluation mode.
    /// Scores are `u_m . t_i`; exposed for tests of that identity.
    pub fn fuse_eval(
        &self,
        f_c: &Array1<f64>,
        f_s: &Array1<f64>,
        f_e: &[f64],
        g: f64,
    ) -> Array1<f64> {
        let enc = EncodedMention {
            ids: Vec::new(),
            mention_pos: 0,
            f_s: f_s.clone(),
            f_e: f_e.to_vec(),
            g,
        };
        let mut fused = Array2::zeros((1, self.config.fused_dim(self.k)));
        self.fused_row(f_c, &enc, &mut fused.row_mut(0));
        self.mlp.forward_eval(&fused).row(0).to_owned()
    }

    /// Backpropagates per-mention score gradients (batch x k) through the
    /// whole model, returning parameter gradients.
    pub fn backward_batch(&self, trace: &BatchTrace, d_scores: &Array2<f64>) -> ModelGrads {
        let mut grads = self.zero_grads();
        // S = U . T^t
        grads.type_embeddings += &d_scores.t().dot(&trace.u);
        let d_u = d_scores.dot(&self.type_embeddings);
        let d_fused = self.mlp.backward(&trace.mlp, &d_u, &mut grads.mlp);
        let ctx = self.config.context_dim();
        for (row, context) in trace.contexts.iter().enumerate() {
            let d_fc = d_fused.slice(s![row, ..ctx]).to_owned();
            self.context_backward(context, &d_fc, &mut grads);
        }
        grads
    }

    /// Folds the batch-normalization statistics of a training batch into the
    /// running averages used at evaluation time.
    pub fn update_bn_running(&mut self, trace: &BatchTrace) {
        self.mlp.update_running(&trace.mlp);
    }

    /// Replaces the batch-norm running statistics with exact statistics
    /// computed over the given (clean) examples, deterministic and without
    /// dropout. Aligns evaluation-mode normalization with the distribution
    /// the model actually sees, which the momentum-based running averages
    /// track only loosely on small corpora.
    pub fn recalibrate_bn(
        &mut self,
        table: &EmbeddingTable,
        batch: &[EncodedMention],
    ) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let fused_dim = self.config.fused_dim(self.k);
        let mut fused = Array2::zeros((batch.len(), fused_dim));
        for (row, enc) in batch.iter().enumerate() {
            self.check_encoded(enc)?;
            let inputs = self.input_matrix(table, &enc.ids, enc.mention_pos);
            let (f_c, _) = self.context_forward::<ChaCha12Rng>(inputs, enc.mention_pos, None);
            self.fused_row(&f_c, enc, &mut fused.row_mut(row));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(0); // unused at dropout 0
        let (_, trace) = self.mlp.forward_train(&fused, 0.0, &mut rng);
        for (layer, layer_trace) in self.mlp.layers.iter_mut().zip(&trace.layers) {
            layer.bn.running_mean.assign(&layer_trace.bn.batch_mean);
            layer.bn.running_var.assign(&layer_trace.bn.batch_var);
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            mention_vec: Array2::zeros(self.mention_vec.raw_dim()),
            context_layers: self.context_layers.iter().map(|l| l.zeros_like()).collect(),
            mlp: self.mlp.zeros_like(),
            type_embeddings: Array2::zeros(self.type_embeddings.raw_dim()),
        }
    }

    /// Trainable tensors in a stable order shared with [`ModelGrads::tensors`].
    pub fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> =
            vec![("mention_vec".to_string(), &self.mention_vec)];
        for (i, layer) in self.context_layers.iter().enumerate() {
            out.push((format!("lstm{}_fwd_wx", i), &layer.fwd.wx));
            out.push((format!("lstm{}_fwd_wh", i), &layer.fwd.wh));
            out.push((format!("lstm{}_fwd_b", i), &layer.fwd.b));
            out.push((format!("lstm{}_bwd_wx", i), &layer.bwd.wx));
            out.push((format!("lstm{}_bwd_wh", i), &layer.bwd.wh));
            out.push((format!("lstm{}_bwd_b", i), &layer.bwd.b));
        }
        for (i, layer) in self.mlp.layers.iter().enumerate() {
            out.push((format!("mlp{}_bn_gamma", i), &layer.bn.gamma));
            out.push((format!("mlp{}_bn_beta", i), &layer.bn.beta));
            out.push((format!("mlp{}_w", i), &layer.dense.w));
            out.push((format!("mlp{}_b", i), &layer.dense.b));
        }
        out.push(("type_embeddings".to_string(), &self.type_embeddings));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> =
            vec![("mention_vec".to_string(), &mut self.mention_vec)];
        for (i, layer) in self.context_layers.iter_mut().enumerate() {
            out.push((format!("lstm{}_fwd_wx", i), &mut layer.fwd.wx));
            out.push((format!("lstm{}_fwd_wh", i), &mut layer.fwd.wh));
            out.push((format!("lstm{}_fwd_b", i), &mut layer.fwd.b));
            out.push((format!("lstm{}_bwd_wx", i), &mut layer.bwd.wx));
            out.push((format!("lstm{}_bwd_wh", i), &mut layer.bwd.wh));
            out.push((format!("lstm{}_bwd_b", i), &mut layer.bwd.b));
        }
        for (i, layer) in self.mlp.layers.iter_mut().enumerate() {
            out.push((format!("mlp{}_bn_gamma", i), &mut layer.bn.gamma));
            out.push((format!("mlp{}_bn_beta", i), &mut layer.bn.beta));
            out.push((format!("mlp{}_w", i), &mut layer.dense.w));
            out.push((format!("mlp{}_b", i), &mut layer.dense.b));
        }
        out.push(("type_embeddings".to_string(), &mut self.type_embeddings));
        out
    }

    /// Non-trainable state saved with the model (batch-norm running stats).
    pub fn named_state(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.mlp.layers.iter().enumerate() {
            out.push((format!("mlp{}_bn_running_mean", i), &layer.bn.running_mean));
            out.push((format!("mlp{}_bn_running_var", i), &layer.bn.running_var));
        }
        out
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.mlp.layers.iter_mut().enumerate() {
            out.push((
                format!("mlp{}_bn_running_mean", i),
                &mut layer.bn.running_mean,
            ));
            out.push((
                format!("mlp{}_bn_running_var", i),
                &mut layer.bn.running_var,
            ));
        }
        out
    }
}

impl ModelGrads {
    /// Gradient tensors in the same order as [`TypingModel::named_params`].
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = vec![&self.mention_vec];
        for layer in &self.context_layers {
            out.push(&layer.fwd.wx);
            out.push(&layer.fwd.wh);
            out.push(&layer.fwd.b);
            out.push(&layer.bwd.wx);
            out.push(&layer.bwd.wh);
            out.push(&layer.bwd.b);
        }
        for layer in &self.mlp.layers {
            out.push(&layer.bn.gamma);
            out.push(&layer.bn.beta);
            out.push(&layer.dense.w);
            out.push(&layer.dense.b);
        }
        out.push(&self.type_embeddings);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = vec![&mut self.mention_vec];
        for layer in &mut self.context_layers {
            out.push(&mut layer.fwd.wx);
            out.push(&mut layer.fwd.wh);
            out.push(&mut layer.fwd.b);
            out.push(&mut layer.bwd.wx);
            out.push(&mut layer.bwd.wh);
            out.push(&mut layer.bwd.b);
        }
        for layer in &mut self.mlp.layers {
            out.push(&mut layer.bn.gamma);
            out.push(&mut layer.bn.beta);
            out.push(&mut layer.dense.w);
            out.push(&mut layer.dense.b);
        }
        out.push(&mut self.type_embeddings);
        out
    }
}

/// Decodes a score vector into an ancestor-closed, nonempty label set.
///
/// `MultiPath` keeps every type with a positive score; `SinglePath` keeps
/// only the highest-scoring positive type. Either way, when no score is
/// positive the closure of the argmax type is returned, so predictions are
/// never empty.
pub fn decode_prediction(
    scores: &[f64],
    vocab: &TypeVocabulary,
    policy: DecodePolicy,
) -> BTreeSet<TypePath> {
    assert_eq!(scores.len(), vocab.len(), "score vector must have length k");
    assert!(!scores.is_empty(), "cannot decode over an empty vocabulary");
    let argmax = scores
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0;
    let chosen: BTreeSet<TypePath> = match policy {
        DecodePolicy::MultiPath => {
            let positives: BTreeSet<TypePath> = scores
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(i, _)| vocab.get(i).clone())
                .collect();
            if positives.is_empty() {
                BTreeSet::from([vocab.get(argmax).clone()])
            } else {
                positives
            }
        }
        DecodePolicy::SinglePath => {
            // The best positive type is the global argmax when one exists;
            // the fallback is the argmax as well.
            BTreeSet::from([vocab.get(argmax).clone()])
        }
    };
    vocab
        .expand_with_ancestors(&chosen)
        .expect("decoded types come from the vocabulary")
}

//! Typing metrics — strict accuracy, macro F1, micro F1 — and end-to-end
//! evaluation of a model over a labeled dataset.
//!
//! All metrics operate on ancestor-closed gold and predicted sets. Per
//! convention, a mention with an empty predicted set contributes precision 0,
//! and an F1 whose precision and recall are both 0 is 0 rather than
//! undefined.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::{EmbeddingTable, MentionExample};
use crate::error::{Error, Result};
use crate::features::featurize_dataset;
use crate::kb::KnowledgeBase;
use crate::model::{decode_prediction, DecodePolicy, TypingModel};
use crate::types::{KbTypeMapping, TypePath, TypeVocabulary};

pub type LabelSet = BTreeSet<TypePath>;

/// Fraction of mentions whose predicted set equals the gold set exactly.
pub fn strict_accuracy(pairs: &[(LabelSet, LabelSet)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let exact = pairs.iter().filter(|(gold, pred)| gold == pred).count();
    Ok(exact as f64 / pairs.len() as f64)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Macro-averaged precision, recall, and F1: per-mention ratios averaged over
/// mentions, then combined.
pub fn macro_f1(pairs: &[(LabelSet, LabelSet)]) -> Result<(f64, f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for (gold, pred) in pairs {
        let overlap = gold.intersection(pred).count() as f64;
        p_sum += if pred.is_empty() {
            0.0
        } else {
            overlap / pred.len() as f64
        };
        r_sum += if gold.is_empty() {
            0.0
        } else {
            overlap / gold.len() as f64
        };
    }
    let n = pairs.len() as f64;
    let p = p_sum / n;
    let r = r_sum / n;
    Ok((p, r, f1(p, r)))
}

/// Micro-averaged precision, recall, and F1: intersection counts aggregated
/// over the whole dataset before taking ratios.
pub fn micro_f1(pairs: &[(LabelSet, LabelSet)]) -> Result<(f64, f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut overlap = 0usize;
    let mut pred_total = 0usize;
    let mut gold_total = 0usize;
    for (gold, pred) in pairs {
        overlap += gold.intersection(pred).count();
        pred_total += pred.len();
        gold_total += gold.len();
    }
    let p = if pred_total == 0 {
        0.0
    } else {
        overlap as f64 / pred_total as f64
    };
    let r = if gold_total == 0 {
        0.0
    } else {
        overlap as f64 / gold_total as f64
    };
    Ok((p, r, f1(p, r)))
}

/// One mention's outcome inside an [`EvalReport`].
#[derive(Debug, Clone, Serialize)]
pub struct MentionOutcome {
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub exact: bool,
}

/// All three metrics plus per-mention records.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub strict_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub n_mentions: usize,
    pub per_mention: Vec<MentionOutcome>,
}

impl EvalReport {
    pub fn from_pairs(pairs: &[(LabelSet, LabelSet)]) -> Result<Self> {
        let strict = strict_accuracy(pairs)?;
        let (map, mar, maf) = macro_f1(pairs)?;
        let (mip, mir, mif) = micro_f1(pairs)?;
        let per_mention = pairs
            .iter()
            .map(|(gold, pred)| MentionOutcome {
                gold: gold.iter().map(|t| t.canonical()).collect(),
                predicted: pred.iter().map(|t| t.canonical()).collect(),
                exact: gold == pred,
            })
            .collect();
        Ok(EvalReport {
            strict_accuracy: strict,
            macro_precision: map,
            macro_recall: mar,
            macro_f1: maf,
            micro_precision: mip,
            micro_recall: mir,
            micro_f1: mif,
            n_mentions: pairs.len(),
            per_mention,
        })
    }
}

/// Links, featurizes, scores, and decodes every mention in evaluation mode,
/// then computes all three metrics against the gold labels.
pub fn evaluate(
    model: &TypingModel,
    table: &EmbeddingTable,
    dataset: &[MentionExample],
    kb: &KnowledgeBase,
    mapping: &KbTypeMapping,
    vocab: &TypeVocabulary,
    policy: DecodePolicy,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    for (i, ex) in dataset.iter().enumerate() {
        if ex.labels.is_empty() {
            return Err(Error::SchemaViolation {
                record: i + 1,
                detail: "evaluation requires gold labels".to_string(),
            });
        }
    }
    let prepared = featurize_dataset(dataset, kb, mapping, vocab, table)?;
    let pairs = predict_pairs(model, table, &prepared, vocab, policy)?;
    EvalReport::from_pairs(&pairs)
}

/// Scores prepared examples in evaluation mode and decodes predictions,
/// pairing them with the gold sets.
pub(crate) fn predict_pairs(
    model: &TypingModel,
    table: &EmbeddingTable,
    prepared: &[crate::features::PreparedExample],
    vocab: &TypeVocabulary,
    policy: DecodePolicy,
) -> Result<Vec<(LabelSet, LabelSet)>> {
    let mut pairs = Vec::with_capacity(prepared.len());
    // Chunked to bound trace memory on large datasets.
    for chunk in prepared.chunks(256) {
        let encoded: Vec<_> = chunk
            .iter()
            .map(|p| p.encode_clean(vocab))
            .collect::<Result<_>>()?;
        let scores = model.forward_batch_eval(table, &encoded)?;
        for (row, p) in chunk.iter().enumerate() {
            let decoded = decode_prediction(&scores.row(row).to_vec(), vocab, policy);
            pairs.push((p.gold.clone(), decoded));
        }
    }
    Ok(pairs)
}

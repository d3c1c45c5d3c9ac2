//! Training: the margin loss with per-type penalties, the two noise
//! mechanisms that keep the model from overfitting weak labels, and the
//! optimization loop with dev-based model selection.
//!
//! The loss for a mention with gold set `tau` is
//!
//! ```text
//! sum_{t in tau} max(0, 1 - s(m,t)) + sum_{t not in tau} lambda(t) * max(0, 1 + s(m,t))
//! ```
//!
//! where `lambda(t) = lambda_p` for fine-grained person types and 1
//! otherwise. During training, a linked person entity's KB type evidence
//! gains one random fine-grained person type it does not hold (so the
//! evidence stops matching the weak labels exactly), and each example's link
//! is independently replaced by NIL at a fixed rate (so the model copes with
//! unlinkable mentions). Both are resampled every epoch.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, MentionExample};
use crate::error::{Error, Result};
use crate::eval::{macro_f1, micro_f1, predict_pairs, strict_accuracy};
use crate::features::{featurize_dataset, PreparedExample};
use crate::kb::{EntityRecord, KnowledgeBase};
use crate::model::{DecodePolicy, EncodedMention, ModelConfig, ModelGrads, TypingModel};
use crate::types::{KbTypeMapping, TypePath, TypeVocabulary};

/// Gradients are clipped to this global norm before every update.
pub const GRAD_CLIP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Penalty multiplier for wrongly predicting a fine-grained person type.
    pub lambda_p: f64,
    /// Fraction of training samples whose link is replaced by NIL each epoch.
    pub nil_dropout_rate: f64,
    pub person_noise_enabled: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping early.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda_p: 2.0,
            nil_dropout_rate: 0.5,
            person_noise_enabled: true,
            batch_size: 32,
            learning_rate: 3e-3,
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_p < 1.0 {
            return Err(Error::SchemaViolation {
                record: 0,
                detail: format!("lambda_p {} must be >= 1", self.lambda_p),
            });
        }
        if !(0.0..=1.0).contains(&self.nil_dropout_rate) {
            return Err(Error::SchemaViolation {
                record: 0,
                detail: format!("nil_dropout_rate {} outside [0, 1]", self.nil_dropout_rate),
            });
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::SchemaViolation {
                record: 0,
                detail: "batch_size and max_epochs must be positive".to_string(),
            });
        }
        Ok(())
    }
}

/// The margin loss for one mention. `scores` must have length `k`; the gold
/// set must be ancestor-closed and its members in the vocabulary.
pub fn hinge_loss(
    scores: &[f64],
    gold: &BTreeSet<TypePath>,
    vocab: &TypeVocabulary,
    lambda_p: f64,
) -> Result<f64> {
    assert_eq!(scores.len(), vocab.len(), "score vector must have length k");
    let mut gold_mask = vec![false; vocab.len()];
    for t in gold {
        gold_mask[vocab.index_of(t)?] = true;
    }
    let mut loss = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        if gold_mask[i] {
            loss += (1.0 - s).max(0.0);
        } else {
            let lambda = if vocab.get(i).is_fine_person() {
                lambda_p
            } else {
                1.0
            };
            loss += lambda * (1.0 + s).max(0.0);
        }
    }
    Ok(loss)
}

/// Subgradient of [`hinge_loss`] with respect to the scores.
fn hinge_loss_grad(
    scores: &[f64],
    gold_mask: &[bool],
    vocab: &TypeVocabulary,
    lambda_p: f64,
) -> Vec<f64> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if gold_mask[i] {
                if 1.0 - s > 0.0 {
                    -1.0
                } else {
                    0.0
                }
            } else if 1.0 + s > 0.0 {
                if vocab.get(i).is_fine_person() {
                    lambda_p
                } else {
                    1.0
                }
            } else {
                0.0
            }
        })
        .collect()
}

/// Adds one uniformly sampled fine-grained person type the entity does not
/// hold to its KB evidence set, then closes under ancestors. Applied only to
/// the KB type feature of linked person entities during training, never to
/// the labels. Returns the input unchanged when every fine person type is
/// already present (or for non-person entities).
pub fn inject_person_type_noise<R: Rng>(
    kb_label_set: &BTreeSet<TypePath>,
    entity: &EntityRecord,
    vocab: &TypeVocabulary,
    rng: &mut R,
) -> BTreeSet<TypePath> {
    if !entity.is_person {
        return kb_label_set.clone();
    }
    let unused: Vec<&TypePath> = vocab
        .person_fine_types()
        .iter()
        .filter(|t| !kb_label_set.contains(*t))
        .collect();
    if unused.is_empty() {
        return kb_label_set.clone();
    }
    let pick = unused[rng.random_range(0..unused.len())].clone();
    let mut noisy = kb_label_set.clone();
    noisy.insert(pick);
    vocab
        .expand_with_ancestors(&noisy)
        .expect("noise types come from the vocabulary")
}

/// One training sample materialized for an epoch: the encoded features plus
/// the link they were derived from.
#[derive(Debug, Clone)]
pub struct FeaturizedExample {
    pub encoded: EncodedMention,
    pub nil: bool,
}

/// Independently replaces each example's link result with NIL at the given
/// rate: the KB type vector becomes all zeros and the confidence 0. Labels
/// are untouched. Returns how many examples were set to NIL.
pub fn apply_nil_dropout<R: Rng>(batch: &mut [FeaturizedExample], rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let mut dropped = 0;
    for ex in batch.iter_mut() {
        if rng.random_range(0.0..1.0) < rate {
            ex.encoded.f_e.iter_mut().for_each(|b| *b = 0.0);
            ex.encoded.g = 0.0;
            ex.nil = true;
            dropped += 1;
        }
    }
    dropped
}

/// Materializes one prepared example for a training epoch, applying
/// person-type noise to the KB evidence when enabled and the link points at
/// a person entity. Resampled every epoch; NIL dropout is applied on top by
/// [`apply_nil_dropout`].
pub fn featurize_for_epoch<R: Rng>(
    prepared: &PreparedExample,
    kb: &KnowledgeBase,
    vocab: &TypeVocabulary,
    person_noise: bool,
    rng: &mut R,
) -> Result<FeaturizedExample> {
    let kb_types = if person_noise && prepared.linked_is_person && !prepared.link.is_nil() {
        let entity_id = prepared.link.entity_id.as_deref().expect("non-NIL link");
        let entity = kb
            .entity(entity_id)
            .ok_or_else(|| Error::UnknownEntity(entity_id.to_string()))?;
        inject_person_type_noise(&prepared.kb_types, entity, vocab, rng)
    } else {
        prepared.kb_types.clone()
    };
    Ok(FeaturizedExample {
        encoded: EncodedMention {
            ids: prepared.ids.clone(),
            mention_pos: prepared.mention_pos,
            f_s: prepared.f_s.clone(),
            f_e: vocab.one_hot(&kb_types)?,
            g: if prepared.link.is_nil() {
                0.0
            } else {
                prepared.link.confidence
            },
        },
        nil: prepared.link.is_nil(),
    })
}

/// Adam with bias correction; state tensors parallel the model's parameter
/// order.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(model: &TypingModel, lr: f64) -> Self {
        let zeros: Vec<Array2<f64>> = model
            .named_params()
            .iter()
            .map(|(_, t)| Array2::zeros(t.raw_dim()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update with global-norm gradient clipping.
    pub fn step(&mut self, model: &mut TypingModel, grads: &ModelGrads, clip: f64) {
        let grad_tensors = grads.tensors();
        let norm: f64 = grad_tensors
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = if clip > 0.0 && norm > clip {
            clip / norm
        } else {
            1.0
        };

        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), (m, v)) in model
            .named_params_mut()
            .into_iter()
            .map(|(_, p)| p)
            .zip(grad_tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(param)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g * scale;
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_strict: f64,
    pub dev_macro_f1: f64,
    pub dev_micro_f1: f64,
    pub nil_dropped: usize,
}

/// A trained model with its epoch log and selection summary.
pub struct TrainOutcome {
    pub model: TypingModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_strict: f64,
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 over seed + salt.
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Trains a model with mini-batch optimization of the margin loss, applying
/// person-type noise and NIL dropout at featurization each epoch. The
/// checkpoint with the best dev strict accuracy is kept, and training stops
/// early after `patience` epochs without improvement. Fully reproducible
/// given the seed.
#[allow(clippy::too_many_arguments)]
pub fn train(
    train_set: &[MentionExample],
    dev_set: &[MentionExample],
    kb: &KnowledgeBase,
    mapping: &KbTypeMapping,
    vocab: &TypeVocabulary,
    table: &EmbeddingTable,
    model_config: ModelConfig,
    training_config: &TrainingConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    training_config.validate()?;
    for (i, ex) in train_set.iter().chain(dev_set.iter()).enumerate() {
        if ex.labels.is_empty() {
            return Err(Error::SchemaViolation {
                record: i + 1,
                detail: "training requires nonempty label sets".to_string(),
            });
        }
    }

    let mut model = TypingModel::new(model_config, vocab.len(), table, training_config.seed)?;
    let prepared_train = featurize_dataset(train_set, kb, mapping, vocab, table)?;
    let prepared_dev = featurize_dataset(dev_set, kb, mapping, vocab, table)?;
    let mut optimizer = Adam::new(&model, training_config.learning_rate);

    let mut best: Option<(TypingModel, usize, f64)> = None;
    let mut log = Vec::new();
    let mut stale_epochs = 0usize;

    for epoch in 0..training_config.max_epochs {
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(training_config.seed, epoch as u64 + 1));

        let mut order: Vec<usize> = (0..prepared_train.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut nil_dropped = 0usize;
        for (step, batch_idx) in order.chunks(training_config.batch_size).enumerate() {
            let mut batch: Vec<FeaturizedExample> = batch_idx
                .iter()
                .map(|&i| {
                    featurize_for_epoch(
                        &prepared_train[i],
                        kb,
                        vocab,
                        training_config.person_noise_enabled,
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?;
            nil_dropped +=
                apply_nil_dropout(&mut batch, training_config.nil_dropout_rate, &mut rng);

            let encoded: Vec<EncodedMention> = batch.iter().map(|b| b.encoded.clone()).collect();
            let (scores, trace) = model
                .forward_batch_train(table, &encoded, &mut rng)
                .map_err(|e| match e {
                    // Stamp the failing position onto numeric-health aborts.
                    Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch, step },
                    other => other,
                })?;
            if !scores.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }

            let batch_n = batch_idx.len() as f64;
            let mut d_scores = Array2::zeros(scores.raw_dim());
            let mut batch_loss = 0.0;
            for (row, &i) in batch_idx.iter().enumerate() {
                let gold = &prepared_train[i].gold;
                let row_scores = scores.row(row).to_vec();
                batch_loss += hinge_loss(&row_scores, gold, vocab, training_config.lambda_p)?;
                let mut gold_mask = vec![false; vocab.len()];
                for t in gold {
                    gold_mask[vocab.index_of(t)?] = true;
                }
                let grad =
                    hinge_loss_grad(&row_scores, &gold_mask, vocab, training_config.lambda_p);
                for (j, g) in grad.into_iter().enumerate() {
                    d_scores[[row, j]] = g / batch_n;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            epoch_loss += batch_loss;

            let grads = model.backward_batch(&trace, &d_scores);
            model.update_bn_running(&trace);
            optimizer.step(&mut model, &grads, GRAD_CLIP);
        }

        // Pin evaluation-mode batch-norm statistics to the clean training
        // feature distribution before measuring dev metrics.
        let calib: Vec<EncodedMention> = prepared_train
            .iter()
            .take(512)
            .map(|p| p.encode_clean(vocab))
            .collect::<Result<_>>()?;
        model.recalibrate_bn(table, &calib)?;

        let (dev_strict, dev_macro, dev_micro) = if prepared_dev.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let pairs =
                predict_pairs(&model, table, &prepared_dev, vocab, DecodePolicy::MultiPath)?;
            (
                strict_accuracy(&pairs)?,
                macro_f1(&pairs)?.2,
                micro_f1(&pairs)?.2,
            )
        };
        log.push(EpochLog {
            epoch,
            mean_loss: epoch_loss / prepared_train.len() as f64,
            dev_strict,
            dev_macro_f1: dev_macro,
            dev_micro_f1: dev_micro,
            nil_dropped,
        });

        let improved = best
            .as_ref()
            .map(|(_, _, best_strict)| dev_strict > *best_strict)
            .unwrap_or(true);
        if improved {
            best = Some((model.clone(), epoch, dev_strict));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= training_config.patience {
                break;
            }
        }
    }

    let (best_model, best_epoch, best_dev_strict) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch,
        best_dev_strict,
    })
}

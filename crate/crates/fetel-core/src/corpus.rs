//! Corpus handling: the mention JSONL format, pretrained word embeddings,
//! weak-label generation from anchor documents, and the train/dev split.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{normalize_surface, KnowledgeBase};
use crate::linker::LinkResult;
use crate::types::{KbTypeMapping, TypePath, TypeVocabulary};

/// One sentence with one mention span and its (weak or gold) label set.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionExample {
    pub doc_id: String,
    pub tokens: Vec<String>,
    /// Half-open token index range `[start, end)` of the mention.
    pub span: (usize, usize),
    /// Ancestor-closed label set; empty only for prediction inputs.
    pub labels: BTreeSet<TypePath>,
    /// Gold link target for weakly labeled data.
    pub anchor_target: Option<String>,
    /// Populated at featurization time, never serialized.
    pub link: Option<LinkResult>,
}

impl MentionExample {
    pub fn new(
        doc_id: impl Into<String>,
        tokens: Vec<String>,
        span: (usize, usize),
        labels: BTreeSet<TypePath>,
        anchor_target: Option<String>,
    ) -> Result<Self> {
        let (start, end) = span;
        if start >= end || end > tokens.len() {
            return Err(Error::SpanOutOfRange {
                start,
                end,
                len: tokens.len(),
            });
        }
        Ok(MentionExample {
            doc_id: doc_id.into(),
            tokens,
            span,
            labels,
            anchor_target,
            link: None,
        })
    }

    /// Number of words in the mention string.
    pub fn mention_len(&self) -> usize {
        self.span.1 - self.span.0
    }

    pub fn mention_tokens(&self) -> &[String] {
        &self.tokens[self.span.0..self.span.1]
    }

    /// Normalized surface string used for linking.
    pub fn surface(&self) -> String {
        normalize_surface(&self.mention_tokens().join(" "))
    }
}

/// Wire form of a mention record.
#[derive(Serialize, Deserialize)]
struct RawMention {
    doc_id: String,
    tokens: Vec<String>,
    span: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_target: Option<String>,
}

/// Loads mention JSONL, validating spans and closing label sets under
/// ancestors. Unknown type labels are an error: the dataset defines the tag
/// set, so a label outside the vocabulary means mismatched inputs.
pub fn load_dataset(path: impl AsRef<Path>, vocab: &TypeVocabulary) -> Result<Vec<MentionExample>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = lineno + 1;
        let raw: RawMention = serde_json::from_str(&line).map_err(|e| Error::SchemaViolation {
            record,
            detail: e.to_string(),
        })?;
        out.push(mention_from_raw(raw, record, vocab)?);
    }
    Ok(out)
}

fn mention_from_raw(
    raw: RawMention,
    record: usize,
    vocab: &TypeVocabulary,
) -> Result<MentionExample> {
    let labels = match raw.labels {
        Some(names) => {
            let mut set = BTreeSet::new();
            for name in &names {
                set.insert(TypePath::parse(name)?);
            }
            vocab.expand_with_ancestors(&set)?
        }
        None => BTreeSet::new(),
    };
    MentionExample::new(
        raw.doc_id,
        raw.tokens,
        (raw.span[0], raw.span[1]),
        labels,
        raw.anchor_target,
    )
    .map_err(|e| match e {
        Error::SpanOutOfRange { start, end, len } => Error::SchemaViolation {
            record,
            detail: format!("span [{}, {}) out of range for {} tokens", start, end, len),
        },
        other => other,
    })
}

/// Serializes one mention as a JSONL line.
pub fn mention_to_json(example: &MentionExample) -> String {
    let raw = RawMention {
        doc_id: example.doc_id.clone(),
        tokens: example.tokens.clone(),
        span: [example.span.0, example.span.1],
        labels: if example.labels.is_empty() {
            None
        } else {
            Some(example.labels.iter().map(|t| t.canonical()).collect())
        },
        anchor_target: example.anchor_target.clone(),
    };
    serde_json::to_string(&raw).expect("mention serializes")
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[MentionExample]) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        writeln!(w, "{}", mention_to_json(ex)).map_err(|e| Error::io(display.clone(), e))?;
    }
    w.flush().map_err(|e| Error::io(display, e))?;
    Ok(())
}

/// One anchored span inside a document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Anchor {
    pub span: [usize; 2],
    pub target: String,
}

/// A tokenized document with anchor spans, the input to weak labeling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorDocument {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub anchors: Vec<Anchor>,
}

pub fn load_anchor_documents(path: impl AsRef<Path>) -> Result<Vec<AnchorDocument>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: AnchorDocument =
            serde_json::from_str(&line).map_err(|e| Error::SchemaViolation {
                record: lineno + 1,
                detail: e.to_string(),
            })?;
        out.push(doc);
    }
    Ok(out)
}

/// Tally of weak-label generation outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WeakLabelReport {
    pub mentions_generated: u64,
    pub dropped_empty_labels: u64,
    pub skipped_unknown_entity: u64,
    pub skipped_bad_span: u64,
}

/// Turns anchor links into weakly labeled mention examples: each anchor
/// becomes one mention labeled with the ancestor closure of its target
/// entity's mapped KB types. Anchors whose mapped label set is empty are
/// dropped; anchors pointing at entities missing from the KB are skipped.
/// Both outcomes are tallied rather than failing the run.
pub fn generate_weak_labels(
    docs: &[AnchorDocument],
    kb: &KnowledgeBase,
    mapping: &KbTypeMapping,
    vocab: &TypeVocabulary,
) -> (Vec<MentionExample>, WeakLabelReport) {
    let mut out = Vec::new();
    let mut report = WeakLabelReport::default();
    for doc in docs {
        for anchor in &doc.anchors {
            let (start, end) = (anchor.span[0], anchor.span[1]);
            if start >= end || end > doc.tokens.len() {
                report.skipped_bad_span += 1;
                continue;
            }
            let kb_types = match kb.entity_types(&anchor.target) {
                Ok(types) => types,
                Err(_) => {
                    report.skipped_unknown_entity += 1;
                    continue;
                }
            };
            let labels = mapping.map_kb_types(kb_types, vocab);
            if labels.is_empty() {
                report.dropped_empty_labels += 1;
                continue;
            }
            let example = MentionExample {
                doc_id: doc.doc_id.clone(),
                tokens: doc.tokens.clone(),
                span: (start, end),
                labels,
                anchor_target: Some(anchor.target.clone()),
                link: None,
            };
            out.push(example);
            report.mentions_generated += 1;
        }
    }
    (out, report)
}

/// Deterministically splits off a development set of exactly `dev_size`
/// examples. The partition is disjoint and exhaustive.
pub fn split_dev(
    examples: Vec<MentionExample>,
    dev_size: usize,
    seed: u64,
) -> Result<(Vec<MentionExample>, Vec<MentionExample>)> {
    if dev_size > examples.len() {
        return Err(Error::InsufficientData {
            requested: dev_size,
            available: examples.len(),
        });
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let dev_idx: BTreeSet<usize> = order[..dev_size].iter().copied().collect();
    let mut train = Vec::with_capacity(examples.len() - dev_size);
    let mut dev = Vec::with_capacity(dev_size);
    for (i, ex) in examples.into_iter().enumerate() {
        if dev_idx.contains(&i) {
            dev.push(ex);
        } else {
            train.push(ex);
        }
    }
    Ok((train, dev))
}

/// Identifies a row of the embedding input: a vocabulary word, the unknown
/// word, or the special mention token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedId {
    Word(usize),
    Unk,
    MentionToken,
}

/// Pretrained word embeddings, frozen during training. The unknown-word and
/// mention-token vectors are sampled once from a fixed seeded distribution so
/// the table is reproducible from the same text file.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    matrix: Array2<f64>,
    by_word: HashMap<String, usize>,
    unk: Array1<f64>,
    mention_token: Array1<f64>,
}

const SPECIAL_VECTOR_SEED: u64 = 0xfe7e1;

impl EmbeddingTable {
    /// Parses a whitespace-separated text file: `word v1 v2 ... vd` per line.
    /// The dimension is inferred from the first line and enforced everywhere.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
        let mut words = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut dimension = 0usize;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(display.clone(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line has a first field");
            let row: Vec<f64> = fields
                .map(|v| {
                    v.parse::<f64>().map_err(|e| Error::SchemaViolation {
                        record: lineno + 1,
                        detail: format!("bad embedding value {:?}: {}", v, e),
                    })
                })
                .collect::<Result<_>>()?;
            if words.is_empty() {
                if row.is_empty() {
                    return Err(Error::SchemaViolation {
                        record: lineno + 1,
                        detail: "first line has no vector values".to_string(),
                    });
                }
                dimension = row.len();
            } else if row.len() != dimension {
                return Err(Error::DimensionMismatch {
                    context: format!("line {}", lineno + 1),
                    expected: dimension,
                    found: row.len(),
                });
            }
            words.push(word.to_string());
            values.extend_from_slice(&row);
        }
        if words.is_empty() {
            return Err(Error::SchemaViolation {
                record: 0,
                detail: "embedding file has no rows".to_string(),
            });
        }
        let matrix = Array2::from_shape_vec((words.len(), dimension), values)
            .expect("row-major embedding values");
        Ok(Self::from_parts(words, matrix))
    }

    /// Builds a table from an in-memory matrix (one row per word).
    pub fn from_parts(words: Vec<String>, matrix: Array2<f64>) -> Self {
        let dimension = matrix.ncols();
        let by_word = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(SPECIAL_VECTOR_SEED);
        let sample = |rng: &mut ChaCha12Rng| {
            Array1::from_iter((0..dimension).map(|_| rng.random_range(-0.1..0.1)))
        };
        let unk = sample(&mut rng);
        let mut mention_token = sample(&mut rng);
        // The mention token must not collide with any corpus word's entry.
        while matrix.rows().into_iter().any(|row| row == mention_token) {
            mention_token = sample(&mut rng);
        }
        EmbeddingTable {
            dimension,
            words,
            matrix,
            by_word,
            unk,
            mention_token,
        }
    }

    /// Rebuilds a table from checkpointed pieces, bypassing the seeded
    /// sampling of the special vectors so save/load is bit-exact.
    pub fn from_saved(
        words: Vec<String>,
        matrix: Array2<f64>,
        unk: Array1<f64>,
        mention_token: Array1<f64>,
    ) -> Self {
        let dimension = matrix.ncols();
        let by_word = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        EmbeddingTable {
            dimension,
            words,
            matrix,
            by_word,
            unk,
            mention_token,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn unk_vector(&self) -> ArrayView1<'_, f64> {
        self.unk.view()
    }

    pub fn mention_token_vector(&self) -> ArrayView1<'_, f64> {
        self.mention_token.view()
    }

    /// Exact match first, then lowercased match, then the unknown id.
    pub fn id_of(&self, word: &str) -> EmbedId {
        if let Some(&i) = self.by_word.get(word) {
            return EmbedId::Word(i);
        }
        if let Some(&i) = self.by_word.get(&word.to_lowercase()) {
            return EmbedId::Word(i);
        }
        EmbedId::Unk
    }

    /// The embedding row for a word, falling back to the unknown vector.
    pub fn lookup(&self, word: &str) -> ArrayView1<'_, f64> {
        match self.id_of(word) {
            EmbedId::Word(i) => self.matrix.row(i),
            _ => self.unk.view(),
        }
    }

    /// The row for an [`EmbedId`]. `MentionToken` resolves to the table's
    /// initial mention vector; the model substitutes its trained copy.
    pub fn row(&self, id: EmbedId) -> ArrayView1<'_, f64> {
        match id {
            EmbedId::Word(i) => self.matrix.row(i),
            EmbedId::Unk => self.unk.view(),
            EmbedId::MentionToken => self.mention_token.view(),
        }
    }
}

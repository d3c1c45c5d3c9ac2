//! Deterministic synthetic pipelines for tests, benchmarks, and demos.
//!
//! The generated corpus is built so that KB type evidence fully determines
//! the gold labels while the sentence context is random noise: every entity
//! has a unique surface token that is absent from the embedding vocabulary
//! (so the mention string representation collapses to the unknown vector)
//! and appears in the anchor statistics with a single candidate (so linking
//! is exact with confidence 1). A model with entity linking can read the
//! labels off `f_e`; a model without it has nothing to learn from.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::{Anchor, AnchorDocument, EmbeddingTable, MentionExample};
use crate::kb::{AnchorStatistics, EntityRecord, KnowledgeBase};
use crate::types::{KbTypeMapping, TypeVocabulary};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_mentions: usize,
    /// Number of context words in the embedding vocabulary.
    pub word_vocab: usize,
    pub embed_dim: usize,
    /// Tokens per sentence, mention included.
    pub sentence_len: usize,
    pub n_entities: usize,
    /// Include person entities (whose evidence gets training noise).
    pub include_persons: bool,
    /// When true, sentences mix in words from an entity-specific slice of
    /// the vocabulary, so labels are recoverable from context; when false,
    /// every context token is an independent uniform draw and context
    /// carries no label signal at all.
    pub informative_context: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_mentions: 200,
            word_vocab: 500,
            embed_dim: 16,
            sentence_len: 9,
            n_entities: 30,
            include_persons: true,
            informative_context: true,
            seed: 13,
        }
    }
}

pub struct SyntheticData {
    pub vocab: TypeVocabulary,
    pub mapping: KbTypeMapping,
    pub kb: KnowledgeBase,
    pub table: EmbeddingTable,
    pub examples: Vec<MentionExample>,
}

/// The 12-type tree used by the synthetic corpus.
pub const TYPE_TREE: &str = "/person\n/person/politician\n/person/actor\n/person/scientist\n\
                             /location\n/location/city\n/location/country\n\
                             /organization\n/organization/company\n/event\n/building\n/art\n";

const MAPPING_TSV: &str = "kb.person\t/person\nkb.politician\t/person/politician\n\
                           kb.actor\t/person/actor\nkb.scientist\t/person/scientist\n\
                           kb.location\t/location\nkb.city\t/location/city\n\
                           kb.country\t/location/country\nkb.organization\t/organization\n\
                           kb.company\t/organization/company\nkb.event\t/event\n\
                           kb.building\t/building\nkb.art\t/art\n";

const PERSON_TEMPLATES: &[&[&str]] = &[
    &["kb.person", "kb.politician"],
    &["kb.person", "kb.actor"],
    &["kb.person", "kb.scientist"],
];

const OTHER_TEMPLATES: &[&[&str]] = &[
    &["kb.location", "kb.city"],
    &["kb.location", "kb.country"],
    &["kb.organization", "kb.company"],
    &["kb.event"],
    &["kb.building"],
    &["kb.art"],
];

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let vocab = TypeVocabulary::from_lines(TYPE_TREE).expect("static tree is valid");
    let mapping = KbTypeMapping::from_lines(MAPPING_TSV, &vocab).expect("static mapping is valid");

    let templates: Vec<&[&str]> = if spec.include_persons {
        PERSON_TEMPLATES
            .iter()
            .chain(OTHER_TEMPLATES)
            .copied()
            .collect()
    } else {
        OTHER_TEMPLATES.to_vec()
    };

    let mut entities = Vec::with_capacity(spec.n_entities);
    let mut pairs = Vec::new();
    for i in 0..spec.n_entities {
        let entity_id = format!("E{:03}", i);
        let kb_types: Vec<String> = templates[i % templates.len()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        entities.push(EntityRecord::new(
            &entity_id,
            format!("Entity {}", i),
            kb_types,
            &mapping,
            &vocab,
        ));
        // One surface per entity, out of the word vocabulary on purpose.
        for _ in 0..3 {
            pairs.push((format!("ent{:03}", i), entity_id.clone()));
        }
    }
    let (stats, _) = AnchorStatistics::ingest(pairs);
    let kb = KnowledgeBase::new(entities, stats);

    let words: Vec<String> = (0..spec.word_vocab).map(|i| format!("w{:03}", i)).collect();
    let matrix = Array2::from_shape_fn((spec.word_vocab, spec.embed_dim), |_| {
        rng.random_range(-0.5..0.5)
    });
    let table = EmbeddingTable::from_parts(words, matrix);

    let mut examples = Vec::with_capacity(spec.n_mentions);
    for m in 0..spec.n_mentions {
        let entity_idx = m % spec.n_entities;
        let entity_id = format!("E{:03}", entity_idx);
        let surface = format!("ent{:03}", entity_idx);
        let labels = mapping.map_kb_types(
            kb.entity_types(&entity_id)
                .expect("generated entity exists"),
            &vocab,
        );
        // Entity-signature words live in a per-entity slice of the vocabulary.
        let slice = spec.word_vocab / spec.n_entities.max(1);
        let mut tokens: Vec<String> = (0..spec.sentence_len - 1)
            .map(|_| {
                let idx =
                    if spec.informative_context && slice > 0 && rng.random_range(0.0..1.0) < 0.5 {
                        entity_idx * slice + rng.random_range(0..slice)
                    } else {
                        rng.random_range(0..spec.word_vocab)
                    };
                format!("w{:03}", idx)
            })
            .collect();
        let pos = rng.random_range(0..tokens.len() + 1);
        tokens.insert(pos, surface);
        examples.push(
            MentionExample::new(
                format!("doc{:04}", m),
                tokens,
                (pos, pos + 1),
                labels,
                Some(entity_id),
            )
            .expect("generated span is valid"),
        );
    }

    SyntheticData {
        vocab,
        mapping,
        kb,
        table,
        examples,
    }
}

impl SyntheticData {
    /// Reshapes the examples as anchor documents (labels dropped), the input
    /// format of weak-label generation.
    pub fn to_anchor_documents(&self) -> Vec<AnchorDocument> {
        self.examples
            .iter()
            .map(|ex| AnchorDocument {
                doc_id: ex.doc_id.clone(),
                tokens: ex.tokens.clone(),
                anchors: vec![Anchor {
                    span: [ex.span.0, ex.span.1],
                    target: ex
                        .anchor_target
                        .clone()
                        .expect("synthetic anchors have targets"),
                }],
            })
            .collect()
    }
}

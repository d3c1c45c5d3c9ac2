//! Shared featurization: turns mention examples into model inputs by running
//! entity linking (with in-document person coreference), collapsing spans,
//! and collecting the KB type evidence of the linked entity.
//!
//! The static part of featurization is computed once per dataset; the
//! training loop re-samples noise and NIL dropout on top of it every epoch.

use std::collections::BTreeSet;
use std::collections::HashMap;

use ndarray::Array1;

use crate::corpus::{EmbedId, EmbeddingTable, MentionExample};
use crate::error::Result;
use crate::kb::KnowledgeBase;
use crate::linker::{link_in_document, LinkResult};
use crate::model::{collapse_span, encode_mention_string, EncodedMention};
use crate::types::{KbTypeMapping, TypePath, TypeVocabulary};

/// The static featurization of one mention: everything that does not change
/// across training epochs.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub ids: Vec<EmbedId>,
    pub mention_pos: usize,
    pub f_s: Array1<f64>,
    /// Link result after person coreference resolution.
    pub link: LinkResult,
    /// Ancestor-closed mapped types of the linked entity; empty for NIL.
    pub kb_types: BTreeSet<TypePath>,
    pub linked_is_person: bool,
    /// Gold (or weak) labels; empty for prediction inputs.
    pub gold: BTreeSet<TypePath>,
}

impl PreparedExample {
    /// The clean (evaluation-time) encoding: KB evidence exactly as linked,
    /// no noise, no NIL dropout.
    pub fn encode_clean(&self, vocab: &TypeVocabulary) -> Result<EncodedMention> {
        Ok(EncodedMention {
            ids: self.ids.clone(),
            mention_pos: self.mention_pos,
            f_s: self.f_s.clone(),
            f_e: vocab.one_hot(&self.kb_types)?,
            g: if self.link.is_nil() {
                0.0
            } else {
                self.link.confidence
            },
        })
    }
}

/// Featurizes a dataset: groups mentions by document (first-appearance
/// order), links each document's mentions together so person coreference can
/// fire, and prepares model inputs. Output order matches input order.
pub fn featurize_dataset(
    examples: &[MentionExample],
    kb: &KnowledgeBase,
    mapping: &KbTypeMapping,
    vocab: &TypeVocabulary,
    table: &EmbeddingTable,
) -> Result<Vec<PreparedExample>> {
    // Group indices by doc_id, preserving first-appearance order for
    // determinism.
    let mut doc_order: Vec<String> = Vec::new();
    let mut by_doc: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, ex) in examples.iter().enumerate() {
        let slot = by_doc.entry(ex.doc_id.clone()).or_insert_with(|| {
            doc_order.push(ex.doc_id.clone());
            Vec::new()
        });
        slot.push(i);
    }

    let mut links: Vec<Option<LinkResult>> = vec![None; examples.len()];
    for doc_id in &doc_order {
        let idxs = &by_doc[doc_id];
        let doc_mentions: Vec<MentionExample> = idxs.iter().map(|&i| examples[i].clone()).collect();
        let doc_links = link_in_document(kb, &doc_mentions);
        for (&i, link) in idxs.iter().zip(doc_links) {
            links[i] = Some(link);
        }
    }

    let mut out = Vec::with_capacity(examples.len());
    for (ex, link) in examples.iter().zip(links) {
        let link = link.expect("every mention was linked");
        let (ids, mention_pos) = collapse_span(table, &ex.tokens, ex.span)?;
        let f_s = encode_mention_string(table, &ex.tokens, ex.span)?;
        let (kb_types, linked_is_person) = match &link.entity_id {
            None => (BTreeSet::new(), false),
            Some(entity_id) => {
                let kb_types = kb.entity_types(entity_id)?;
                let mapped = mapping.map_kb_types(kb_types, vocab);
                let is_person = kb.entity(entity_id).map(|e| e.is_person).unwrap_or(false);
                (mapped, is_person)
            }
        };
        out.push(PreparedExample {
            ids,
            mention_pos,
            f_s,
            link,
            kb_types,
            linked_is_person,
            gold: ex.labels.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{AnchorStatistics, EntityRecord};
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn featurize_links_within_documents() {
        let vocab = TypeVocabulary::from_lines("/person\n/person/actor\n").unwrap();
        let mapping = KbTypeMapping::from_lines("kb.actor\t/person/actor\n", &vocab).unwrap();
        let damon = EntityRecord::new(
            "E_damon",
            "Matt Damon",
            vec!["kb.actor".into()],
            &mapping,
            &vocab,
        );
        let (stats, _) = AnchorStatistics::ingest(
            [("Matt Damon", "E_damon")]
                .into_iter()
                .map(|(s, e)| (s.to_string(), e.to_string())),
        );
        let kb = KnowledgeBase::new(vec![damon], stats);

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0);
        let words: Vec<String> = ["matt", "damon", "said", "stars"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let table = EmbeddingTable::from_parts(
            words,
            Array2::from_shape_fn((4, 3), |_| rng.random_range(-0.5..0.5)),
        );

        let long = MentionExample::new(
            "d1",
            ["Matt", "Damon", "stars"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            (0, 2),
            BTreeSet::new(),
            None,
        )
        .unwrap();
        let short = MentionExample::new(
            "d1",
            ["Matt", "said"].iter().map(|s| s.to_string()).collect(),
            (0, 1),
            BTreeSet::new(),
            None,
        )
        .unwrap();

        let prepared = featurize_dataset(&[long, short], &kb, &mapping, &vocab, &table).unwrap();
        assert_eq!(prepared.len(), 2);
        // The generic "Matt" resolves to "matt damon" and links to the actor.
        assert_eq!(prepared[1].link.entity_id.as_deref(), Some("E_damon"));
        assert_eq!(prepared[1].link.resolved_surface, "matt damon");
        assert!(prepared[1].linked_is_person);
        assert_eq!(prepared[1].kb_types.len(), 2);

        let enc = prepared[1].encode_clean(&vocab).unwrap();
        assert_eq!(enc.f_e, vec![1.0, 1.0]);
        assert_eq!(enc.g, 1.0);
    }
}

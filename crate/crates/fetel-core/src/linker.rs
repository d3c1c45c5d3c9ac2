//! Commonness-based entity linking.
//!
//! A mention links to the entity with the greatest commonness score for its
//! surface string, and that score doubles as the confidence fed to the typing
//! model. Generic person mentions (e.g. "Matt") are first resolved to a more
//! specific mention in the same document (e.g. "Matt Damon") when the longer
//! mention links to a person entity.

use serde::{Deserialize, Serialize};

use crate::corpus::MentionExample;
use crate::kb::{normalize_surface, KnowledgeBase};

/// Outcome of linking one mention: an entity or NIL, with confidence in
/// `[0, 1]` and the surface actually used for lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub entity_id: Option<String>,
    pub confidence: f64,
    pub resolved_surface: String,
}

impl LinkResult {
    pub fn nil(resolved_surface: impl Into<String>) -> Self {
        LinkResult {
            entity_id: None,
            confidence: 0.0,
            resolved_surface: resolved_surface.into(),
        }
    }

    pub fn is_nil(&self) -> bool {
        self.entity_id.is_none()
    }
}

/// Links a surface to the entity with the greatest commonness score; NIL when
/// the surface was never observed as an anchor. Ties break to the
/// lexicographically smallest entity id.
pub fn link_mention(kb: &KnowledgeBase, surface: &str) -> LinkResult {
    let normalized = normalize_surface(surface);
    let Some(candidates) = kb.stats().candidates(&normalized) else {
        return LinkResult::nil(normalized);
    };
    let total = kb.stats().total(&normalized);
    if total == 0 {
        return LinkResult::nil(normalized);
    }
    // BTreeMap iteration is id-ordered, so `>` keeps the smallest id on ties.
    let mut best: Option<(&String, u64)> = None;
    for (entity_id, &count) in candidates {
        if best.map(|(_, c)| count > c).unwrap_or(true) {
            best = Some((entity_id, count));
        }
    }
    match best {
        Some((entity_id, count)) => LinkResult {
            entity_id: Some(entity_id.clone()),
            confidence: count as f64 / total as f64,
            resolved_surface: normalized,
        },
        None => LinkResult::nil(normalized),
    }
}

fn surface_tokens(surface: &str) -> Vec<String> {
    surface.split(' ').map(String::from).collect()
}

/// True if `needle` occurs as a contiguous token run inside `haystack`.
fn is_token_subsequence(needle: &[String], haystack: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Resolves a generic person mention to a more specific surface from the same
/// document. The mention's surface must be a strict contiguous token run of a
/// longer mention's surface, and the longer mention must link to a person
/// entity. Among qualifying antecedents the highest link confidence wins,
/// with ties going to the earliest mention in the document.
pub fn resolve_person_coreference(
    mention: &MentionExample,
    document_mentions: &[MentionExample],
    kb: &KnowledgeBase,
) -> String {
    let surface = mention.surface();
    let tokens = surface_tokens(&surface);
    let mut best: Option<(f64, usize, String)> = None;
    for (pos, other) in document_mentions.iter().enumerate() {
        let other_surface = other.surface();
        if other_surface == surface {
            continue;
        }
        let other_tokens = surface_tokens(&other_surface);
        if other_tokens.len() <= tokens.len() || !is_token_subsequence(&tokens, &other_tokens) {
            continue;
        }
        let link = link_mention(kb, &other_surface);
        let Some(entity_id) = &link.entity_id else {
            continue;
        };
        let is_person = kb.entity(entity_id).map(|e| e.is_person).unwrap_or(false);
        if !is_person {
            continue;
        }
        let better = match &best {
            None => true,
            Some((conf, best_pos, _)) => {
                link.confidence > *conf || (link.confidence == *conf && pos < *best_pos)
            }
        };
        if better {
            best = Some((link.confidence, pos, other_surface));
        }
    }
    best.map(|(_, _, s)| s).unwrap_or(surface)
}

/// Links every mention of a document, applying person coreference resolution
/// first. Output order matches input order.
pub fn link_in_document(
    kb: &KnowledgeBase,
    document_mentions: &[MentionExample],
) -> Vec<LinkResult> {
    document_mentions
        .iter()
        .map(|m| {
            let resolved = resolve_person_coreference(m, document_mentions, kb);
            link_mention(kb, &resolved)
        })
        .collect()
}

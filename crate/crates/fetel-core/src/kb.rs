//! Knowledge-base snapshot: entity records plus the anchor-derived surface
//! statistics that back the commonness prior.
//!
//! Commonness estimates the probability of an entity given only the mention
//! surface string: `counts[surface][entity] / totals[surface]`. Counts come
//! from anchor occurrences in a user-supplied corpus. Surfaces are normalized
//! (trimmed, internal whitespace collapsed, lowercased) before counting, and
//! the same normalization is applied to every query.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{KbTypeMapping, TypePath, TypeVocabulary};

const SNAPSHOT_MAGIC: &str = "FETELKB";
const SNAPSHOT_VERSION: u32 = 1;

/// One entity in the KB snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity_id: String,
    pub title: String,
    pub kb_types: Vec<String>,
    /// True iff the entity's mapped target types include `/person`. Computed
    /// once when the snapshot is built so linking does not need the mapping.
    pub is_person: bool,
}

impl EntityRecord {
    pub fn new(
        entity_id: impl Into<String>,
        title: impl Into<String>,
        kb_types: Vec<String>,
        mapping: &KbTypeMapping,
        vocab: &TypeVocabulary,
    ) -> Self {
        let kb_types: Vec<String> = kb_types;
        let mapped = mapping.map_kb_types(&kb_types, vocab);
        let person = TypePath::parse("/person").ok();
        let is_person = person.map(|p| mapped.contains(&p)).unwrap_or(false);
        EntityRecord {
            entity_id: entity_id.into(),
            title: title.into(),
            kb_types,
            is_person,
        }
    }
}

/// Normalizes an anchor surface: trim, collapse whitespace runs, lowercase.
pub fn normalize_surface(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Tally of anchor ingestion outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub pairs_ingested: u64,
    pub skipped_empty_surface: u64,
    pub skipped_empty_entity: u64,
}

/// Surface-string -> entity co-occurrence counts from anchor links.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorStatistics {
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    totals: BTreeMap<String, u64>,
}

impl AnchorStatistics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts every `(surface, entity)` pair in the stream. Pairs whose
    /// surface is blank after normalization, or whose entity id is empty,
    /// are skipped and tallied in the report rather than failing the ingest.
    pub fn ingest<I>(pairs: I) -> (Self, IngestReport)
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut stats = Self::new();
        let mut report = IngestReport::default();
        for (surface, entity_id) in pairs {
            if entity_id.is_empty() {
                report.skipped_empty_entity += 1;
                continue;
            }
            match stats.add(&surface, &entity_id) {
                Ok(()) => report.pairs_ingested += 1,
                Err(Error::EmptySurface) => report.skipped_empty_surface += 1,
                Err(_) => unreachable!("add only fails with EmptySurface"),
            }
        }
        (stats, report)
    }

    /// Adds a single occurrence of a non-empty entity id.
    pub fn add(&mut self, surface: &str, entity_id: &str) -> Result<()> {
        let surface = normalize_surface(surface);
        if surface.is_empty() {
            return Err(Error::EmptySurface);
        }
        debug_assert!(!entity_id.is_empty(), "entity ids are non-empty");
        *self
            .counts
            .entry(surface.clone())
            .or_default()
            .entry(entity_id.to_string())
            .or_insert(0) += 1;
        *self.totals.entry(surface).or_insert(0) += 1;
        Ok(())
    }

    /// `counts[s][e] / totals[s]`; 0.0 when the surface or entity is unseen.
    pub fn commonness(&self, surface: &str, entity_id: &str) -> f64 {
        let surface = normalize_surface(surface);
        match (self.counts.get(&surface), self.totals.get(&surface)) {
            (Some(by_entity), Some(&total)) if total > 0 => by_entity
                .get(entity_id)
                .map(|&c| c as f64 / total as f64)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// All candidate entities observed for a surface, with raw counts.
    pub fn candidates(&self, surface: &str) -> Option<&BTreeMap<String, u64>> {
        self.counts.get(&normalize_surface(surface))
    }

    pub fn total(&self, surface: &str) -> u64 {
        self.totals
            .get(&normalize_surface(surface))
            .copied()
            .unwrap_or(0)
    }

    pub fn n_surfaces(&self) -> usize {
        self.counts.len()
    }

    fn n_rows(&self) -> usize {
        self.counts.values().map(|m| m.len()).sum()
    }
}

/// Immutable KB snapshot: entity records plus anchor statistics.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entities: BTreeMap<String, EntityRecord>,
    stats: AnchorStatistics,
}

impl KnowledgeBase {
    pub fn new(entities: Vec<EntityRecord>, stats: AnchorStatistics) -> Self {
        let entities = entities
            .into_iter()
            .map(|e| (e.entity_id.clone(), e))
            .collect();
        KnowledgeBase { entities, stats }
    }

    pub fn entity(&self, entity_id: &str) -> Option<&EntityRecord> {
        self.entities.get(entity_id)
    }

    /// The stored KB types of an entity, in stored order.
    pub fn entity_types(&self, entity_id: &str) -> Result<&[String]> {
        self.entities
            .get(entity_id)
            .map(|e| e.kb_types.as_slice())
            .ok_or_else(|| Error::UnknownEntity(entity_id.to_string()))
    }

    pub fn commonness(&self, surface: &str, entity_id: &str) -> f64 {
        self.stats.commonness(surface, entity_id)
    }

    pub fn stats(&self) -> &AnchorStatistics {
        &self.stats
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    /// Writes a versioned line-delimited snapshot. The layout is
    /// deterministic, so identical KBs produce identical bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path.display().to_string(), e);
        writeln!(
            w,
            "{} {} {} {}",
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            self.entities.len(),
            self.stats.n_rows()
        )
        .map_err(io_err)?;
        for entity in self.entities.values() {
            let json = serde_json::to_string(entity).expect("entity record serializes");
            writeln!(w, "E\t{}", json).map_err(io_err)?;
        }
        for (surface, by_entity) in &self.stats.counts {
            for (entity_id, count) in by_entity {
                writeln!(w, "A\t{}\t{}\t{}", surface, entity_id, count).map_err(io_err)?;
            }
        }
        writeln!(w, "END").map_err(io_err)?;
        w.flush().map_err(io_err)?;
        Ok(())
    }

    /// Loads a snapshot written by [`KnowledgeBase::save`]. A wrong magic,
    /// wrong version, or truncated file is rejected rather than silently
    /// producing a partial KB.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
        let mut lines = BufReader::new(file).lines();

        let mismatch = |detail: &str| Error::FormatVersionMismatch {
            path: display.clone(),
            detail: detail.to_string(),
        };

        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(display.clone(), e))?
            .ok_or_else(|| mismatch("empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != SNAPSHOT_MAGIC {
            return Err(mismatch("bad magic header"));
        }
        let version: u32 = fields[1].parse().map_err(|_| mismatch("bad version"))?;
        if version != SNAPSHOT_VERSION {
            return Err(mismatch(&format!(
                "unsupported version {} (expected {})",
                version, SNAPSHOT_VERSION
            )));
        }
        let n_entities: usize = fields[2]
            .parse()
            .map_err(|_| mismatch("bad entity count"))?;
        let n_rows: usize = fields[3].parse().map_err(|_| mismatch("bad row count"))?;

        let mut entities = BTreeMap::new();
        let mut stats = AnchorStatistics::new();
        let mut rows = 0usize;
        let mut saw_end = false;
        for line in lines {
            let line = line.map_err(|e| Error::io(display.clone(), e))?;
            if line == "END" {
                saw_end = true;
                break;
            }
            let mut parts = line.splitn(2, '\t');
            match parts.next() {
                Some("E") => {
                    let json = parts.next().ok_or_else(|| mismatch("bad entity line"))?;
                    let entity: EntityRecord = serde_json::from_str(json)
                        .map_err(|e| mismatch(&format!("bad entity json: {}", e)))?;
                    entities.insert(entity.entity_id.clone(), entity);
                }
                Some("A") => {
                    let rest = parts.next().ok_or_else(|| mismatch("bad anchor line"))?;
                    let cols: Vec<&str> = rest.split('\t').collect();
                    if cols.len() != 3 {
                        return Err(mismatch("anchor line needs surface, entity, count"));
                    }
                    let count: u64 = cols[2].parse().map_err(|_| mismatch("bad anchor count"))?;
                    if count == 0 {
                        return Err(mismatch("anchor counts must be strictly positive"));
                    }
                    let surface = cols[0].to_string();
                    stats
                        .counts
                        .entry(surface.clone())
                        .or_default()
                        .insert(cols[1].to_string(), count);
                    *stats.totals.entry(surface).or_insert(0) += count;
                    rows += 1;
                }
                _ => return Err(mismatch("unknown record tag")),
            }
        }
        if !saw_end || entities.len() != n_entities || rows != n_rows {
            return Err(mismatch("truncated snapshot"));
        }
        Ok(KnowledgeBase { entities, stats })
    }
}

/// Report from loading entity records.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EntityLoadReport {
    pub entities_loaded: u64,
    pub duplicates_replaced: u64,
}

/// Wire form of one entity record: `{"id", "title", "types"}`.
#[derive(Deserialize)]
struct RawEntity {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    types: Vec<String>,
}

/// Loads entity records from JSON-lines. `is_person` is derived from the
/// mapping at load time.
pub fn load_entities_jsonl(
    path: impl AsRef<Path>,
    mapping: &KbTypeMapping,
    vocab: &TypeVocabulary,
) -> Result<(Vec<EntityRecord>, EntityLoadReport)> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut out: Vec<EntityRecord> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut report = EntityLoadReport::default();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntity = serde_json::from_str(&line).map_err(|e| Error::SchemaViolation {
            record: lineno + 1,
            detail: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            report.duplicates_replaced += 1;
            out.retain(|e| e.entity_id != raw.id);
        }
        out.push(EntityRecord::new(
            raw.id, raw.title, raw.types, mapping, vocab,
        ));
        report.entities_loaded += 1;
    }
    Ok((out, report))
}

/// Reads anchor pairs from TSV: `surface<TAB>entity_id`, one per occurrence.
pub fn load_anchor_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let (Some(surface), Some(entity)) = (parts.next(), parts.next()) else {
            return Err(Error::SchemaViolation {
                record: lineno + 1,
                detail: "expected surface<TAB>entity_id".to_string(),
            });
        };
        pairs.push((surface.to_string(), entity.trim().to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(raw: &[(&str, &str)]) -> Vec<(String, String)> {
        raw.iter()
            .map(|(s, e)| (s.to_string(), e.to_string()))
            .collect()
    }

    /// The hand-counted 4-anchor fixture: 3x (Trump, E1), 1x (Trump, E2).
    fn trump_stats() -> AnchorStatistics {
        let (stats, report) = AnchorStatistics::ingest(pairs(&[
            ("Trump", "E1"),
            ("Trump", "E1"),
            ("Trump", "E1"),
            ("Trump", "E2"),
        ]));
        assert_eq!(report.pairs_ingested, 4);
        stats
    }

    #[test]
    fn ingest_counts_multiplicity() {
        let stats = trump_stats();
        let by_entity = stats.candidates("trump").unwrap();
        assert_eq!(by_entity.get("E1"), Some(&3));
        assert_eq!(by_entity.get("E2"), Some(&1));
        assert_eq!(stats.total("trump"), 4);
    }

    #[test]
    fn ingest_empty_stream() {
        let (stats, report) = AnchorStatistics::ingest(Vec::new());
        assert_eq!(stats.n_surfaces(), 0);
        assert_eq!(report.pairs_ingested, 0);
    }

    #[test]
    fn ingest_normalizes_whitespace() {
        let (stats, _) = AnchorStatistics::ingest(pairs(&[("  Trump ", "E1")]));
        assert_eq!(stats.candidates("trump").unwrap().get("E1"), Some(&1));
    }

    #[test]
    fn ingest_skips_blank_surfaces_and_entities() {
        let (stats, report) =
            AnchorStatistics::ingest(pairs(&[("   ", "E1"), ("x", "E1"), ("y", "")]));
        assert_eq!(report.skipped_empty_surface, 1);
        assert_eq!(report.skipped_empty_entity, 1);
        assert_eq!(report.pairs_ingested, 1);
        assert_eq!(stats.n_surfaces(), 1);
    }

    #[test]
    fn commonness_hand_counts() {
        let stats = trump_stats();
        assert_eq!(stats.commonness("trump", "E1"), 0.75);
        assert_eq!(stats.commonness("trump", "E2"), 0.25);
        assert_eq!(stats.commonness("obama", "E1"), 0.0);
        assert_eq!(stats.commonness("trump", "E9"), 0.0);
    }

    #[test]
    fn entity_types_lookup() {
        let vocab = TypeVocabulary::from_lines("/person\n/person/politician\n").unwrap();
        let mapping =
            KbTypeMapping::from_lines("kb.politician\t/person/politician\n", &vocab).unwrap();
        let record = EntityRecord::new(
            "E1",
            "Donald Trump",
            vec!["kb.politician".to_string()],
            &mapping,
            &vocab,
        );
        assert!(record.is_person);
        let empty = EntityRecord::new("E2", "Nothing", vec![], &mapping, &vocab);
        assert!(!empty.is_person);

        let kb = KnowledgeBase::new(vec![record, empty], AnchorStatistics::new());
        assert_eq!(
            kb.entity_types("E1").unwrap(),
            &["kb.politician".to_string()]
        );
        assert_eq!(kb.entity_types("E2").unwrap(), &[] as &[String]);
        assert!(matches!(
            kb.entity_types("E9"),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn snapshot_round_trip() {
        let vocab = TypeVocabulary::from_lines("/person\n/person/politician\n/location\n").unwrap();
        let mapping = KbTypeMapping::from_lines(
            "kb.politician\t/person/politician\nkb.city\t/location\n",
            &vocab,
        )
        .unwrap();
        let entities = vec![
            EntityRecord::new(
                "E1",
                "Trump",
                vec!["kb.politician".into()],
                &mapping,
                &vocab,
            ),
            EntityRecord::new(
                "E2",
                "Trump Tower",
                vec!["kb.city".into()],
                &mapping,
                &vocab,
            ),
        ];
        let kb = KnowledgeBase::new(entities, trump_stats());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.snapshot");
        kb.save(&path).unwrap();
        let loaded = KnowledgeBase::load(&path).unwrap();

        assert_eq!(loaded.commonness("trump", "E1"), 0.75);
        assert_eq!(loaded.commonness("trump", "E2"), 0.25);
        assert_eq!(
            loaded.entity_types("E1").unwrap(),
            kb.entity_types("E1").unwrap()
        );
        assert_eq!(loaded.n_entities(), 2);
        assert!(loaded.entity("E1").unwrap().is_person);
    }

    #[test]
    fn snapshot_rejects_truncation_and_bad_magic() {
        let kb = KnowledgeBase::new(vec![], trump_stats());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.snapshot");
        kb.save(&path).unwrap();

        let full = std::fs::read_to_string(&path).unwrap();
        let truncated: String = full.lines().take(2).map(|l| format!("{}\n", l)).collect();
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(
            KnowledgeBase::load(&path),
            Err(Error::FormatVersionMismatch { .. })
        ));

        std::fs::write(&path, "NOTAKB 1 0 0\nEND\n").unwrap();
        assert!(matches!(
            KnowledgeBase::load(&path),
            Err(Error::FormatVersionMismatch { .. })
        ));

        assert!(matches!(
            KnowledgeBase::load(dir.path().join("missing.snapshot")),
            Err(Error::IoFailure { .. })
        ));
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<(String, String)>> {
        let surface = proptest::sample::select(vec!["a", "b c", "Trump", "x"]);
        let entity = proptest::sample::select(vec!["E1", "E2", "E3"]);
        proptest::collection::vec((surface, entity), 0..40).prop_map(|v| {
            v.into_iter()
                .map(|(s, e)| (s.to_string(), e.to_string()))
                .collect()
        })
    }

    proptest! {
        /// Commonness over a seen surface is a probability distribution.
        #[test]
        fn commonness_normalizes(pairs in arb_pairs()) {
            let (stats, _) = AnchorStatistics::ingest(pairs);
            for surface in stats.counts.keys() {
                let sum: f64 = stats.counts[surface]
                    .keys()
                    .map(|e| stats.commonness(surface, e))
                    .sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }

        /// Counts are invariant under permutation of the ingest stream.
        #[test]
        fn ingest_order_invariant(pairs in arb_pairs(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (a, _) = AnchorStatistics::ingest(pairs.clone());
            let mut shuffled = pairs;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            let (b, _) = AnchorStatistics::ingest(shuffled);
            prop_assert_eq!(a, b);
        }

        /// Ingesting a concatenation equals merging the two halves' counts.
        #[test]
        fn ingest_is_additive(a in arb_pairs(), b in arb_pairs()) {
            let concat: Vec<_> = a.iter().cloned().chain(b.iter().cloned()).collect();
            let (whole, _) = AnchorStatistics::ingest(concat);
            let (left, _) = AnchorStatistics::ingest(a);
            let (right, _) = AnchorStatistics::ingest(b);
            let mut merged = left;
            for (surface, by_entity) in right.counts {
                for (entity, count) in by_entity {
                    *merged.counts.entry(surface.clone()).or_default().entry(entity).or_insert(0) += count;
                }
            }
            merged.totals.clear();
            for (surface, by_entity) in &merged.counts {
                merged.totals.insert(surface.clone(), by_entity.values().sum());
            }
            prop_assert_eq!(whole, merged);
        }
    }
}

//! The hierarchical target tag set: type paths, the type vocabulary, and the
//! mapping from raw knowledge-base types into the target set.
//!
//! Type labels are slash-delimited paths such as `/person/politician`. A label
//! set is always kept ancestor-closed: whenever a path is present, every
//! prefix of it is present too. The vocabulary assigns each path a stable
//! index in `[0, k)` used for one-hot encodings and score vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A hierarchical type label, e.g. `/person/politician`.
///
/// Segments are non-empty, lowercase, and contain neither `/` nor whitespace.
/// The canonical string form round-trips exactly through [`TypePath::parse`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypePath {
    segments: Vec<String>,
}

impl TypePath {
    /// Parses a canonical path like `/person/politician`.
    ///
    /// Input is normalized to lowercase and a trailing slash is dropped.
    pub fn parse(raw: &str) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedTypePath {
            raw: raw.to_string(),
            reason: reason.to_string(),
        };
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(malformed("empty input"));
        }
        let Some(body) = trimmed.strip_prefix('/') else {
            return Err(malformed("missing leading '/'"));
        };
        let body = body.strip_suffix('/').unwrap_or(body);
        if body.is_empty() {
            return Err(malformed("no segments"));
        }
        let mut segments = Vec::new();
        for seg in body.split('/') {
            if seg.is_empty() {
                return Err(malformed("empty segment"));
            }
            if seg.chars().any(char::is_whitespace) {
                return Err(malformed("segment contains whitespace"));
            }
            segments.push(seg.to_lowercase());
        }
        Ok(TypePath { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// The canonical string form, `/seg1/seg2/...`.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for seg in &self.segments {
            s.push('/');
            s.push_str(seg);
        }
        s
    }

    /// The depth-(d-1) prefix, or `None` for a top-level path.
    pub fn parent(&self) -> Option<TypePath> {
        if self.segments.len() < 2 {
            None
        } else {
            Some(TypePath {
                segments: self.segments[..self.segments.len() - 1].to_vec(),
            })
        }
    }

    /// All strict prefixes, shallowest first (depth 1 .. d-1).
    pub fn ancestors(&self) -> impl Iterator<Item = TypePath> + '_ {
        (1..self.segments.len()).map(move |d| TypePath {
            segments: self.segments[..d].to_vec(),
        })
    }

    /// True for `/person/...` paths of depth two or more.
    pub fn is_fine_person(&self) -> bool {
        self.segments.len() >= 2 && self.segments[0] == "person"
    }
}

impl fmt::Display for TypePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}

impl FromStr for TypePath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TypePath::parse(s)
    }
}

impl Serialize for TypePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for TypePath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        TypePath::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// The target tag set: an ordered list of `k` distinct type paths with a
/// path-to-index bijection.
///
/// The vocabulary must be hierarchy-closed: the parent of every path of depth
/// two or more is itself a member. Fine-grained person types (first segment
/// `person`, depth >= 2) are tracked separately because they carry a larger
/// loss penalty and are the target of training-time noise injection.
#[derive(Debug, Clone)]
pub struct TypeVocabulary {
    types: Vec<TypePath>,
    index: HashMap<TypePath, usize>,
    person_fine: Vec<TypePath>,
}

impl TypeVocabulary {
    pub fn new(types: Vec<TypePath>) -> Result<Self> {
        let mut index = HashMap::with_capacity(types.len());
        for (i, t) in types.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::MalformedTypePath {
                    raw: t.canonical(),
                    reason: "duplicate type in vocabulary".to_string(),
                });
            }
        }
        for t in &types {
            if let Some(parent) = t.parent() {
                if !index.contains_key(&parent) {
                    return Err(Error::UnknownType(format!(
                        "{} (required as parent of {})",
                        parent, t
                    )));
                }
            }
        }
        let person_fine = types
            .iter()
            .filter(|t| t.is_fine_person())
            .cloned()
            .collect();
        Ok(TypeVocabulary {
            types,
            index,
            person_fine,
        })
    }

    /// Loads a vocabulary file: one canonical path per line, `#` comments.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_lines(&text)
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut types = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            types.push(TypePath::parse(line)?);
        }
        Self::new(types)
    }

    /// `k`, the number of types.
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[TypePath] {
        &self.types
    }

    pub fn contains(&self, t: &TypePath) -> bool {
        self.index.contains_key(t)
    }

    pub fn index_of(&self, t: &TypePath) -> Result<usize> {
        self.index
            .get(t)
            .copied()
            .ok_or_else(|| Error::UnknownType(t.canonical()))
    }

    pub fn get(&self, i: usize) -> &TypePath {
        &self.types[i]
    }

    /// Fine-grained person types, in vocabulary order.
    pub fn person_fine_types(&self) -> &[TypePath] {
        &self.person_fine
    }

    /// Closes a label set under prefixes: every ancestor of every member is
    /// added. Errors if any input label is outside the vocabulary; the added
    /// ancestors are guaranteed present by the hierarchy-closure invariant.
    pub fn expand_with_ancestors(&self, labels: &BTreeSet<TypePath>) -> Result<BTreeSet<TypePath>> {
        let mut closed = BTreeSet::new();
        for label in labels {
            if !self.contains(label) {
                return Err(Error::UnknownType(label.canonical()));
            }
            for anc in label.ancestors() {
                closed.insert(anc);
            }
            closed.insert(label.clone());
        }
        Ok(closed)
    }

    /// One-hot encodes a label set as a length-`k` 0/1 vector.
    pub fn one_hot(&self, labels: &BTreeSet<TypePath>) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.types.len()];
        for label in labels {
            v[self.index_of(label)?] = 1.0;
        }
        Ok(v)
    }

    /// Decodes set bit positions back into a label set.
    pub fn decode_one_hot(&self, bits: &[f64]) -> BTreeSet<TypePath> {
        bits.iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(i, _)| self.types[i].clone())
            .collect()
    }

    /// The per-type loss penalty: `lambda_p` for fine-grained person types,
    /// 1.0 otherwise. `lambda_p = 1` degenerates to the unweighted loss.
    pub fn penalty_weight(&self, t: &TypePath, lambda_p: f64) -> Result<f64> {
        if !self.contains(t) {
            return Err(Error::UnknownType(t.canonical()));
        }
        Ok(if t.is_fine_person() { lambda_p } else { 1.0 })
    }

    /// Serializes the vocabulary in load order.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for t in &self.types {
            s.push_str(&t.canonical());
            s.push('\n');
        }
        s
    }
}

/// Mapping from raw KB type identifiers to sets of target type paths.
///
/// Lookup is total: a KB type with no mapping contributes nothing rather than
/// erroring, so unmapped KB schemas degrade to empty evidence.
#[derive(Debug, Clone, Default)]
pub struct KbTypeMapping {
    entries: BTreeMap<String, BTreeSet<TypePath>>,
}

impl KbTypeMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one `kb_type -> target path` pair. The target must already be in
    /// the vocabulary.
    pub fn insert(
        &mut self,
        kb_type: &str,
        target: TypePath,
        vocab: &TypeVocabulary,
    ) -> Result<()> {
        if !vocab.contains(&target) {
            return Err(Error::UnknownType(target.canonical()));
        }
        self.entries
            .entry(kb_type.to_string())
            .or_default()
            .insert(target);
        Ok(())
    }

    /// Loads a TSV mapping file: `kb_type<TAB>target_path`, one pair per
    /// line, `#` comments. Multiple lines per KB type accumulate.
    pub fn load(path: impl AsRef<Path>, vocab: &TypeVocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_lines(&text, vocab)
    }

    pub fn from_lines(text: &str, vocab: &TypeVocabulary) -> Result<Self> {
        let mut mapping = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let (Some(kb_type), Some(target)) = (parts.next(), parts.next()) else {
                return Err(Error::SchemaViolation {
                    record: lineno + 1,
                    detail: "expected kb_type<TAB>target_path".to_string(),
                });
            };
            mapping.insert(kb_type.trim(), TypePath::parse(target.trim())?, vocab)?;
        }
        Ok(mapping)
    }

    pub fn lookup(&self, kb_type: &str) -> Option<&BTreeSet<TypePath>> {
        self.entries.get(kb_type)
    }

    /// Maps a list of KB type identifiers into the target set, closed under
    /// ancestors. Unmapped identifiers contribute nothing.
    pub fn map_kb_types(&self, kb_types: &[String], vocab: &TypeVocabulary) -> BTreeSet<TypePath> {
        let mut out = BTreeSet::new();
        for kb_type in kb_types {
            if let Some(targets) = self.entries.get(kb_type) {
                for t in targets {
                    for anc in t.ancestors() {
                        debug_assert!(vocab.contains(&anc), "vocabulary is hierarchy-closed");
                        out.insert(anc);
                    }
                    out.insert(t.clone());
                }
            }
        }
        out
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<TypePath>> {
        &self.entries
    }

    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for (kb_type, targets) in &self.entries {
            for t in targets {
                s.push_str(kb_type);
                s.push('\t');
                s.push_str(&t.canonical());
                s.push('\n');
            }
        }
        s
    }
}

/// Convenience for building closed label sets from canonical strings.
pub fn parse_label_set(raw: &[String], vocab: &TypeVocabulary) -> Result<BTreeSet<TypePath>> {
    let mut set = BTreeSet::new();
    for s in raw {
        set.insert(TypePath::parse(s)?);
    }
    vocab.expand_with_ancestors(&set)
}

//! Documents, token sequences, entities and BIO conversion.

mod bio;
mod funsd;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bio::{bio_to_entities, entities_to_bio, entities_to_tags, tags_to_entities, Tag};
pub use funsd::{document_to_funsd, load_funsd_json, parse_funsd_str, save_funsd_json};
pub use vocab::{build_vocab, tokenize, Vocabulary, PAD_ID, UNK_ID};

/// Label of nodes that carry no entity.
pub const OTHER: &str = "other";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl From<[i64; 4]> for BBox {
    fn from(b: [i64; 4]) -> Self {
        BBox {
            x0: b[0],
            y0: b[1],
            x1: b[2],
            y1: b[3],
        }
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextNode {
    pub id: usize,
    pub text: String,
    pub bbox: Option<BBox>,
    /// Entity-type name, or [`OTHER`].
    pub label: String,
}

impl TextNode {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    /// Nodes in reading order; `nodes[i].id == i`.
    pub nodes: Vec<TextNode>,
    pub page_size: Option<(u32, u32)>,
}

impl Document {
    /// Checks contiguous node ids, non-empty text and box ordering.
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            let fail = |m: String| Err(Error::InvalidEntity(format!("document {}: node {i}: {m}", self.id)));
            if n.id != i {
                return fail(format!("id {} out of order", n.id));
            }
            if n.text.trim().is_empty() {
                return fail("empty text".into());
            }
            if let Some(b) = n.bbox {
                if !b.is_valid() {
                    return fail(format!("inverted box {:?}", <[i64; 4]>::from(b)));
                }
            }
        }
        Ok(())
    }
}

/// Ordered entity-type names, excluding [`OTHER`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    types: Vec<String>,
}

impl LabelSet {
    pub fn new<S: AsRef<str>>(types: impl IntoIterator<Item = S>) -> Result<Self> {
        let types: Vec<String> = types.into_iter().map(|s| s.as_ref().to_lowercase()).collect();
        for (i, t) in types.iter().enumerate() {
            if t == OTHER {
                return Err(Error::Config("\"other\" cannot be an entity type".into()));
            }
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Config(format!("invalid entity type name {t:?}")));
            }
            if types[..i].contains(t) {
                return Err(Error::Config(format!("duplicate entity type {t:?}")));
            }
        }
        Ok(LabelSet { types })
    }

    /// The FUNSD label set.
    pub fn funsd() -> Self {
        LabelSet::new(["header", "question", "answer"]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.types
    }

    pub fn name(&self, index: usize) -> &str {
        &self.types[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t == name)
    }

    /// `Ok(None)` for [`OTHER`], the type index for a known label.
    pub fn resolve(&self, label: &str) -> Result<Option<usize>> {
        if label == OTHER {
            return Ok(None);
        }
        self.index_of(label)
            .map(Some)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.types
    }
}

/// Tokenized document: the encoder and head input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub token_ids: Vec<usize>,
    /// Origin node of every token; padding repeats the last real value.
    pub node_of_token: Vec<usize>,
    /// Span position of every token: its node index.
    pub span_positions: Vec<usize>,
    /// False on padding.
    pub attention_keep: Vec<bool>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of leading non-padding tokens.
    pub fn real_len(&self) -> usize {
        self.attention_keep.iter().take_while(|k| **k).count()
    }

    /// Drops trailing padding.
    pub fn trimmed(&self) -> TokenSequence {
        let n = self.real_len();
        TokenSequence {
            token_ids: self.token_ids[..n].to_vec(),
            node_of_token: self.node_of_token[..n].to_vec(),
            span_positions: self.span_positions[..n].to_vec(),
            attention_keep: self.attention_keep[..n].to_vec(),
        }
    }

    /// Little-endian byte image of all four fields, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 25);
        for i in 0..self.len() {
            out.extend_from_slice(&(self.token_ids[i] as u64).to_le_bytes());
            out.extend_from_slice(&(self.node_of_token[i] as u64).to_le_bytes());
            out.extend_from_slice(&(self.span_positions[i] as u64).to_le_bytes());
            out.push(self.attention_keep[i] as u8);
        }
        out
    }
}

/// A typed inclusive token span `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub type_index: usize,
}

impl Entity {
    pub fn new(type_index: usize, start: usize, end: usize) -> Self {
        Entity {
            start,
            end,
            type_index,
        }
    }

    pub fn overlaps(&self, other: &Entity) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.type_index, self.start, self.end)
    }
}

/// Entities kept sorted by `(start, end, type)` without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntitySet(Vec<Entity>);

impl EntitySet {
    pub fn new() -> Self {
        EntitySet(Vec::new())
    }

    pub fn from_vec(mut v: Vec<Entity>) -> Self {
        v.sort();
        v.dedup();
        EntitySet(v)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Entity> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: &Entity) -> bool {
        self.0.binary_search(e).is_ok()
    }

    pub fn as_slice(&self) -> &[Entity] {
        &self.0
    }

    /// Errors on `start > end` or any two intersecting spans.
    pub fn check_non_overlapping(&self) -> Result<()> {
        for e in &self.0 {
            if e.start > e.end {
                return Err(Error::InvalidEntity(format!("{e}: start after end")));
            }
        }
        for w in self.0.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(Error::Overlap(format!("{} and {}", w[0], w[1])));
            }
        }
        Ok(())
    }
}

impl FromIterator<Entity> for EntitySet {
    fn from_iter<I: IntoIterator<Item = Entity>>(iter: I) -> Self {
        EntitySet::from_vec(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a EntitySet {
    type Item = &'a Entity;
    type IntoIter = std::slice::Iter<'a, Entity>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Gold entities: one per labeled node whose tokens all survived
/// truncation. Nodes labeled [`OTHER`] contribute nothing.
pub fn gold_entities(doc: &Document, seq: &TokenSequence, labels: &LabelSet) -> Result<EntitySet> {
    let real = seq.real_len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < real {
        let node = seq.node_of_token[i];
        let mut j = i;
        while j + 1 < real && seq.node_of_token[j + 1] == node {
            j += 1;
        }
        let n = doc
            .nodes
            .get(node)
            .ok_or_else(|| Error::InvalidEntity(format!("token {i} maps to missing node {node}")))?;
        if let Some(type_index) = labels.resolve(&n.label)? {
            if j + 1 - i == n.word_count() {
                out.push(Entity::new(type_index, i, j));
            }
        }
        i = j + 1;
    }
    Ok(EntitySet::from_vec(out))
}

/// Box of the origin node of every real token.
pub fn token_boxes(doc: &Document, seq: &TokenSequence) -> Vec<Option<BBox>> {
    (0..seq.real_len())
        .map(|i| doc.nodes.get(seq.node_of_token[i]).and_then(|n| n.bbox))
        .collect()
}

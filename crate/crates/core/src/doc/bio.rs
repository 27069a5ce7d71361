use super::{Entity, EntitySet, LabelSet};
use crate::error::{Error, Result};

/// A BIO tag over type indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    B(usize),
    I(usize),
}

impl Tag {
    /// Dense index used by token classifiers: `O = 0`, `B-t = 1 + 2t`, `I-t = 2 + 2t`.
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(t) => 1 + 2 * t,
            Tag::I(t) => 2 + 2 * t,
        }
    }

    pub fn from_index(i: usize) -> Tag {
        match i {
            0 => Tag::O,
            i if i % 2 == 1 => Tag::B((i - 1) / 2),
            i => Tag::I((i - 2) / 2),
        }
    }

    pub fn parse(s: &str, labels: &LabelSet) -> Result<Tag> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let (prefix, name) = s
            .split_once('-')
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))?;
        let t = labels
            .index_of(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))?;
        match prefix {
            "B" => Ok(Tag::B(t)),
            "I" => Ok(Tag::I(t)),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }

    pub fn render(self, labels: &LabelSet) -> String {
        match self {
            Tag::O => "O".to_string(),
            Tag::B(t) => format!("B-{}", labels.name(t)),
            Tag::I(t) => format!("I-{}", labels.name(t)),
        }
    }
}

/// `B` at each entity start, `I` through its end, `O` elsewhere.
pub fn entities_to_tags(entities: &EntitySet, len: usize) -> Result<Vec<Tag>> {
    entities.check_non_overlapping()?;
    let mut tags = vec![Tag::O; len];
    for e in entities {
        if e.end >= len {
            return Err(Error::InvalidEntity(format!("{e} beyond length {len}")));
        }
        tags[e.start] = Tag::B(e.type_index);
        for t in &mut tags[e.start + 1..=e.end] {
            *t = Tag::I(e.type_index);
        }
    }
    Ok(tags)
}

/// Maximal typed spans. An `I-t` that does not continue a span of type `t`
/// opens a new one (conll/seqeval repair).
pub fn tags_to_entities(tags: &[Tag]) -> EntitySet {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            Tag::O => {
                if let Some((t, s)) = open.take() {
                    out.push(Entity::new(t, s, i - 1));
                }
            }
            Tag::B(t) => {
                if let Some((pt, s)) = open.take() {
                    out.push(Entity::new(pt, s, i - 1));
                }
                open = Some((t, i));
            }
            Tag::I(t) => match open {
                Some((pt, _)) if pt == t => {}
                _ => {
                    if let Some((pt, s)) = open.take() {
                        out.push(Entity::new(pt, s, i - 1));
                    }
                    open = Some((t, i));
                }
            },
        }
    }
    if let Some((t, s)) = open {
        out.push(Entity::new(t, s, tags.len() - 1));
    }
    EntitySet::from_vec(out)
}

pub fn entities_to_bio(entities: &EntitySet, len: usize, labels: &LabelSet) -> Result<Vec<String>> {
    if let Some(e) = entities.iter().find(|e| e.type_index >= labels.len()) {
        return Err(Error::InvalidEntity(format!("{e}: type index out of range")));
    }
    Ok(entities_to_tags(entities, len)?
        .into_iter()
        .map(|t| t.render(labels))
        .collect())
}

pub fn bio_to_entities<S: AsRef<str>>(tags: &[S], labels: &LabelSet) -> Result<EntitySet> {
    let parsed = tags
        .iter()
        .map(|s| Tag::parse(s.as_ref(), labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(tags_to_entities(&parsed))
}

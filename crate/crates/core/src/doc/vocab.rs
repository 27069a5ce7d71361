use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Document, TokenSequence};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const PAD: &str = "<pad>";
const UNK: &str = "<unk>";

/// Word-level vocabulary. Words are matched lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

fn normalize(word: &str) -> String {
    word.to_lowercase()
}

impl Vocabulary {
    /// Vocabulary with the reserved ids followed by `words` in order.
    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut v = Vocabulary {
            words: vec![PAD.to_string(), UNK.to_string()],
            index: HashMap::new(),
        };
        v.index.insert(PAD.to_string(), PAD_ID);
        v.index.insert(UNK.to_string(), UNK_ID);
        for w in words {
            let w = normalize(w.as_ref());
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&normalize(word)).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&normalize(word))
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// UTF-8 lines `word<TAB>id`, in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            let _ = writeln!(out, "{w}\t{i}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (w, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::Config(format!("vocabulary line {}: missing tab", lineno + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::Config(format!("vocabulary line {}: bad id {id:?}", lineno + 1)))?;
            if id != words.len() {
                return Err(Error::Config(format!(
                    "vocabulary line {}: id {id} out of sequence",
                    lineno + 1
                )));
            }
            words.push(w.to_string());
        }
        if words.len() < 2 || words[PAD_ID] != PAD || words[UNK_ID] != UNK {
            return Err(Error::Config("vocabulary must start with <pad>, <unk>".into()));
        }
        Ok(Vocabulary::from_words(words.into_iter().skip(2)))
    }
}

/// Counts whitespace-split words over `docs` and keeps those seen at least
/// `min_count` times, ordered by count descending then lexicographically.
pub fn build_vocab(docs: &[Document], min_count: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in docs {
        for n in &d.nodes {
            for w in n.words() {
                *counts.entry(normalize(w)).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_count.max(1) && w != PAD && w != UNK)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_words(kept.into_iter().map(|(w, _)| w)))
}

/// Word-level tokenization: one token per whitespace-separated word,
/// truncated to `max_seq_len` and padded up to it.
pub fn tokenize(doc: &Document, vocab: &Vocabulary, max_seq_len: usize) -> TokenSequence {
    let mut token_ids = Vec::with_capacity(max_seq_len);
    let mut node_of_token = Vec::with_capacity(max_seq_len);
    'outer: for (ni, n) in doc.nodes.iter().enumerate() {
        for w in n.words() {
            if token_ids.len() == max_seq_len {
                break 'outer;
            }
            token_ids.push(vocab.id(w));
            node_of_token.push(ni);
        }
    }
    let real = token_ids.len();
    let last_node = node_of_token.last().copied().unwrap_or(0);
    token_ids.resize(max_seq_len, PAD_ID);
    node_of_token.resize(max_seq_len, last_node);
    let mut attention_keep = vec![true; real];
    attention_keep.resize(max_seq_len, false);
    TokenSequence {
        span_positions: node_of_token.clone(),
        token_ids,
        node_of_token,
        attention_keep,
    }
}

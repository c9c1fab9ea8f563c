use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
const RESERVED: [&str; 2] = ["<pad>", "<unk>"];

/// Lowercased word → id map with reserved padding and unknown ids.
///
/// Serializes as the word list in id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `limit` most frequent lowercased words; ties go to the
    /// lexicographically smaller word.
    pub fn build<I, S>(tokens: I, limit: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tok in tokens {
            let lower = tok.as_ref().to_lowercase();
            if RESERVED.contains(&lower.as_str()) {
                continue;
            }
            *counts.entry(lower).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(limit);
        Self::from_words(
            RESERVED
                .iter()
                .map(|s| s.to_string())
                .chain(ranked.into_iter().map(|(w, _)| w))
                .collect(),
        )
    }

    /// Rebuilds from a word list in id order; the first two entries must be
    /// the reserved names.
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= RESERVED.len()
    }

    /// Id of `word` after lowercasing, or `UNK_ID`.
    pub fn id(&self, word: &str) -> u32 {
        self.index
            .get(&word.to_lowercase())
            .copied()
            .filter(|&id| id > UNK_ID)
            .unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.id(word) != UNK_ID
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub(crate) fn has_reserved_prefix(&self) -> bool {
        self.words.len() >= 2 && self.words[0] == RESERVED[0] && self.words[1] == RESERVED[1]
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.words.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        let vocab = Self::from_words(words);
        if !vocab.has_reserved_prefix() {
            return Err(serde::de::Error::custom("vocabulary must start with <pad>, <unk>"));
        }
        Ok(vocab)
    }
}

//! The fixed part-of-speech inventory.

use serde::{Deserialize, Serialize};

/// Real tags in id order; id 0 is reserved for padding, so `TAGS[i]` has id `i + 1`.
pub const TAGS: [&str; 47] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ",", ":", ";", "?", "!", ".", "$", "(", ")",
    "``", "''",
];

pub const PAD_TAG: u8 = 0;
pub const PAD_NAME: &str = "<pad>";

/// Number of tag ids including the padding id.
pub const NUM_TAG_IDS: usize = TAGS.len() + 1;

/// Stable bijection between tag strings and ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    tags: Vec<String>,
}

impl Default for TagSet {
    fn default() -> Self {
        Self::standard()
    }
}

impl TagSet {
    pub fn standard() -> Self {
        Self {
            tags: TAGS.iter().map(|t| t.to_string()).collect(),
        }
    }

    /// Ids in use, padding included.
    pub fn num_ids(&self) -> usize {
        self.tags.len() + 1
    }

    pub fn id(tag: &str) -> Option<u8> {
        TAGS.iter().position(|t| *t == tag).map(|i| (i + 1) as u8)
    }

    pub fn name(id: u8) -> &'static str {
        match id {
            PAD_TAG => PAD_NAME,
            i => TAGS[usize::from(i) - 1],
        }
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Tag a token receives without consulting any model: punctuation tokens
    /// spelled exactly like a punctuation tag, plus the `...` ellipsis (`:`).
    pub fn punctuation_tag(token: &str) -> Option<u8> {
        if token == "..." {
            return Self::id(":");
        }
        if token.chars().any(|c| c.is_alphanumeric()) {
            return None;
        }
        Self::id(token)
    }
}

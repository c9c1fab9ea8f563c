use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which channels the network runs and how they are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Lexical and syntactic channels in parallel, document vectors concatenated.
    Style,
    Lexical,
    Syntactic,
    /// Word and tag embeddings concatenated per token, one channel.
    CombinedEmbed,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Syntactic, Mode::Lexical, Mode::Style, Mode::CombinedEmbed];

    pub fn channels(self) -> &'static [Channel] {
        match self {
            Mode::Style => &[Channel::Lexical, Channel::Syntactic],
            Mode::Lexical => &[Channel::Lexical],
            Mode::Syntactic => &[Channel::Syntactic],
            Mode::CombinedEmbed => &[Channel::Combined],
        }
    }

    pub fn uses_words(self) -> bool {
        self != Mode::Syntactic
    }

    pub fn uses_tags(self) -> bool {
        self != Mode::Lexical
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Style => "style",
            Mode::Lexical => "lexical",
            Mode::Syntactic => "syntactic",
            Mode::CombinedEmbed => "combined-embed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected style, lexical, syntactic or combined-embed)")))
    }
}

/// One hierarchical encoder: word CNN, sentence BiLSTM, attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Lexical,
    Syntactic,
    Combined,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Lexical => "lexical",
            Channel::Syntactic => "syntactic",
            Channel::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sentences_per_doc: usize,
    pub words_per_sentence: usize,
    pub d_w: usize,
    pub d_p: usize,
    pub receptive_fields: Vec<usize>,
    pub filters_per_size: usize,
    /// Hidden size per LSTM direction.
    pub lstm_hidden: usize,
    pub attention_dim: usize,
    pub num_classes: usize,
    pub mode: Mode,
    /// Whether the lexical table is fine-tuned.
    pub lexical_trainable: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::ccat()
    }
}

impl ModelConfig {
    fn paper(words_per_sentence: usize) -> Self {
        Self {
            sentences_per_doc: 40,
            words_per_sentence,
            d_w: 100,
            d_p: 100,
            receptive_fields: vec![3, 4, 5],
            filters_per_size: 100,
            lstm_hidden: 100,
            attention_dim: 200,
            num_classes: 2,
            mode: Mode::Style,
            lexical_trainable: true,
        }
    }

    pub fn ccat() -> Self {
        Self::paper(30)
    }

    pub fn blogs() -> Self {
        Self::paper(20)
    }

    /// Small dimensions sized for the synthetic corpora.
    pub fn desk() -> Self {
        Self {
            sentences_per_doc: 16,
            words_per_sentence: 12,
            d_w: 16,
            d_p: 16,
            receptive_fields: vec![2, 3, 4],
            filters_per_size: 12,
            lstm_hidden: 12,
            attention_dim: 24,
            num_classes: 2,
            mode: Mode::Style,
            lexical_trainable: true,
        }
    }

    /// The gradient-check fixture: vocabulary of 20 is supplied by the caller.
    pub fn tiny() -> Self {
        Self {
            sentences_per_doc: 3,
            words_per_sentence: 6,
            d_w: 4,
            d_p: 4,
            receptive_fields: vec![2, 3],
            filters_per_size: 2,
            lstm_hidden: 3,
            attention_dim: 6,
            num_classes: 2,
            mode: Mode::Style,
            lexical_trainable: true,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ccat" => Ok(Self::ccat()),
            "blogs" => Ok(Self::blogs()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected ccat, blogs, desk or tiny)"))),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn max_receptive_field(&self) -> usize {
        self.receptive_fields.iter().copied().max().unwrap_or(0)
    }

    /// Sentence vector width `K = |Z| · filters_per_size`.
    pub fn sentence_dim(&self) -> usize {
        self.receptive_fields.len() * self.filters_per_size
    }

    pub fn fusion_dim(&self) -> usize {
        self.mode.channels().len() * 2 * self.lstm_hidden
    }

    pub fn channel_input_dim(&self, channel: Channel) -> usize {
        match channel {
            Channel::Lexical => self.d_w,
            Channel::Syntactic => self.d_p,
            Channel::Combined => self.d_w + self.d_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.receptive_fields.is_empty() {
            return fail("receptive_fields must not be empty".into());
        }
        if self.receptive_fields.contains(&0) {
            return fail("receptive field sizes must be at least 1".into());
        }
        if self.words_per_sentence < self.max_receptive_field() {
            return fail(format!(
                "words_per_sentence {} is smaller than the largest receptive field {}",
                self.words_per_sentence,
                self.max_receptive_field()
            ));
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        for (name, v) in [
            ("sentences_per_doc", self.sentences_per_doc),
            ("d_w", self.d_w),
            ("d_p", self.d_p),
            ("filters_per_size", self.filters_per_size),
            ("lstm_hidden", self.lstm_hidden),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

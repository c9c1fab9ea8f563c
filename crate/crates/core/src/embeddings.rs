//! Lexical (word) and syntactic (tag) embedding tables.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::textpipe::{Vocabulary, NUM_TAG_IDS, UNK_ID};

/// Standard deviation of fallback rows; their variance is 0.01.
pub const FALLBACK_STD: f64 = 0.1;
pub const SYNTACTIC_INIT_RANGE: f32 = 0.05;

/// `|vocab| × d_w` word table. Row 0 (PAD) is zero and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalEmbeddingTable {
    pub table: Tensor<f32>,
    pub trainable: bool,
    /// Vocabulary words found in the pretrained file.
    pub found: usize,
}

/// `48 × d_p` tag table. Row 0 (PAD) is zero and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntacticEmbeddingTable {
    pub table: Tensor<f32>,
}

/// Parsed pretrained vectors restricted to one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f32>>,
}

fn is_header(line: &str) -> bool {
    let parts: Vec<&str> = line.split_whitespace().collect();
    parts.len() == 2 && parts.iter().all(|p| p.parse::<u64>().is_ok())
}

/// Parses whitespace-separated `word f1 … f_d` lines, keeping only words in
/// `vocab` (matched after lowercasing; the first occurrence wins). A first
/// line made of two integers is treated as a header and skipped.
pub fn parse_pretrained(text: &str, source: &str, vocab: &Vocabulary, dim: usize) -> Result<PretrainedVectors> {
    let mut vectors = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && is_header(line) {
            log::warn!("{source}: skipping header line {:?}", line.trim());
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("line is not blank").to_lowercase();
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::format(
                source,
                line_no,
                format!("expected {dim} values for {word:?}, found {}", values.len()),
            ));
        }
        if !vocab.contains(&word) || vectors.contains_key(&word) {
            continue;
        }
        let row = values
            .iter()
            .map(|v| {
                v.parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::format(source, line_no, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        vectors.insert(word, row);
    }
    Ok(PretrainedVectors { dim, vectors })
}

impl LexicalEmbeddingTable {
    /// Builds the table from pretrained vectors. Words missing from them are
    /// drawn from `N(0, 0.01)` in id order, UNK is the mean of the found rows
    /// (a draw like the others when none were found), PAD is zero.
    pub fn from_pretrained(pre: &PretrainedVectors, vocab: &Vocabulary, seed: u64) -> Self {
        let d = pre.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, FALLBACK_STD).expect("valid std");
        let mut data = vec![0.0f32; vocab.len() * d];
        let mut sum = vec![0.0f64; d];
        let mut found = 0;
        for (id, word) in vocab.words().iter().enumerate().skip(UNK_ID as usize + 1) {
            let row = &mut data[id * d..(id + 1) * d];
            if let Some(v) = pre.vectors.get(word) {
                row.copy_from_slice(v);
                for (s, &x) in sum.iter_mut().zip(v) {
                    *s += f64::from(x);
                }
                found += 1;
            } else {
                for x in row.iter_mut() {
                    *x = normal.sample(&mut rng) as f32;
                }
            }
        }
        let unk = &mut data[UNK_ID as usize * d..(UNK_ID as usize + 1) * d];
        if found > 0 {
            for (x, s) in unk.iter_mut().zip(&sum) {
                *x = (s / found as f64) as f32;
            }
        } else {
            for x in unk.iter_mut() {
                *x = normal.sample(&mut rng) as f32;
            }
        }
        debug_assert!(data[..d].iter().all(|&x| x == 0.0), "PAD row stays zero");
        Self {
            table: Tensor::new(vec![vocab.len(), d], data).expect("finite table"),
            trainable: true,
            found,
        }
    }

    /// Table with every non-PAD row drawn from the fallback distribution.
    pub fn random(vocab: &Vocabulary, d_w: usize, seed: u64) -> Self {
        let empty = PretrainedVectors {
            dim: d_w,
            vectors: HashMap::new(),
        };
        Self::from_pretrained(&empty, vocab, seed)
    }

    pub fn with_trainable(mut self, trainable: bool) -> Self {
        self.trainable = trainable;
        self
    }
}

pub fn load_pretrained(path: &Path, vocab: &Vocabulary, d_w: usize, seed: u64) -> Result<LexicalEmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pre = parse_pretrained(&text, &path.display().to_string(), vocab, d_w)?;
    Ok(LexicalEmbeddingTable::from_pretrained(&pre, vocab, seed))
}

/// Uniform `[−0.05, 0.05]` tag table with a zero PAD row.
pub fn init_syntactic(seed: u64, d_p: usize) -> SyntacticEmbeddingTable {
    init_syntactic_with(&mut ChaCha8Rng::seed_from_u64(seed), d_p)
}

pub(crate) fn init_syntactic_with<R: Rng>(rng: &mut R, d_p: usize) -> SyntacticEmbeddingTable {
    let dist = Uniform::new_inclusive(-SYNTACTIC_INIT_RANGE, SYNTACTIC_INIT_RANGE).expect("valid range");
    let mut data: Vec<f32> = (0..NUM_TAG_IDS * d_p).map(|_| dist.sample(rng)).collect();
    data[..d_p].fill(0.0);
    SyntacticEmbeddingTable {
        table: Tensor::new(vec![NUM_TAG_IDS, d_p], data).expect("finite table"),
    }
}

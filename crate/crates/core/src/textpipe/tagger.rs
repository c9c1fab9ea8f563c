//! Greedy averaged-perceptron part-of-speech tagger.
//!
//! Tokens spelled like a punctuation tag are tagged as that tag before the
//! model is consulted, so punctuation tagging never depends on training data.
//! Frequent training words that nearly always carry one tag are looked up in
//! a dictionary instead of being scored.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::formats::TaggedSentence;
use super::tagset::{TagSet, NUM_TAG_IDS};
use crate::error::{Error, Result};

const START: &str = "-START-";
const START2: &str = "-START2-";

/// Averaged weights per feature, indexed by tag id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronTagger {
    weights: BTreeMap<String, Vec<f64>>,
    /// Frequent training words seen with a single dominant tag.
    dictionary: BTreeMap<String, u8>,
}

/// Minimum count and dominant-tag share for a word to enter the dictionary.
const DICT_MIN_COUNT: usize = 4;
const DICT_MIN_SHARE: f64 = 0.97;

fn build_dictionary(corpus: &[TaggedSentence]) -> BTreeMap<String, u8> {
    let mut counts: HashMap<&str, [usize; NUM_TAG_IDS]> = HashMap::new();
    for s in corpus {
        for (w, &t) in s.tokens.iter().zip(&s.tags) {
            counts.entry(w.as_str()).or_insert([0; NUM_TAG_IDS])[usize::from(t)] += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(w, c)| {
            let total: usize = c.iter().sum();
            let (tag, &n) = c.iter().enumerate().max_by_key(|&(i, n)| (n, std::cmp::Reverse(i)))?;
            (total >= DICT_MIN_COUNT && n as f64 / total as f64 >= DICT_MIN_SHARE).then(|| (w.to_string(), tag as u8))
        })
        .collect()
}

#[derive(Default)]
struct Accumulator {
    weights: Vec<f64>,
    totals: Vec<f64>,
    stamps: Vec<u64>,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            weights: vec![0.0; NUM_TAG_IDS],
            totals: vec![0.0; NUM_TAG_IDS],
            stamps: vec![0; NUM_TAG_IDS],
        }
    }

    fn bump(&mut self, class: usize, delta: f64, now: u64) {
        self.totals[class] += (now - self.stamps[class]) as f64 * self.weights[class];
        self.stamps[class] = now;
        self.weights[class] += delta;
    }
}

fn features(tokens: &[String], i: usize, prev: &str, prev2: &str) -> Vec<String> {
    let word = &tokens[i];
    let lower = word.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let suffix = |n: usize| -> String { chars[chars.len().saturating_sub(n)..].iter().collect() };
    let context = |j: Option<usize>, edge: &str| -> String {
        j.and_then(|j| tokens.get(j))
            .map(|w| w.to_lowercase())
            .unwrap_or_else(|| edge.to_string())
    };
    let prev_word = context(i.checked_sub(1), START);
    let next_word = context(Some(i + 1), "-END-");
    let next_suffix: String = {
        let c: Vec<char> = next_word.chars().collect();
        c[c.len().saturating_sub(3)..].iter().collect()
    };
    let prev_suffix: String = {
        let c: Vec<char> = prev_word.chars().collect();
        c[c.len().saturating_sub(3)..].iter().collect()
    };
    let next2_word = context(Some(i + 2), "-END2-");
    let prefix = |n: usize| -> String { chars[..n.min(chars.len())].iter().collect() };

    let mut f = vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("l={lower}"),
        format!("s1={}", suffix(1)),
        format!("s2={}", suffix(2)),
        format!("s3={}", suffix(3)),
        format!("p1={}", chars.first().map(|c| c.to_string()).unwrap_or_default()),
        format!("pw={prev_word}"),
        format!("nw={next_word}"),
        format!("ns3={next_suffix}"),
        format!("ps3={prev_suffix}"),
        format!("nw2={next2_word}"),
        format!("s4={}", suffix(4)),
        format!("p2={}", prefix(2)),
        format!("p3={}", prefix(3)),
        format!("pt={prev}"),
        format!("pt2={prev2}|{prev}"),
        format!("ptw={prev}|{lower}"),
    ];
    let first = word.chars().next();
    if first.is_some_and(char::is_uppercase) {
        f.push(if i == 0 { "cap-first" } else { "cap" }.to_string());
    }
    if word.chars().any(char::is_alphabetic) && !word.chars().any(char::is_lowercase) {
        f.push("allcaps".to_string());
    }
    if word.chars().any(|c| c.is_ascii_digit()) {
        f.push("digit".to_string());
    }
    if word.contains('-') {
        f.push("hyphen".to_string());
    }
    f
}

/// Lowest-id argmax over real tags of `Σ_f w[f]`.
fn best_class<'a>(weights: impl Fn(&str) -> Option<&'a [f64]>, feats: &[String]) -> u8 {
    let mut scores = [0.0f64; NUM_TAG_IDS];
    for f in feats {
        if let Some(w) = weights(f) {
            for (s, &x) in scores.iter_mut().zip(w) {
                *s += x;
            }
        }
    }
    let mut best = 1;
    for c in 2..NUM_TAG_IDS {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best as u8
}

/// Trains a tagger: greedy left-to-right decoding, updates on mistakes, and
/// final weights equal to the running average over every training step.
/// The sentence order of each epoch is shuffled from `seed`.
pub fn train_tagger(corpus: &[TaggedSentence], epochs: usize, seed: u64) -> Result<PerceptronTagger> {
    if corpus.is_empty() {
        return Err(Error::Data("tagger training corpus is empty".into()));
    }
    for s in corpus {
        TaggedSentence::new(s.tokens.clone(), s.tags.clone())?;
    }
    let dictionary = build_dictionary(corpus);
    let mut acc: HashMap<String, Accumulator> = HashMap::new();
    let mut now: u64 = 0;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &si in &order {
            let sent = &corpus[si];
            let (mut prev, mut prev2) = (START.to_string(), START2.to_string());
            for i in 0..sent.tokens.len() {
                let truth = sent.tags[i];
                let fixed = TagSet::punctuation_tag(&sent.tokens[i]).or_else(|| dictionary.get(&sent.tokens[i]).copied());
                let guess = if let Some(p) = fixed {
                    p
                } else {
                    let feats = features(&sent.tokens, i, &prev, &prev2);
                    let guess = best_class(|f| acc.get(f).map(|a| a.weights.as_slice()), &feats);
                    now += 1;
                    if guess != truth {
                        for f in feats {
                            let a = acc.entry(f).or_insert_with(Accumulator::new);
                            a.bump(usize::from(truth), 1.0, now);
                            a.bump(usize::from(guess), -1.0, now);
                        }
                    }
                    guess
                };
                prev2 = std::mem::replace(&mut prev, TagSet::name(guess).to_string());
            }
        }
    }

    let steps = now.max(1) as f64;
    let weights = acc
        .into_iter()
        .filter_map(|(feat, mut a)| {
            for c in 0..NUM_TAG_IDS {
                a.bump(c, 0.0, now);
            }
            let avg: Vec<f64> = a.totals.iter().map(|t| t / steps).collect();
            avg.iter().any(|&x| x != 0.0).then_some((feat, avg))
        })
        .collect();
    Ok(PerceptronTagger { weights, dictionary })
}

impl PerceptronTagger {
    pub fn tag(&self, tokens: &[String]) -> TaggedSentence {
        let mut tags = Vec::with_capacity(tokens.len());
        let (mut prev, mut prev2) = (START.to_string(), START2.to_string());
        for i in 0..tokens.len() {
            let fixed = TagSet::punctuation_tag(&tokens[i]).or_else(|| self.dictionary.get(&tokens[i]).copied());
            let t = fixed.unwrap_or_else(|| {
                let feats = features(tokens, i, &prev, &prev2);
                best_class(|f| self.weights.get(f).map(Vec::as_slice), &feats)
            });
            tags.push(t);
            prev2 = std::mem::replace(&mut prev, TagSet::name(t).to_string());
        }
        TaggedSentence {
            tokens: tokens.to_vec(),
            tags,
        }
    }

    /// Fraction of tokens whose predicted tag matches the reference.
    pub fn accuracy(&self, gold: &[TaggedSentence]) -> f64 {
        let (mut right, mut total) = (0usize, 0usize);
        for s in gold {
            let pred = self.tag(&s.tokens);
            right += pred.tags.iter().zip(&s.tags).filter(|(a, b)| a == b).count();
            total += s.tags.len();
        }
        if total == 0 {
            return 0.0;
        }
        right as f64 / total as f64
    }

    pub fn num_features(&self) -> usize {
        self.weights.len()
    }
}

/// Hand-tagged English mini-corpus bundled with the crate.
pub const BUNDLED_CORPUS: &str = include_str!("../../data/tagged_mini.txt");

pub fn bundled_corpus() -> Vec<TaggedSentence> {
    super::formats::parse_tagged(BUNDLED_CORPUS, "tagged_mini.txt").expect("bundled corpus is well-formed")
}

/// Deterministic split of the bundled corpus: every tenth sentence is held out.
pub fn bundled_split() -> (Vec<TaggedSentence>, Vec<TaggedSentence>) {
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for (i, s) in bundled_corpus().into_iter().enumerate() {
        if i % 10 == 9 {
            held_out.push(s);
        } else {
            train.push(s);
        }
    }
    (train, held_out)
}

pub const DEFAULT_TAGGER_EPOCHS: usize = 8;
pub const DEFAULT_TAGGER_SEED: u64 = 1;

/// Tagger trained on the whole bundled corpus with default settings.
pub fn default_tagger() -> PerceptronTagger {
    train_tagger(&bundled_corpus(), DEFAULT_TAGGER_EPOCHS, DEFAULT_TAGGER_SEED)
        .expect("bundled corpus trains")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(pairs: &[(&str, &str)]) -> TaggedSentence {
        TaggedSentence::from_pairs(pairs).unwrap()
    }

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn held_out_accuracy_on_bundled_corpus() {
        let (train, held) = bundled_split();
        let t = train_tagger(&train, DEFAULT_TAGGER_EPOCHS, DEFAULT_TAGGER_SEED).unwrap();
        let acc = t.accuracy(&held);
        println!("held-out accuracy {acc:.4}");
        assert!(acc >= 0.90, "held-out accuracy {acc}");
    }

    #[test]
    fn separable_word_is_learned_in_one_epoch() {
        let corpus = vec![
            sent(&[("the", "DT"), ("dog", "NN"), ("runs", "VBZ")]),
            sent(&[("the", "DT"), ("cat", "NN"), ("sleeps", "VBZ")]),
        ];
        let tagger = train_tagger(&corpus, 1, 3).unwrap();
        assert_eq!(tagger.tag(&toks(&["the"])).tags, vec![TagSet::id("DT").unwrap()]);
    }

    #[test]
    fn punctuation_bypasses_the_model() {
        let corpus = vec![sent(&[("word", "NN")])];
        let tagger = train_tagger(&corpus, 2, 0).unwrap();
        assert_eq!(tagger.tag(&toks(&["."])).tags, vec![TagSet::id(".").unwrap()]);
        for p in [",", ":", ";", "?", "!", ".", "$", "(", ")", "``", "''"] {
            assert_eq!(tagger.tag(&toks(&["x", p])).tags[1], TagSet::id(p).unwrap());
        }
    }

    #[test]
    fn empty_input_gives_empty_sentence() {
        let tagger = train_tagger(&[sent(&[("a", "DT")])], 1, 0).unwrap();
        assert!(tagger.tag(&[]).is_empty());
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let (train, _) = bundled_split();
        let a = train_tagger(&train[..60], 3, 42).unwrap();
        let b = train_tagger(&train[..60], 3, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(train_tagger(&[], 1, 0).is_err());
    }

    #[test]
    fn bundled_corpus_is_large_enough_and_uses_the_inventory() {
        let corpus = bundled_corpus();
        let tokens: usize = corpus.iter().map(TaggedSentence::len).sum();
        assert!(tokens >= 5000, "only {tokens} tokens");
    }

    #[test]
    fn trained_tagger_tags_simple_phrase() {
        let tagger = default_tagger();
        let got = tagger.tag(&toks(&["the", "cat"])).tags;
        assert_eq!(got, vec![TagSet::id("DT").unwrap(), TagSet::id("NN").unwrap()]);
    }
}

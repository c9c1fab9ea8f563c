//! Seeded random documents and models used by diagnostics and checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ModelConfig, ModelParams};
use crate::textpipe::{TensorizedDocument, NUM_TAG_IDS};

/// Vocabulary size of the gradient-check fixture.
pub const TINY_VOCAB: usize = 20;

/// A grid with `real_sentences` random sentences of 1 to `words_per_sentence`
/// tokens; word ids avoid PAD, tag ids cover the real tags.
pub fn random_document<R: Rng>(
    rng: &mut R,
    cfg: &ModelConfig,
    vocab_size: usize,
    real_sentences: usize,
    label: usize,
) -> TensorizedDocument {
    let (s, w) = (cfg.sentences_per_doc, cfg.words_per_sentence);
    assert!((1..=s).contains(&real_sentences), "1 ≤ real sentences ≤ sentences_per_doc");
    let mut word_ids = vec![0u32; s * w];
    let mut tag_ids = vec![0u8; s * w];
    let mut sentence_mask = vec![false; s];
    for i in 0..real_sentences {
        sentence_mask[i] = true;
        let len = rng.random_range(1..=w);
        for j in 0..len {
            word_ids[i * w + j] = rng.random_range(1..vocab_size.max(2)) as u32;
            tag_ids[i * w + j] = rng.random_range(1..NUM_TAG_IDS) as u8;
        }
    }
    TensorizedDocument {
        sentences_per_doc: s,
        words_per_sentence: w,
        word_ids,
        tag_ids,
        sentence_mask,
        label,
    }
}

/// Copy of `doc` laid out on a grid with more sentence rows, all padding.
pub fn with_pad_sentences(doc: &TensorizedDocument, sentences_per_doc: usize) -> TensorizedDocument {
    assert!(sentences_per_doc >= doc.sentences_per_doc);
    let extra = (sentences_per_doc - doc.sentences_per_doc) * doc.words_per_sentence;
    let mut out = doc.clone();
    out.sentences_per_doc = sentences_per_doc;
    out.word_ids.extend(std::iter::repeat_n(0, extra));
    out.tag_ids.extend(std::iter::repeat_n(0, extra));
    out.sentence_mask.resize(sentences_per_doc, false);
    out
}

/// Tiny style-mode model and a two-document batch (one per class) for
/// gradient checks.
pub fn tiny_fixture(seed: u64) -> Result<(ModelParams<f32>, Vec<TensorizedDocument>)> {
    let cfg = ModelConfig::tiny();
    let params = ModelParams::init(&cfg, TINY_VOCAB, seed, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let docs = vec![
        random_document(&mut rng, &cfg, TINY_VOCAB, 3, 0),
        random_document(&mut rng, &cfg, TINY_VOCAB, 2, 1),
    ];
    Ok((params, docs))
}

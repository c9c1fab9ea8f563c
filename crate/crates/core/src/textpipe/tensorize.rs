use serde::{Deserialize, Serialize};

use super::formats::TaggedSentence;
use super::tagset::PAD_TAG;
use super::vocab::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// A document as a `sentences_per_doc × words_per_sentence` grid of word and
/// tag ids. Padding cells hold id 0 in both grids; real sentences come first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorizedDocument {
    pub sentences_per_doc: usize,
    pub words_per_sentence: usize,
    /// Row-major word ids.
    pub word_ids: Vec<u32>,
    /// Row-major tag ids.
    pub tag_ids: Vec<u8>,
    pub sentence_mask: Vec<bool>,
    pub label: usize,
}

impl TensorizedDocument {
    pub fn real_sentences(&self) -> usize {
        self.sentence_mask.iter().take_while(|&&m| m).count()
    }

    pub fn word_row(&self, i: usize) -> &[u32] {
        &self.word_ids[i * self.words_per_sentence..(i + 1) * self.words_per_sentence]
    }

    pub fn tag_row(&self, i: usize) -> &[u8] {
        &self.tag_ids[i * self.words_per_sentence..(i + 1) * self.words_per_sentence]
    }
}

/// Lays a tagged document out on the grid given by `cfg`: sentences and
/// tokens past the grid are truncated, the rest padded, and words missing
/// from `vocab` become `UNK`. Empty sentences are dropped first.
pub fn tensorize(
    doc: &[TaggedSentence],
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    label: usize,
) -> Result<TensorizedDocument> {
    let (s, w) = (cfg.sentences_per_doc, cfg.words_per_sentence);
    if s == 0 {
        return Err(Error::Config("sentences_per_doc must be at least 1".into()));
    }
    if w < cfg.max_receptive_field() || w == 0 {
        return Err(Error::Config(format!(
            "words_per_sentence {w} is smaller than the largest receptive field {}",
            cfg.max_receptive_field()
        )));
    }
    let real: Vec<&TaggedSentence> = doc.iter().filter(|s| !s.is_empty()).collect();
    if real.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let mut word_ids = vec![PAD_ID; s * w];
    let mut tag_ids = vec![PAD_TAG; s * w];
    let mut sentence_mask = vec![false; s];
    for (i, sent) in real.iter().take(s).enumerate() {
        sentence_mask[i] = true;
        for (j, (tok, &tag)) in sent.tokens.iter().zip(&sent.tags).take(w).enumerate() {
            word_ids[i * w + j] = vocab.id(tok);
            tag_ids[i * w + j] = tag;
        }
    }
    Ok(TensorizedDocument {
        sentences_per_doc: s,
        words_per_sentence: w,
        word_ids,
        tag_ids,
        sentence_mask,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textpipe::vocab::UNK_ID;
    use crate::textpipe::TagSet;

    fn sent(words: &[&str]) -> TaggedSentence {
        let pairs: Vec<(&str, &str)> = words.iter().map(|w| (*w, "NN")).collect();
        TaggedSentence::from_pairs(&pairs).unwrap()
    }

    fn cfg(s: usize, w: usize) -> ModelConfig {
        let mut c = ModelConfig::tiny();
        c.sentences_per_doc = s;
        c.words_per_sentence = w;
        c.receptive_fields = vec![2];
        c
    }

    #[test]
    fn pads_missing_sentences() {
        let vocab = Vocabulary::build(["a", "b"], 10);
        let doc = vec![sent(&["a"]), sent(&["b", "a"])];
        let t = tensorize(&doc, &vocab, &cfg(3, 4), 1).unwrap();
        assert_eq!(t.sentence_mask, vec![true, true, false]);
        assert!(t.word_row(2).iter().all(|&x| x == PAD_ID));
        assert!(t.tag_row(2).iter().all(|&x| x == PAD_TAG));
        assert_eq!(t.word_row(1), &[vocab.id("b"), vocab.id("a"), 0, 0]);
        assert_eq!(t.tag_row(0), &[TagSet::id("NN").unwrap(), 0, 0, 0]);
        assert_eq!(t.label, 1);
        assert_eq!(t.real_sentences(), 2);
    }

    #[test]
    fn truncates_long_sentences_and_documents() {
        let vocab = Vocabulary::build(["a", "b", "c", "d", "e", "f"], 10);
        let long = sent(&["a", "b", "c", "d", "e", "f"]);
        let t = tensorize(&[long.clone()], &vocab, &cfg(1, 4), 0).unwrap();
        let want: Vec<u32> = ["a", "b", "c", "d"].iter().map(|w| vocab.id(w)).collect();
        assert_eq!(t.word_row(0), want.as_slice());
        let t = tensorize(&vec![long; 5], &vocab, &cfg(3, 4), 0).unwrap();
        assert_eq!(t.sentence_mask, vec![true; 3]);
    }

    #[test]
    fn unknown_words_map_to_unk_and_lookup_lowercases() {
        let vocab = Vocabulary::build(["the"], 10);
        let t = tensorize(&[sent(&["The", "zebra"])], &vocab, &cfg(1, 2), 0).unwrap();
        assert_eq!(t.word_row(0), &[vocab.id("the"), UNK_ID]);
    }

    #[test]
    fn empty_documents_and_narrow_grids_are_rejected() {
        let vocab = Vocabulary::build(["a"], 10);
        assert!(matches!(tensorize(&[], &vocab, &cfg(2, 4), 0), Err(Error::EmptyDocument)));
        assert!(matches!(
            tensorize(&[sent(&[])], &vocab, &cfg(2, 4), 0),
            Err(Error::EmptyDocument)
        ));
        let mut c = cfg(2, 4);
        c.receptive_fields = vec![5];
        assert!(matches!(tensorize(&[sent(&["a"])], &vocab, &c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn empty_sentences_are_skipped_before_layout() {
        let vocab = Vocabulary::build(["a"], 10);
        let t = tensorize(&[sent(&[]), sent(&["a"])], &vocab, &cfg(2, 2), 0).unwrap();
        assert_eq!(t.sentence_mask, vec![true, false]);
    }

    #[test]
    fn mask_count_is_min_of_sentences_and_grid() {
        let vocab = Vocabulary::build(["a"], 10);
        for n in 1..6 {
            let doc = vec![sent(&["a"]); n];
            let t = tensorize(&doc, &vocab, &cfg(3, 2), 0).unwrap();
            assert_eq!(t.sentence_mask.iter().filter(|&&m| m).count(), n.min(3));
            assert_eq!(t, tensorize(&doc, &vocab, &cfg(3, 2), 0).unwrap());
        }
    }
}

//! Raw text to fixed-shape id grids: sentence splitting, tokenization,
//! part-of-speech tagging, vocabulary construction and tensorization.

pub mod formats;
pub mod tagger;
pub mod tagset;
pub mod tensorize;
pub mod tokenize;
pub mod vocab;

pub use formats::{RawDocument, TaggedSentence};
pub use tagger::{train_tagger, PerceptronTagger};
pub use tagset::{TagSet, NUM_TAG_IDS, PAD_TAG};
pub use tensorize::{tensorize, TensorizedDocument};
pub use tokenize::{split_sentences, tokenize};
pub use vocab::{Vocabulary, PAD_ID, UNK_ID};

/// Splits, tokenizes and tags a raw document.
pub fn tag_document(tagger: &PerceptronTagger, text: &str) -> Vec<TaggedSentence> {
    split_sentences(text)
        .iter()
        .map(|s| tagger.tag(&tokenize(s)))
        .filter(|s| !s.is_empty())
        .collect()
}

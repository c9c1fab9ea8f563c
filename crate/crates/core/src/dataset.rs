//! Author-labelled tagged documents, from raw text, pre-tagged files or a
//! synthetic corpus, and their per-run vocabulary and tensorization.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::synth::SynthCorpus;
use crate::textpipe::formats::{load_dataset, read_tagged_documents};
use crate::textpipe::{tag_document, tensorize, PerceptronTagger, RawDocument, TaggedSentence, TensorizedDocument, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    /// Index into [`Dataset::authors`].
    pub label: usize,
    pub sentences: Vec<TaggedSentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Author names, sorted; a document's label is its author's position.
    pub authors: Vec<String>,
    pub docs: Vec<LabeledDocument>,
}

impl Dataset {
    /// Builds from `(author, sentences)` pairs. Documents without a
    /// non-empty sentence are dropped with a warning.
    pub fn from_pairs(pairs: Vec<(String, Vec<TaggedSentence>)>) -> Self {
        let mut authors: Vec<String> = pairs.iter().map(|(a, _)| a.clone()).collect();
        authors.sort();
        authors.dedup();
        Self::with_authors(authors, pairs).expect("every author is listed")
    }

    /// Like [`Dataset::from_pairs`] but with a fixed author list, as for a
    /// test set labelled consistently with a training set.
    pub fn with_authors(authors: Vec<String>, pairs: Vec<(String, Vec<TaggedSentence>)>) -> Result<Self> {
        let mut docs = Vec::with_capacity(pairs.len());
        let mut dropped = 0;
        for (author, sentences) in pairs {
            let label = authors
                .iter()
                .position(|a| *a == author)
                .ok_or_else(|| Error::Data(format!("author {author:?} is not among the known authors")))?;
            if sentences.iter().all(TaggedSentence::is_empty) {
                dropped += 1;
                continue;
            }
            docs.push(LabeledDocument { label, sentences });
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} document(s) without any tokens");
        }
        Ok(Self { authors, docs })
    }

    /// Tags raw documents with `tagger`, in parallel.
    pub fn tag_raw(raw: &[RawDocument], tagger: &PerceptronTagger) -> Vec<(String, Vec<TaggedSentence>)> {
        raw.par_iter()
            .map(|d| (d.author.clone(), tag_document(tagger, &d.text)))
            .collect()
    }

    /// Pairs raw documents with pre-tagged ones given in the same order.
    pub fn zip_tagged(raw: &[RawDocument], tagged: Vec<Vec<TaggedSentence>>) -> Result<Vec<(String, Vec<TaggedSentence>)>> {
        if raw.len() != tagged.len() {
            return Err(Error::Data(format!(
                "{} raw documents but {} pre-tagged documents",
                raw.len(),
                tagged.len()
            )));
        }
        Ok(raw.iter().map(|d| d.author.clone()).zip(tagged).collect())
    }

    /// Loads a dataset path; tags come from `tagged` when given, otherwise
    /// from the tagger built on demand.
    pub fn load_pairs(
        data: &Path,
        tagged: Option<&Path>,
        tagger: impl FnOnce() -> PerceptronTagger,
    ) -> Result<Vec<(String, Vec<TaggedSentence>)>> {
        let raw = load_dataset(data)?;
        match tagged {
            Some(path) => Self::zip_tagged(&raw, read_tagged_documents(path)?),
            None => Ok(Self::tag_raw(&raw, &tagger())),
        }
    }

    pub fn from_synth(corpus: &SynthCorpus) -> Self {
        Self::from_pairs(
            corpus
                .documents
                .iter()
                .map(|d| (d.author.clone(), d.sentences.clone()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.authors.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.docs.iter().map(|d| d.label).collect()
    }

    /// Vocabulary over the tokens of the selected documents.
    pub fn vocabulary(&self, indices: &[usize], limit: usize) -> Vocabulary {
        Vocabulary::build(
            indices
                .iter()
                .flat_map(|&i| self.docs[i].sentences.iter())
                .flat_map(|s| s.tokens.iter()),
            limit,
        )
    }

    pub fn tensorize(&self, indices: &[usize], vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Vec<TensorizedDocument>> {
        indices
            .iter()
            .map(|&i| tensorize(&self.docs[i].sentences, vocab, cfg, self.docs[i].label))
            .collect()
    }

    pub fn tensorize_all(&self, vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Vec<TensorizedDocument>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.tensorize(&all, vocab, cfg)
    }
}

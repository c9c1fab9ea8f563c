//! Seeded synthetic multi-author corpora with controllable lexical and
//! syntactic style signals.
//!
//! Every author draws sentences from a shared pool of POS-tag templates and
//! fills each slot with a word from a per-tag lexicon. Authors differ only in
//! the weights they put on templates (syntactic signal) and on the words of
//! each lexicon (lexical signal).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textpipe::formats::{write_jsonl, write_tagged_documents};
use crate::textpipe::{PerceptronTagger, RawDocument, TagSet, TaggedSentence};

/// Which style signal separates the authors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    LexicalOnly,
    SyntaxOnly,
    Dual,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::LexicalOnly => "lexical-only",
            Signal::SyntaxOnly => "syntax-only",
            Signal::Dual => "dual",
        }
    }

    fn lexical(self) -> bool {
        matches!(self, Signal::LexicalOnly | Signal::Dual)
    }

    fn syntactic(self) -> bool {
        matches!(self, Signal::SyntaxOnly | Signal::Dual)
    }
}

impl std::fmt::Display for Signal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexical-only" | "lexical" => Ok(Signal::LexicalOnly),
            "syntax-only" | "syntax" | "syntactic" => Ok(Signal::SyntaxOnly),
            "dual" => Ok(Signal::Dual),
            other => Err(Error::Config(format!(
                "unknown signal {other:?} (expected lexical-only, syntax-only or dual)"
            ))),
        }
    }
}

/// A POS-tag sequence with its sampling weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub tags: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub id: String,
    pub templates: Vec<Template>,
    /// Per tag, the candidate words and this author's weight for each.
    pub lexicons: BTreeMap<String, Vec<(String, f64)>>,
    /// Inclusive bounds of the uniform number of sentences per document.
    pub sentences_per_doc: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub authors: Vec<AuthorProfile>,
    pub docs_per_author: usize,
    pub seed: u64,
    pub signal: Signal,
}

/// Knobs of the procedurally generated default spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub authors: usize,
    pub docs_per_author: usize,
    pub seed: u64,
    pub signal: Signal,
    pub sentences_per_doc: (usize, usize),
    /// Inclusive bounds on template length, final punctuation included.
    pub tokens_per_sentence: (usize, usize),
    pub templates: usize,
    /// Extra weight multiplier on an author's favoured templates.
    pub template_boost: f64,
    /// Extra weight multiplier on an author's favoured words.
    pub word_boost: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            authors: 4,
            docs_per_author: 50,
            seed: 0,
            signal: Signal::Dual,
            sentences_per_doc: (8, 16),
            tokens_per_sentence: (6, 12),
            templates: 48,
            template_boost: 8.0,
            word_boost: 2.0,
        }
    }
}

const LEXICON: &[(&str, &[&str])] = &[
    ("DT", &["the", "a", "this", "that", "every", "each", "some", "another", "no", "any"]),
    ("PRP$", &["his", "her", "their", "our", "my", "its", "your"]),
    ("PRP", &["he", "she", "they", "we", "it", "you"]),
    ("NNP", &["paris", "mara", "jonas", "lisbon", "helen", "oscar", "kenya", "ruth", "milan", "victor", "nora", "oslo"]),
    ("CD", &["two", "three", "four", "five", "six", "seven", "ten", "twelve"]),
    (
        "JJ",
        &[
            "quiet", "bright", "old", "young", "careful", "sudden", "narrow", "heavy", "gentle", "strange", "early",
            "silent", "rapid", "distant", "honest", "pale", "small", "large", "green", "cold", "warm", "brief",
        ],
    ),
    (
        "NN",
        &[
            "river", "house", "market", "letter", "garden", "engine", "teacher", "window", "village", "report",
            "bridge", "story", "doctor", "station", "forest", "painter", "harbor", "meeting", "machine", "kitchen",
            "lantern", "council", "orchard", "journey",
        ],
    ),
    (
        "NNS",
        &[
            "rivers", "houses", "markets", "letters", "gardens", "engines", "teachers", "windows", "villages",
            "reports", "bridges", "stories", "doctors", "stations", "forests", "painters", "ships", "songs",
        ],
    ),
    (
        "VBD",
        &[
            "opened", "found", "carried", "watched", "built", "followed", "painted", "crossed", "repaired", "visited",
            "described", "closed", "noticed", "signed", "answered", "moved", "measured", "lifted", "sold", "wrote",
        ],
    ),
    (
        "VBZ",
        &[
            "opens", "finds", "carries", "watches", "builds", "follows", "paints", "crosses", "repairs", "visits",
            "describes", "closes", "notices", "signs", "answers", "moves",
        ],
    ),
    (
        "VB",
        &[
            "open", "find", "carry", "watch", "build", "follow", "paint", "cross", "repair", "visit", "describe",
            "close", "notice", "sign", "answer", "move",
        ],
    ),
    (
        "VBG",
        &[
            "opening", "finding", "carrying", "watching", "building", "following", "painting", "crossing",
            "repairing", "visiting", "describing", "closing",
        ],
    ),
    ("MD", &["can", "could", "will", "would", "should", "might", "must", "may"]),
    (
        "RB",
        &[
            "slowly", "quickly", "rarely", "often", "quietly", "suddenly", "carefully", "always", "never", "soon",
            "still", "finally", "gladly", "openly",
        ],
    ),
    ("IN", &["in", "near", "with", "from", "under", "behind", "during", "after", "before", "across", "without", "beside"]),
    ("CC", &["and", "but", "or", "yet"]),
    ("TO", &["to"]),
    (",", &[","]),
    (".", &["."]),
];

/// Per-document seed derived from the corpus seed and the document position.
fn document_seed(seed: u64, author: usize, doc: usize) -> u64 {
    let mut x = seed ^ (author as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (doc as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn noun_phrase<R: Rng>(rng: &mut R, out: &mut Vec<&'static str>, subject: bool) {
    match rng.random_range(0..if subject { 6 } else { 5 }) {
        0 => out.extend(["DT", "NN"]),
        1 => out.extend(["DT", "JJ", "NN"]),
        2 => out.extend(["PRP$", "NN"]),
        3 => out.extend(["CD", "NNS"]),
        4 => out.push("NNP"),
        _ => out.push("PRP"),
    }
}

fn verb_phrase<R: Rng>(rng: &mut R, out: &mut Vec<&'static str>) {
    match rng.random_range(0..6) {
        0 => {
            out.push("VBD");
            noun_phrase(rng, out, false);
        }
        1 => {
            out.push("VBZ");
            noun_phrase(rng, out, false);
        }
        2 => {
            out.extend(["MD", "VB"]);
            noun_phrase(rng, out, false);
        }
        3 => out.extend(["VBD", "RB"]),
        4 => {
            out.extend(["VBD", "TO", "VB"]);
            noun_phrase(rng, out, false);
        }
        _ => {
            out.extend(["RB", "VBZ"]);
            noun_phrase(rng, out, false);
        }
    }
}

fn clause<R: Rng>(rng: &mut R, out: &mut Vec<&'static str>) {
    noun_phrase(rng, out, true);
    verb_phrase(rng, out);
    if rng.random_bool(0.4) {
        out.push("IN");
        noun_phrase(rng, out, false);
    }
}

fn random_template<R: Rng>(rng: &mut R) -> Vec<&'static str> {
    let mut t = Vec::new();
    match rng.random_range(0..5) {
        0 => {
            out_clause_pair(rng, &mut t);
        }
        1 => {
            t.extend(["RB", ","]);
            clause(rng, &mut t);
        }
        2 => {
            t.push("IN");
            noun_phrase(rng, &mut t, false);
            t.push(",");
            clause(rng, &mut t);
        }
        3 => {
            clause(rng, &mut t);
            t.extend(["VBG"]);
            noun_phrase(rng, &mut t, false);
        }
        _ => clause(rng, &mut t),
    }
    t.push(".");
    t
}

fn out_clause_pair<R: Rng>(rng: &mut R, t: &mut Vec<&'static str>) {
    clause(rng, t);
    t.extend([",", "CC"]);
    clause(rng, t);
}

/// Splits `n` items into `groups` contiguous blocks after a seeded shuffle;
/// block `g` is the favoured set of author `g`.
fn favoured<R: Rng>(rng: &mut R, n: usize, groups: usize) -> Vec<Vec<bool>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = vec![vec![false; n]; groups];
    for (pos, &i) in idx.iter().enumerate() {
        out[pos * groups / n.max(1)][i] = true;
    }
    out
}

impl SynthSpec {
    /// Procedural spec: one shared template pool and lexicon, with author
    /// preferences switched on only for the requested signal.
    pub fn generate(opts: &SynthOptions) -> Result<Self> {
        if opts.authors < 2 {
            return Err(Error::Config("synthetic corpora need at least 2 authors".into()));
        }
        let (lo, hi) = opts.tokens_per_sentence;
        if lo < 3 || lo > hi {
            return Err(Error::Config(format!("invalid tokens_per_sentence range {lo}..={hi}")));
        }
        if opts.templates == 0 || !(opts.template_boost >= 0.0) || !(opts.word_boost >= 0.0) {
            return Err(Error::Config("templates must be positive and boosts non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut pool: Vec<Vec<&'static str>> = Vec::new();
        let mut attempts = 0;
        while pool.len() < opts.templates {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::Config(format!(
                    "could not draw {} distinct templates of length {lo}..={hi}",
                    opts.templates
                )));
            }
            let t = random_template(&mut rng);
            if (lo..=hi).contains(&t.len()) && !pool.contains(&t) {
                pool.push(t);
            }
        }
        let template_fav = favoured(&mut rng, pool.len(), opts.authors);
        let word_fav: BTreeMap<&str, Vec<Vec<bool>>> = LEXICON
            .iter()
            .map(|&(tag, words)| (tag, favoured(&mut rng, words.len(), opts.authors)))
            .collect();

        let authors = (0..opts.authors)
            .map(|a| {
                let templates = pool
                    .iter()
                    .enumerate()
                    .map(|(i, t)| Template {
                        tags: t.iter().map(|s| s.to_string()).collect(),
                        weight: if opts.signal.syntactic() && template_fav[a][i] {
                            1.0 + opts.template_boost
                        } else {
                            1.0
                        },
                    })
                    .collect();
                let lexicons = LEXICON
                    .iter()
                    .map(|&(tag, words)| {
                        let fav = &word_fav[tag][a];
                        let entries = words
                            .iter()
                            .enumerate()
                            .map(|(i, w)| {
                                let boosted = opts.signal.lexical() && words.len() > 1 && fav[i];
                                (w.to_string(), if boosted { 1.0 + opts.word_boost } else { 1.0 })
                            })
                            .collect();
                        (tag.to_string(), entries)
                    })
                    .collect();
                AuthorProfile {
                    id: format!("author{:02}", a + 1),
                    templates,
                    lexicons,
                    sentences_per_doc: opts.sentences_per_doc,
                }
            })
            .collect();
        let spec = SynthSpec {
            authors,
            docs_per_author: opts.docs_per_author,
            seed: opts.seed,
            signal: opts.signal,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks profile invariants and the constraint implied by the signal.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.authors.len() < 2 {
            return fail("synthetic corpora need at least 2 authors".into());
        }
        if self.docs_per_author == 0 {
            return fail("docs_per_author must be at least 1".into());
        }
        for a in &self.authors {
            let (lo, hi) = a.sentences_per_doc;
            if lo == 0 || lo > hi {
                return fail(format!("{}: invalid sentences_per_doc range {lo}..={hi}", a.id));
            }
            if a.templates.is_empty() {
                return fail(format!("{}: no templates", a.id));
            }
            for t in &a.templates {
                if !(t.weight > 0.0) || !t.weight.is_finite() || t.tags.is_empty() {
                    return fail(format!("{}: templates need positive weights and at least one tag", a.id));
                }
                for tag in &t.tags {
                    TagSet::id(tag).ok_or_else(|| Error::UnknownTag(tag.clone()))?;
                    match a.lexicons.get(tag) {
                        Some(words) if !words.is_empty() => {}
                        _ => return fail(format!("{}: template tag {tag} has no lexicon", a.id)),
                    }
                }
            }
            for (tag, words) in &a.lexicons {
                if words.iter().any(|(w, x)| !(*x > 0.0) || !x.is_finite() || w.is_empty() || w.contains(char::is_whitespace)) {
                    return fail(format!("{}: lexicon {tag} needs positive weights and single-token words", a.id));
                }
            }
        }
        let first = &self.authors[0];
        match self.signal {
            Signal::SyntaxOnly if self.authors.iter().any(|a| a.lexicons != first.lexicons) => {
                fail("syntax-only corpora require identical lexicons across authors".into())
            }
            Signal::LexicalOnly if self.authors.iter().any(|a| a.templates != first.templates) => {
                fail("lexical-only corpora require identical templates across authors".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDocument {
    pub author: String,
    pub sentences: Vec<TaggedSentence>,
}

impl SynthDocument {
    /// Raw text that tokenizes back into the generated tokens.
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| {
                let mut line = String::new();
                for (i, tok) in s.tokens.iter().enumerate() {
                    let attach = TagSet::punctuation_tag(tok).is_some() && tok != "$" && tok != "(";
                    if i > 0 && !attach {
                        line.push(' ');
                    }
                    line.push_str(tok);
                }
                line
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<SynthDocument>,
}

impl SynthCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn raw(&self) -> Vec<RawDocument> {
        self.documents
            .iter()
            .map(|d| RawDocument {
                author: d.author.clone(),
                text: d.text(),
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        write_jsonl(&self.raw())
    }

    /// Pre-tagged documents in the same order as the JSON lines.
    pub fn to_tagged(&self) -> String {
        let docs: Vec<Vec<TaggedSentence>> = self.documents.iter().map(|d| d.sentences.clone()).collect();
        write_tagged_documents(&docs)
    }

    /// Replaces the ground-truth tags with the tagger's output.
    pub fn retagged(&self, tagger: &PerceptronTagger) -> Self {
        let documents = self
            .documents
            .par_iter()
            .map(|d| SynthDocument {
                author: d.author.clone(),
                sentences: d.sentences.iter().map(|s| tagger.tag(&s.tokens)).collect(),
            })
            .collect();
        Self { documents }
    }

    pub fn write(&self, jsonl: &Path, tagged: &Path) -> Result<()> {
        fs::write(jsonl, self.to_jsonl()).map_err(|e| Error::io(jsonl, e))?;
        fs::write(tagged, self.to_tagged()).map_err(|e| Error::io(tagged, e))
    }
}

fn weighted<T>(items: &[T], weight: impl Fn(&T) -> f64) -> WeightedIndex<f64> {
    WeightedIndex::new(items.iter().map(weight)).expect("validated weights")
}

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates `docs_per_author` documents per author, author by author.
/// Each document has its own seed derived from the spec seed, so documents
/// are generated in parallel without changing the output.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let samplers: Vec<_> = spec
        .authors
        .iter()
        .map(|a| {
            let templates = weighted(&a.templates, |t| t.weight);
            let words: BTreeMap<&str, WeightedIndex<f64>> = a
                .lexicons
                .iter()
                .map(|(tag, ws)| (tag.as_str(), weighted(ws, |w| w.1)))
                .collect();
            (templates, words)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..spec.authors.len())
        .flat_map(|a| (0..spec.docs_per_author).map(move |d| (a, d)))
        .collect();
    let documents = jobs
        .par_iter()
        .map(|&(a, d)| {
            let author = &spec.authors[a];
            let (templates, words) = &samplers[a];
            let mut rng = ChaCha8Rng::seed_from_u64(document_seed(spec.seed, a, d));
            let (lo, hi) = author.sentences_per_doc;
            let n = rng.random_range(lo..=hi);
            let sentences = (0..n)
                .map(|_| {
                    let t = &author.templates[templates.sample(&mut rng)];
                    let mut pairs: Vec<(String, &str)> = t
                        .tags
                        .iter()
                        .map(|tag| {
                            let lex = &author.lexicons[tag];
                            (lex[words[tag.as_str()].sample(&mut rng)].0.clone(), tag.as_str())
                        })
                        .collect();
                    pairs[0].0 = capitalize(&pairs[0].0);
                    TaggedSentence::from_pairs(&pairs)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SynthDocument {
                author: author.id.clone(),
                sentences,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthCorpus { documents })
}

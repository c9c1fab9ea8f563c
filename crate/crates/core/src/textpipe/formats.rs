//! On-disk formats: pre-tagged text and raw datasets.
//!
//! Pre-tagged text is UTF-8 with one sentence per line and tokens written as
//! `token_TAG` separated by single spaces; an underscore inside a token is
//! escaped as `\_`. A multi-document file separates documents with a blank
//! line.
//!
//! Raw datasets are JSON lines (`{"author": ..., "text": ...}`) or a directory
//! holding one subdirectory of `.txt` files per author.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tagset::TagSet;
use crate::error::{Error, Result};

/// Tokens with one tag id each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<u8>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, tags: Vec<u8>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::Data(format!(
                "tagged sentence has {} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t == 0 || usize::from(t) >= TagSet::standard().num_ids()) {
            return Err(Error::UnknownTag(format!("id {bad}")));
        }
        Ok(Self { tokens, tags })
    }

    /// Builds from `(token, tag string)` pairs, rejecting tags outside the inventory.
    pub fn from_pairs<S: AsRef<str>, T: AsRef<str>>(pairs: &[(S, T)]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(pairs.len());
        let mut tags = Vec::with_capacity(pairs.len());
        for (tok, tag) in pairs {
            let id = TagSet::id(tag.as_ref()).ok_or_else(|| Error::UnknownTag(tag.as_ref().to_string()))?;
            tokens.push(tok.as_ref().to_string());
            tags.push(id);
        }
        Ok(Self { tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_line(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.tags)
            .map(|(tok, &tag)| format!("{}_{}", tok.replace('_', "\\_"), TagSet::name(tag)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Parses one `token_TAG` line. `line_no` is 1-based and only used in errors.
pub fn parse_tagged_line(line: &str, source: &str, line_no: usize) -> Result<TaggedSentence> {
    let mut pairs = Vec::new();
    for item in line.split(' ').filter(|s| !s.is_empty()) {
        let (tok, tag) = item
            .rsplit_once('_')
            .ok_or_else(|| Error::format(source, line_no, format!("token {item:?} has no _TAG suffix")))?;
        if tok.is_empty() {
            return Err(Error::format(source, line_no, format!("empty token in {item:?}")));
        }
        if TagSet::id(tag).is_none() {
            return Err(Error::UnknownTag(tag.to_string()));
        }
        pairs.push((tok.replace("\\_", "_"), tag.to_string()));
    }
    TaggedSentence::from_pairs(&pairs)
}

/// Parses a single-document pre-tagged text (blank lines ignored).
pub fn parse_tagged(text: &str, source: &str) -> Result<Vec<TaggedSentence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_tagged_line(l.trim_end_matches('\r'), source, i + 1))
        .collect()
}

/// Parses a multi-document pre-tagged text where blank lines separate documents.
pub fn parse_tagged_documents(text: &str, source: &str) -> Result<Vec<Vec<TaggedSentence>>> {
    let mut docs = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push(parse_tagged_line(line, source, i + 1)?);
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

pub fn write_tagged_documents(docs: &[Vec<TaggedSentence>]) -> String {
    let mut out = String::new();
    for (i, doc) in docs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for s in doc {
            out.push_str(&s.to_line());
            out.push('\n');
        }
    }
    out
}

pub fn read_tagged_documents(path: &Path) -> Result<Vec<Vec<TaggedSentence>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tagged_documents(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub author: String,
    pub text: String,
}

pub fn parse_jsonl(text: &str, source: &str) -> Result<Vec<RawDocument>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(source, i + 1, e.to_string()))
        })
        .collect()
}

pub fn write_jsonl(docs: &[RawDocument]) -> String {
    docs.iter()
        .map(|d| serde_json::to_string(d).expect("documents serialize") + "\n")
        .collect()
}

/// Loads a JSON-lines file, or a directory of per-author subdirectories of
/// `.txt` files (visited in sorted order).
pub fn load_dataset(path: &Path) -> Result<Vec<RawDocument>> {
    if path.is_dir() {
        let mut authors: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        authors.sort();
        let mut docs = Vec::new();
        for dir in authors {
            let author = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut files: Vec<_> = fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            for f in files {
                let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
                docs.push(RawDocument {
                    author: author.clone(),
                    text,
                });
            }
        }
        Ok(docs)
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_jsonl(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_line_round_trip_with_escaped_underscore() {
        let s = TaggedSentence::from_pairs(&[("snake_case", "NN"), ("is", "VBZ"), (".", ".")]).unwrap();
        let line = s.to_line();
        assert_eq!(line, "snake\\_case_NN is_VBZ ._.");
        assert_eq!(parse_tagged_line(&line, "t", 1).unwrap(), s);
    }

    #[test]
    fn unknown_tag_is_named() {
        let err = parse_tagged_line("dog_NOUN", "t", 1).unwrap_err();
        assert!(matches!(err, Error::UnknownTag(ref t) if t == "NOUN"), "{err}");
        let err = TaggedSentence::from_pairs(&[("x", "XYZ")]).unwrap_err();
        assert!(err.to_string().contains("XYZ"));
    }

    #[test]
    fn missing_tag_reports_line() {
        let err = parse_tagged("a_DT\nbad\n", "f.txt").unwrap_err();
        assert!(err.to_string().starts_with("f.txt:2:"), "{err}");
    }

    #[test]
    fn documents_split_on_blank_lines() {
        let text = "a_DT b_NN\nc_VB\n\nd_NN\n";
        let docs = parse_tagged_documents(text, "t").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].len(), 2);
        assert_eq!(write_tagged_documents(&docs), text);
    }

    #[test]
    fn jsonl_and_directory_datasets() {
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("d.jsonl");
        let docs = vec![
            RawDocument {
                author: "a".into(),
                text: "Hi.".into(),
            },
            RawDocument {
                author: "b".into(),
                text: "Yo!".into(),
            },
        ];
        fs::write(&jsonl, write_jsonl(&docs)).unwrap();
        assert_eq!(load_dataset(&jsonl).unwrap(), docs);

        let root = dir.path().join("corpus");
        for (a, f, t) in [("bob", "2.txt", "two"), ("bob", "1.txt", "one"), ("al", "x.txt", "ex")] {
            fs::create_dir_all(root.join(a)).unwrap();
            fs::write(root.join(a).join(f), t).unwrap();
        }
        fs::write(root.join("bob").join("notes.md"), "skip").unwrap();
        let loaded = load_dataset(&root).unwrap();
        let got: Vec<_> = loaded.iter().map(|d| (d.author.as_str(), d.text.as_str())).collect();
        assert_eq!(got, vec![("al", "ex"), ("bob", "one"), ("bob", "two")]);
    }

    #[test]
    fn bad_jsonl_line_is_reported() {
        let err = parse_jsonl("{\"author\":\"a\",\"text\":\"x\"}\n{oops}\n", "d").unwrap_err();
        assert!(err.to_string().starts_with("d:2:"));
    }
}

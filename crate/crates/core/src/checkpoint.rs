//! Binary checkpoint: `SHAN`, a little-endian `u32` version, a little-endian
//! `u64` header length, a JSON header and the parameter payload as
//! little-endian `f32` values in layout order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::textpipe::tagset::TAGS;
use crate::textpipe::Vocabulary;
use crate::trainer::TrainConfig;

pub const MAGIC: [u8; 4] = *b"SHAN";
pub const VERSION: u32 = 1;
const PREFIX: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset within the payload.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocabulary: Vocabulary,
    tag_set: Vec<String>,
    manifest: Vec<ManifestEntry>,
    /// Class names in label order.
    authors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub train_config: TrainConfig,
    pub vocabulary: Vocabulary,
    pub authors: Vec<String>,
    pub params: ModelParams<f32>,
}

impl Checkpoint {
    pub fn model_config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let manifest = self
            .params
            .named()
            .map(|(name, t)| {
                let e = ManifestEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.numel() as u64;
                e
            })
            .collect();
        let header = Header {
            model_config: self.params.config().clone(),
            train_config: self.train_config.clone(),
            vocabulary: self.vocabulary.clone(),
            tag_set: TAGS.iter().map(|s| s.to_string()).collect(),
            manifest,
            authors: self.authors.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREFIX + json.len() + offset as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: String| Err(Error::Checkpoint(m));
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return fail("bad magic: not a checkpoint file".into());
        }
        if bytes.len() < PREFIX {
            return fail(format!("truncated prefix: expected {PREFIX} bytes, found {}", bytes.len()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return fail(format!("unsupported format version {version} (expected {VERSION})"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = (PREFIX as u64).checked_add(header_len).filter(|&e| e <= bytes.len() as u64);
        let Some(header_end) = header_end else {
            return fail(format!(
                "truncated header: expected {header_len} bytes, found {}",
                bytes.len() - PREFIX
            ));
        };
        let header_end = header_end as usize;
        let header: Header = serde_json::from_slice(&bytes[PREFIX..header_end])
            .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
        if header.tag_set.iter().map(String::as_str).ne(TAGS.iter().copied()) {
            return fail("tag set differs from the built-in inventory".into());
        }
        let vocab_size = header.vocabulary.len();
        let layout = crate::model::Layout::new(&header.model_config, vocab_size);
        if header.manifest.len() != layout.len() {
            return fail(format!(
                "manifest lists {} tensors, the configuration needs {}",
                header.manifest.len(),
                layout.len()
            ));
        }
        let mut expected_offset = 0u64;
        for (i, e) in header.manifest.iter().enumerate() {
            let id = crate::tensor::ParamId(i);
            if e.name != layout.name(id) || e.shape != layout.shape(id) {
                return fail(format!(
                    "manifest entry {i} is {} {:?}, expected {} {:?}",
                    e.name,
                    e.shape,
                    layout.name(id),
                    layout.shape(id)
                ));
            }
            if e.offset != expected_offset {
                return fail(format!("{}: offset {} is not contiguous (expected {expected_offset})", e.name, e.offset));
            }
            expected_offset += 4 * e.shape.iter().product::<usize>() as u64;
        }
        let payload = &bytes[header_end..];
        if payload.len() as u64 != expected_offset {
            let kind = if (payload.len() as u64) < expected_offset { "truncated" } else { "oversized" };
            return fail(format!(
                "{kind} payload: expected {expected_offset} bytes, found {}",
                payload.len()
            ));
        }
        let tensors = header
            .manifest
            .iter()
            .map(|e| {
                let start = e.offset as usize;
                let n: usize = e.shape.iter().product();
                let data = payload[start..start + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                Tensor::new(e.shape.clone(), data).map_err(|err| Error::Checkpoint(format!("{}: {err}", e.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_tensors(&header.model_config, vocab_size, tensors)?;
        if header.authors.len() != header.model_config.num_classes {
            return fail(format!(
                "{} author names for {} classes",
                header.authors.len(),
                header.model_config.num_classes
            ));
        }
        Ok(Self {
            train_config: header.train_config,
            vocabulary: header.vocabulary,
            authors: header.authors,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

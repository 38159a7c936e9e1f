//! Binary parameter file plus JSON sidecars for config and vocabulary.
//!
//! Layout: `JERE`, version `u32`, tensor count `u64`, then per tensor a
//! `u32` name length, UTF-8 name, `u32` rank, `u64` dims and `f32` data,
//! all little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Vocabulary;
use crate::encoder::ModelConfig;
use crate::model::Model;
use crate::ndcore::{ParameterStore, Tensor};

pub const MAGIC: &[u8; 4] = b"JERE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, expected {FORMAT_VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error("truncated checkpoint header")]
    TruncatedHeader,
    #[error("truncated tensor {0:?}")]
    TruncatedTensor(String),
    #[error("tensor name is not UTF-8")]
    InvalidName,
    #[error("trailing bytes after the last tensor")]
    TrailingBytes,
    #[error("{path}: {source}")]
    Sidecar { path: PathBuf, source: serde_json::Error },
    #[error("vocabulary digest mismatch: checkpoint expects {expected}, vocabulary has {found}")]
    VocabDigestMismatch { expected: String, found: String },
    #[error("checkpoint parameters do not fit the model: {0}")]
    ParameterMismatch(String),
    #[error(transparent)]
    Model(#[from] crate::ModelError),
}

/// Training provenance stored beside the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab_digest: String,
    pub epoch: usize,
    pub valid_f1: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterStore<f32>,
    pub vocab: Vocabulary,
    pub meta: CheckpointMeta,
}

/// `model.bin` → `model.bin.meta.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

pub fn encode_params(params: &ParameterStore<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.bytes.len() < n {
            return None;
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParameterStore<f32>, CheckpointError> {
    let mut c = Cursor { bytes };
    if c.take(4).ok_or(CheckpointError::TruncatedHeader)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u32().ok_or(CheckpointError::TruncatedHeader)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let count = c.u64().ok_or(CheckpointError::TruncatedHeader)?;
    let mut store = ParameterStore::new();
    for i in 0..count {
        let unnamed = || CheckpointError::TruncatedTensor(format!("#{i}"));
        let len = c.u32().ok_or_else(unnamed)? as usize;
        let name = c.take(len).ok_or_else(unnamed)?;
        let name = std::str::from_utf8(name).map_err(|_| CheckpointError::InvalidName)?.to_string();
        let truncated = || CheckpointError::TruncatedTensor(name.clone());
        let rank = c.u32().ok_or_else(truncated)? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(usize::try_from(c.u64().ok_or_else(truncated)?).map_err(|_| truncated())?);
        }
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(truncated)?;
        let raw = c.take(numel.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        let tensor = Tensor::new(dims, data).map_err(|_| truncated())?;
        store.insert(name, tensor);
    }
    if !c.bytes.is_empty() {
        return Err(CheckpointError::TrailingBytes);
    }
    Ok(store)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CheckpointError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CheckpointError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CheckpointError::Sidecar { path: path.to_path_buf(), source })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_params(&ckpt.params)).map_err(io_err(path))?;
    write_json(&sidecar(path, ".meta.json"), &ckpt.meta)?;
    write_json(&sidecar(path, ".vocab.json"), &ckpt.vocab)
}

/// Loads and verifies the vocabulary digest and the parameter layout.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    let params = decode_params(&bytes)?;
    let meta: CheckpointMeta = read_json(&sidecar(path, ".meta.json"))?;
    let vocab: Vocabulary = read_json(&sidecar(path, ".vocab.json"))?;
    let ckpt = Checkpoint { params, vocab, meta };
    ckpt.verify()?;
    Ok(ckpt)
}

impl Checkpoint {
    /// Digest agreement plus exact name and shape agreement with a fresh model.
    pub fn verify(&self) -> Result<(), CheckpointError> {
        let found = self.vocab.digest();
        if found != self.meta.vocab_digest {
            return Err(CheckpointError::VocabDigestMismatch { expected: self.meta.vocab_digest.clone(), found });
        }
        let model = self.model()?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let template: ParameterStore<f32> = model.init(None, &mut rng)?;
        for (name, t) in template.iter() {
            match self.params.get(name) {
                None => return Err(CheckpointError::ParameterMismatch(format!("missing {name}"))),
                Some(p) if p.shape() != t.shape() => {
                    return Err(CheckpointError::ParameterMismatch(format!(
                        "{name} has shape {:?}, model expects {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.params.names().find(|n| template.get(n).is_none()) {
            return Err(CheckpointError::ParameterMismatch(format!("unexpected {extra}")));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model, CheckpointError> {
        Ok(Model::new(self.meta.config.clone(), self.vocab.clone())?)
    }
}

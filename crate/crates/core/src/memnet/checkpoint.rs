//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | offset      | size | content                                        |
//! |-------------|------|------------------------------------------------|
//! | 0           | 8    | magic `TQAMEMNT`                               |
//! | 8           | 4    | format version, `u32`                          |
//! | 12          | 8    | header length `H`, `u64`                       |
//! | 20          | H    | UTF-8 JSON header                              |
//! | 20 + H      | P    | matrices `E_0 .. E_K`, row-major `f64`         |
//! | 20 + H + P  | 32   | SHA-256 of every preceding byte                |
//!
//! The header holds `config`, the `vocabulary` token list (index order),
//! `softmax_enabled`, the `matrices` shape list and optional training `meta`.
//! Each matrix is `|V| x embed_dim` and there are `hops + 1` of them.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Model, ModelConfig};
use crate::datagen::Task;
use crate::table::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TQAMEMNT";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub task: Option<Task>,
    pub training_examples: usize,
    pub epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vec<String>,
    softmax_enabled: bool,
    matrices: Vec<[usize; 2]>,
    meta: Option<TrainingMeta>,
}

pub fn encode_checkpoint(model: &Model, meta: Option<&TrainingMeta>) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        vocabulary: model.vocab().tokens().to_vec(),
        softmax_enabled: model.softmax_enabled(),
        matrices: model.embeddings().iter().map(|m| [m.nrows(), m.ncols()]).collect(),
        meta: meta.cloned(),
    };
    encode_raw(&header, model.embeddings())
}

fn encode_raw(header: &Header, matrices: &[Array2<f64>]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("header always serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for m in matrices {
        for x in m.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, Option<TrainingMeta>), CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 20 + 32 {
        return Err(CheckpointError::Corrupt("file is truncated".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Corrupt("checksum mismatch (truncated or modified)".into()));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| CheckpointError::Corrupt("header runs past end of file".into()))?;
    let header: Header = serde_json::from_slice(&body[20..header_end])
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;

    let config = header.config;
    config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let vocab = Vocabulary::from_tokens(header.vocabulary.iter().cloned());
    if vocab.tokens() != header.vocabulary.as_slice() {
        return Err(CheckpointError::Corrupt(
            "vocabulary is not sorted and duplicate-free".into(),
        ));
    }
    let expected = [vocab.len(), config.embed_dim];
    if header.matrices.len() != config.hops + 1 {
        return Err(CheckpointError::Shape(format!(
            "{} matrices for {} hops (expected {})",
            header.matrices.len(),
            config.hops,
            config.hops + 1
        )));
    }
    if let Some(bad) = header.matrices.iter().find(|&&s| s != expected) {
        return Err(CheckpointError::Shape(format!(
            "matrix is {}x{}, vocabulary and embed_dim require {}x{}",
            bad[0], bad[1], expected[0], expected[1]
        )));
    }
    let payload = &body[header_end..];
    let per_matrix = expected[0] * expected[1];
    if payload.len() != 8 * per_matrix * header.matrices.len() {
        return Err(CheckpointError::Shape(format!(
            "payload holds {} bytes, header declares {}",
            payload.len(),
            8 * per_matrix * header.matrices.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut embeddings = Vec::with_capacity(header.matrices.len());
    for _ in &header.matrices {
        let data: Vec<f64> = values.by_ref().take(per_matrix).collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(CheckpointError::Corrupt("non-finite parameter".into()));
        }
        embeddings.push(
            Array2::from_shape_vec((expected[0], expected[1]), data)
                .expect("length checked above"),
        );
    }
    Ok((
        Model::from_parts(config, vocab, embeddings, header.softmax_enabled),
        header.meta,
    ))
}

pub fn save_model(
    model: &Model,
    meta: Option<&TrainingMeta>,
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(model, meta))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, Option<TrainingMeta>), CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

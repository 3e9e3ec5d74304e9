//! Binary model checkpoints.
//!
//! Layout: 8-byte magic, u32 format version, u64 header length, a JSON
//! header (model config, vocabulary, definition token ids, tensor names and
//! shapes) and then every tensor as little-endian f64 in header order.
//! Loading restores parameters bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::heads::HeadParams;
use crate::model::{DefinitionEncoderMode, Model, ModelConfig, ModelParams};
use crate::params::ParamSet;
use crate::vocab::Vocab;

const MAGIC: &[u8; 8] = b"PROPSPAN";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vec<String>,
    definition_ids: Vec<Vec<usize>>,
    tensors: Vec<TensorHeader>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Checkpoint(message.into())
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let tensors = model.params.tensors();
    let header = Header {
        config: model.config,
        vocab: model.vocab.words().to_vec(),
        definition_ids: model.definition_ids.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorHeader {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * model.params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(bad("truncated file"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<Model> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len)?).map_err(|e| bad(e.to_string()))?;

    let config = header.config;
    let vocab = Vocab::from_ordered(header.vocab);
    let encoder = || EncoderParams::zeros(vocab.len(), config.max_seq_len, config.hidden);
    let mut params = ModelParams {
        encoder: encoder(),
        heads: HeadParams::zeros(config.hidden),
        def_encoder: (config.definition_encoder != DefinitionEncoderMode::Shared).then(encoder),
    };
    let mut slots = params.tensors_mut();
    if slots.len() != header.tensors.len() {
        return Err(bad(format!("expected {} tensors, found {}", slots.len(), header.tensors.len())));
    }
    for ((name, slot), th) in slots.iter_mut().zip(&header.tensors) {
        if *name != th.name || slot.shape() != th.shape.as_slice() {
            return Err(bad(format!("tensor {} {:?} does not match {} {:?}", th.name, th.shape, name, slot.shape())));
        }
        let raw = take(&mut bytes, 8 * slot.len())?;
        for (v, chunk) in slot.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_bits(u64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    drop(slots);
    if !bytes.is_empty() {
        return Err(bad("trailing bytes"));
    }
    if header.definition_ids.iter().flatten().any(|&id| id >= vocab.len()) {
        return Err(bad("definition token id outside vocabulary"));
    }
    Ok(Model {
        vocab,
        config,
        params,
        definition_ids: header.definition_ids,
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, StawNet};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STAWNET\x01";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    step: u64,
    normalizer: Option<Normalizer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// A trained network with the statistics needed to use it on raw data.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: StawNet,
    pub step: u64,
    pub normalizer: Option<Normalizer>,
}

impl Checkpoint {
    /// Fails with a configuration error unless the network expects `nodes` sensors.
    pub fn ensure_nodes(&self, nodes: usize) -> Result<()> {
        let have = self.net.config().num_nodes;
        if have != nodes {
            return Err(Error::config(format!(
                "checkpoint was trained for {have} sensors but the data has {nodes}"
            )));
        }
        if let Some(norm) = &self.normalizer {
            if norm.nodes() != nodes {
                return Err(Error::config("checkpoint normalizer does not match the sensor count"));
            }
        }
        Ok(())
    }
}

/// Layout: magic, little-endian `u64` header length, JSON header, then every
/// parameter tensor as little-endian `f64` in header order.
pub fn encode_checkpoint(net: &StawNet, step: u64, normalizer: Option<&Normalizer>) -> Result<Vec<u8>> {
    let named = net.params().named();
    let header = Header {
        config: net.config().clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        step,
        normalizer: normalizer.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    let floats: usize = named.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + floats * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let format = |msg: &str| Error::Format(format!("checkpoint: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format("missing magic bytes"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    if len > body.len() as u64 {
        return Err(format("header length exceeds file size"));
    }
    let (json, mut data) = body.split_at(len as usize);
    let header: Header = serde_json::from_slice(json).map_err(|e| format(&format!("bad header: {e}")))?;
    header.config.validate()?;

    let expected = ModelParams::zeros(&header.config)?;
    let expected = expected.named();
    if expected.len() != header.tensors.len() {
        return Err(format("tensor list does not match the configuration"));
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for ((name, slot), entry) in expected.iter().zip(&header.tensors) {
        if *name != entry.name || slot.shape() != entry.shape.as_slice() {
            return Err(format(&format!("tensor {} does not match the configuration", entry.name)));
        }
        let n = slot.len();
        if data.len() < n * 8 {
            return Err(format("truncated parameter data"));
        }
        let (chunk, rest) = data.split_at(n * 8);
        data = rest;
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(entry.shape.clone(), values)?);
    }
    if !data.is_empty() {
        return Err(format("trailing bytes after parameter data"));
    }
    if let Some(norm) = &header.normalizer {
        if norm.mean.len() != header.config.num_nodes || norm.std.len() != header.config.num_nodes {
            return Err(format("normalizer does not match the sensor count"));
        }
    }
    let params = ModelParams::from_tensors(&header.config, tensors)?;
    Ok(Checkpoint {
        net: StawNet::from_parts(header.config, params)?,
        step: header.step,
        normalizer: header.normalizer,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &StawNet, step: u64, normalizer: Option<&Normalizer>) -> Result<()> {
    fs::write(path, encode_checkpoint(net, step, normalizer)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `UVTMCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the UTF-8 JSON header,
//! then every parameter as a little-endian `f32`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{EncoderConfig, TaskSpec};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::train::Model;
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"UVTMCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    encoder: EncoderConfig,
    tasks: Vec<TaskSpec>,
    vocab_hash: String,
    vocab: Vocabulary,
    n_params: usize,
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let header = Header {
        encoder: model.encoder.clone(),
        tasks: model.tasks.clone(),
        vocab_hash: model.vocab.hash(),
        vocab: model.vocab.clone(),
        n_params: model.params.len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(20 + json.len() + 4 * model.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in &model.params {
        buf.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.vocab.hash() != header.vocab_hash {
        return Err(bad("vocabulary hash mismatch"));
    }
    let net = Network::new(&header.encoder, header.vocab.len(), &header.tasks);
    if net.layout.total != header.n_params {
        return Err(bad(&format!("header says {} parameters, layout needs {}", header.n_params, net.layout.total)));
    }
    let raw = &bytes[20 + hlen..];
    if raw.len() != 4 * header.n_params {
        return Err(bad(&format!("expected {} parameter bytes, found {}", 4 * header.n_params, raw.len())));
    }
    let params = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
    Ok(Model { encoder: header.encoder, tasks: header.tasks, vocab: header.vocab, net, params })
}

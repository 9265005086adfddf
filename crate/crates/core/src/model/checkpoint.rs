//! Checkpoint layout: one line of JSON header, then little-endian f32 tensor
//! data in header order. Tensor offsets count bytes from the start of the data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_params, DualHeadParams, EncoderConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "fragscan-checkpoint";
const FORMAT_VERSION: u32 = 1;

/// Training facts stored next to the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Trained without head A; decode with head B alone.
    pub single_head: bool,
    /// Window length (word tokens) used in training.
    pub window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    config: EncoderConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

pub fn write_checkpoint<W: Write>(writer: W, params: &DualHeadParams, meta: &CheckpointMeta) -> Result<()> {
    let mut offset = 0;
    let tensors = params
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let length = t.len() * 4;
            let entry = TensorEntry {
                name,
                shape: t.shape().to_vec(),
                offset,
                length,
            };
            offset += length;
            entry
        })
        .collect();
    let header = Header {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        config: params.config.clone(),
        meta: meta.clone(),
        tensors,
    };
    let mut w = BufWriter::new(writer);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (_, t) in params.tensors() {
        for &v in t.iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<(DualHeadParams, CheckpointMeta)> {
    let mut r = BufReader::new(reader);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {:?} version {}",
            header.format, header.format_version
        )));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let mut params = init_params(&header.config, 0)?;
    let mut slots = params.tensors_mut();
    if slots.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, header lists {}",
            slots.len(),
            header.tensors.len()
        )));
    }
    for ((name, slot), entry) in slots.iter_mut().zip(&header.tensors) {
        if *name != entry.name || slot.shape() != entry.shape.as_slice() || entry.length != slot.len() * 4 {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} {:?} does not match expected {name:?} {:?}",
                entry.name,
                entry.shape,
                slot.shape()
            )));
        }
        let bytes = data
            .get(entry.offset..entry.offset + entry.length)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name:?} runs past the end of the data")))?;
        for (dst, src) in slot.iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f32::from_le_bytes([src[0], src[1], src[2], src[3]]) as f64;
        }
    }
    drop(slots);
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Ok((params, header.meta))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &DualHeadParams, meta: &CheckpointMeta) -> Result<()> {
    write_checkpoint(File::create(path)?, params, meta)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(DualHeadParams, CheckpointMeta)> {
    read_checkpoint(File::open(path)?)
}

//! Weights file.
//!
//! Layout (little-endian): magic `DIHMNET\0`, version u32, header length u32,
//! JSON header with the network spec, layer shapes and training metadata,
//! then every layer's kernel followed by its bias as f32 in storage order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::Conv;
use super::{NetworkSpec, NetworkWeights, TrainingMeta};
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"DIHMNET\0";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    /// (in_channels, out_channels, kernel) per layer.
    layers: Vec<(usize, usize, usize)>,
    meta: TrainingMeta,
}

pub fn write_weights(path: impl AsRef<Path>, w: &NetworkWeights) -> Result<()> {
    w.validate()?;
    let header = serde_json::to_vec(&Header {
        spec: w.spec,
        layers: w.layers.iter().map(|c| (c.in_channels, c.out_channels, c.kernel)).collect(),
        meta: w.meta.clone(),
    })?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(WEIGHTS_MAGIC)?;
    out.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    for conv in &w.layers {
        for v in conv.weights.iter().chain(&conv.bias) {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let truncated = || {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("{}: truncated weights file", path.display()),
        ))
    };
    if bytes.len() < 16 {
        return Err(truncated());
    }
    if &bytes[..8] != WEIGHTS_MAGIC {
        return Err(Error::format(path, "bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(Error::format(path, format!("unsupported weights version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(truncated)?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    let mut pos = 16 + hlen;
    let mut layers = Vec::with_capacity(header.layers.len());
    for &(i, o, k) in &header.layers {
        let n = i * o * k * k + o;
        let raw = bytes.get(pos..pos + 4 * n).ok_or_else(truncated)?;
        pos += 4 * n;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let mut conv = Conv::zeros(i, o, k);
        let nw = conv.weights.len();
        conv.weights.copy_from_slice(&vals[..nw]);
        conv.bias.copy_from_slice(&vals[nw..]);
        layers.push(conv);
    }
    let w = NetworkWeights {
        spec: header.spec,
        layers,
        meta: header.meta,
    };
    w.validate()?;
    Ok(w)
}

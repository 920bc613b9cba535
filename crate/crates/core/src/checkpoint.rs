//! Binary checkpoint format.
//!
//! ```text
//! "PDYFORGE"          8-byte magic
//! version             u16 LE (currently 1)
//! header length       u32 LE
//! header              UTF-8 JSON: architecture, layer specs, shapes, classes, metadata
//! payload             every parameter master as f32 LE, in layer order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Architecture, LayerSpec, Network};
use crate::tensor::{Precision, Shape2D, Tensor};

pub const MAGIC: &[u8; 8] = b"PDYFORGE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    in_channels: usize,
    input_size: Shape2D,
    num_classes: usize,
    specs: Vec<LayerSpec>,
    classes: Vec<String>,
    params: Vec<ParamEntry>,
    meta: TrainingMeta,
}

/// A network restored from disk with its class names and metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub classes: Vec<String>,
    pub meta: TrainingMeta,
}

pub fn encode_checkpoint(net: &Network, classes: &[String], meta: &TrainingMeta) -> Result<Vec<u8>> {
    if classes.len() != net.num_classes {
        return Err(Error::config(format!(
            "{} class names for a {}-class network",
            classes.len(),
            net.num_classes
        )));
    }
    let params = net.params();
    let header = Header {
        architecture: net.architecture,
        in_channels: net.in_channels,
        input_size: net.input_size,
        num_classes: net.num_classes,
        specs: net.specs.clone(),
        classes: classes.to_vec(),
        params: net
            .param_names()
            .into_iter()
            .zip(&params)
            .map(|(name, p)| ParamEntry {
                name,
                shape: p.master.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::config(format!("header encoding: {e}")))?;
    let payload_len: usize = params.iter().map(|p| p.len() * 4).sum();
    let mut out = Vec::with_capacity(14 + json.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &params {
        for v in p.master.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| {
        Error::format(bytes.len(), format!("truncated checkpoint while reading {what}"))
    })?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

/// Parse a checkpoint. The rebuilt network is Full32 with every parameter
/// trainable.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = 0;
    if take(bytes, &mut pos, 8, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, not a checkpoint"));
    }
    let version = u16::from_le_bytes(take(bytes, &mut pos, 2, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(8, format!("unsupported version {version}, expected {FORMAT_VERSION}")));
    }
    let len = u32::from_le_bytes(take(bytes, &mut pos, 4, "header length")?.try_into().unwrap()) as usize;
    let header_at = pos;
    let header: Header = serde_json::from_slice(take(bytes, &mut pos, len, "header")?)
        .map_err(|e| Error::format(header_at, format!("invalid header: {e}")))?;
    if header.classes.len() != header.num_classes {
        return Err(Error::format(header_at, "class list does not match class count"));
    }
    let mut network = Network::from_specs(
        header.architecture,
        header.specs.clone(),
        header.in_channels,
        header.input_size,
        header.num_classes,
        0,
    )
    .map_err(|e| Error::format(header_at, format!("header describes an invalid network: {e}")))?;
    let names = network.param_names();
    let mut params = network.params_mut();
    if params.len() != header.params.len() {
        return Err(Error::format(
            header_at,
            format!("header lists {} parameters, architecture has {}", header.params.len(), params.len()),
        ));
    }
    for ((p, entry), name) in params.iter_mut().zip(&header.params).zip(&names) {
        if p.master.shape() != entry.shape.as_slice() || &entry.name != name {
            return Err(Error::format(
                header_at,
                format!("parameter {} {:?} disagrees with architecture {name} {:?}", entry.name, entry.shape, p.master.shape()),
            ));
        }
        let raw = take(bytes, &mut pos, p.len() * 4, &entry.name)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        p.master = Tensor::from_vec(&entry.shape, values)?;
        p.trainable = true;
        p.sync(Precision::Full32);
    }
    if pos != bytes.len() {
        return Err(Error::format(pos, format!("{} trailing bytes after payload", bytes.len() - pos)));
    }
    Ok(Checkpoint {
        network,
        classes: header.classes,
        meta: header.meta,
    })
}

pub fn save_checkpoint(net: &Network, classes: &[String], meta: &TrainingMeta, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net, classes, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_checkpoint(&bytes)
}

//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `OWAPCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then every parameter
//! buffer as raw little-endian `f64` in [`Network::parameters`] order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::layouts::ModelLayout;
use crate::nn::LayerSpec;
use crate::quantifiers::QuantifierKind;

const MAGIC: &[u8; 8] = b"OWAPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub layer: usize,
    pub kind: QuantifierKind,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layout: ModelLayout,
    pub pools: Vec<PoolRecord>,
    pub tensors: Vec<TensorRecord>,
}

fn header_for(net: &Network) -> CheckpointHeader {
    let layout = net.layout().clone();
    let pools = layout
        .layers()
        .iter()
        .enumerate()
        .filter_map(|(layer, spec)| match spec {
            LayerSpec::OwaPool { quantifier, .. } => Some(PoolRecord {
                layer,
                kind: quantifier.kind(),
                alpha: quantifier.alpha(),
            }),
            _ => None,
        })
        .collect();
    let mut tensors = Vec::new();
    let mut param_layers = layout
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }))
        .map(|(i, _)| i);
    for (k, p) in net.parameters().iter().enumerate() {
        if k % 2 == 0 {
            let layer = param_layers.next().unwrap_or(usize::MAX);
            tensors.push(TensorRecord {
                name: format!("layer{layer}.weight"),
                len: p.len(),
            });
        } else {
            let name = tensors
                .last()
                .map(|t| t.name.replace(".weight", ".bias"))
                .unwrap_or_default();
            tensors.push(TensorRecord { name, len: p.len() });
        }
    }
    CheckpointHeader { layout, pools, tensors }
}

/// Serializes `net` into checkpoint bytes.
pub fn to_bytes(net: &Network) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_for(net))?;
    let mut out = Vec::with_capacity(20 + header.len() + 8 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in net.parameters() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint(format!("truncated while reading {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

/// Parses checkpoint bytes back into a network.
pub fn from_bytes(mut bytes: &[u8]) -> Result<Network> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().unwrap());
    let header_len = usize::try_from(header_len).map_err(|_| Error::Checkpoint("header length overflows".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(take(&mut bytes, header_len, "header")?)?;

    for pool in &header.pools {
        match header.layout.layers().get(pool.layer) {
            Some(LayerSpec::OwaPool { quantifier, .. })
                if quantifier.kind() == pool.kind && quantifier.alpha() == pool.alpha => {}
            _ => {
                return Err(Error::Checkpoint(format!(
                    "pool record for layer {} disagrees with the layout",
                    pool.layer
                )))
            }
        }
    }

    let mut params = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let raw = take(&mut bytes, t.len.saturating_mul(8), &t.name)?;
        params.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>(),
        );
    }
    if !bytes.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Network::from_parameters(&header.layout, params)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let bytes = to_bytes(net)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

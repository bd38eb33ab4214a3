//! Weight checkpoints.
//!
//! Layout: the 8-byte magic `EPICKPT1`, a little-endian `u64` header length,
//! a JSON header, then every network's parameters in header order as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Mlp};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"EPICKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub seed: u64,
    pub step: u64,
    pub networks: Vec<NetworkEntry>,
    /// Free-form context, e.g. the resolved experiment configuration.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub networks: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn new(seed: u64, step: u64, networks: Vec<(String, Mlp)>, metadata: serde_json::Value) -> Self {
        let header = CheckpointHeader {
            seed,
            step,
            networks: networks
                .iter()
                .map(|(name, net)| NetworkEntry {
                    name: name.clone(),
                    layers: net.layers().to_vec(),
                    param_count: net.param_count(),
                })
                .collect(),
            metadata,
        };
        Self { header, networks }
    }

    pub fn network(&self, name: &str) -> Option<&Mlp> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let params: usize = self.networks.iter().map(|(_, n)| n.param_count()).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * params);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, net) in &self.networks {
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..header_len])?;
        let mut values = body[header_len..].chunks_exact(8);
        if !values.remainder().is_empty() {
            return Err(bad("parameter block is not a whole number of f64 values"));
        }
        let mut networks = Vec::with_capacity(header.networks.len());
        for entry in &header.networks {
            let params: Vec<f64> = values
                .by_ref()
                .take(entry.param_count)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if params.len() != entry.param_count {
                return Err(bad("truncated parameter block"));
            }
            networks.push((entry.name.clone(), Mlp::from_params(entry.layers.clone(), params)?));
        }
        if values.next().is_some() {
            return Err(bad("trailing bytes after parameter block"));
        }
        Ok(Self { header, networks })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

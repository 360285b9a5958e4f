//! Versioned JSON checkpoint container.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "bifurcate-checkpoint",
//!   "version": 1,
//!   "kind": "<model kind>",
//!   "build": "<crate version>",
//!   "fit_digest": "<sha256 of the fit metadata>" | null,
//!   "seed_lineage": [["stage", seed], ...],
//!   "config": { ... model-specific ... },
//!   "params": { "params": [{name, tensor: {shape, data}}], "buffers": [...] },
//!   "optimizer": { beta1, beta2, eps, step, first, second } | null
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! exact and two saves of the same state are byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::params::LayerParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "bifurcate-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub build: String,
    pub fit_digest: Option<String>,
    pub seed_lineage: Vec<(String, u64)>,
    pub config: serde_json::Value,
    pub params: LayerParams,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(kind: &str, config: serde_json::Value, params: LayerParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            build: crate::BUILD_ID.to_string(),
            fit_digest: None,
            seed_lineage: Vec::new(),
            config,
            params,
            optimizer: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(bytes)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Refuses data prepared under different fit statistics.
    pub fn require_digest(&self, digest: &str) -> Result<()> {
        match &self.fit_digest {
            Some(d) if d == digest => Ok(()),
            Some(d) => Err(Error::Checkpoint(format!(
                "checkpoint was trained with fit metadata {d}, data was prepared with {digest}"
            ))),
            None => Err(Error::Checkpoint("checkpoint carries no fit-metadata digest".into())),
        }
    }
}

//! Model checkpoints.
//!
//! A checkpoint is a JSON document:
//!
//! ```json
//! {
//!   "format": "graphcloak-checkpoint",
//!   "version": 1,
//!   "arch": "gcn",
//!   "aggregation": { "kind": "sum" },
//!   "input_dim": 7, "hidden": 32, "layers": 3, "classes": 2, "dropout": 0.0,
//!   "blocks": [ { "name": "conv0.weight", "rows": 7, "cols": 32, "data": [...] }, ... ],
//!   "sha256": "..."
//! }
//! ```
//!
//! `blocks` follow the model's storage order and each `data` array is the
//! block in row-major order. The robust variant stores
//! `{ "kind": "soft-median", "temperature": T }`. `sha256` is the digest of
//! the concatenated parameters as little-endian `f64` bytes and is checked on
//! load. Floats round-trip exactly.

use std::fs;
use std::path::Path;

use graphcloak_core::gnn::{Aggregation, Arch, GnnModel, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const FORMAT: &str = "graphcloak-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregationRecord {
    Sum,
    SoftMedian { temperature: f64 },
}

impl From<Aggregation> for AggregationRecord {
    fn from(a: Aggregation) -> Self {
        match a {
            Aggregation::Sum => Self::Sum,
            Aggregation::SoftMedian { temperature } => Self::SoftMedian { temperature },
        }
    }
}

impl From<AggregationRecord> for Aggregation {
    fn from(a: AggregationRecord) -> Self {
        match a {
            AggregationRecord::Sum => Self::Sum,
            AggregationRecord::SoftMedian { temperature } => Self::SoftMedian { temperature },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub arch: String,
    pub aggregation: AggregationRecord,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
    pub dropout: f64,
    pub blocks: Vec<Block>,
    pub sha256: String,
}

/// Hex SHA-256 of the parameter vector as little-endian `f64` bytes.
pub fn param_digest(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in params {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn from_model(model: &GnnModel) -> Self {
        let spec = model.spec();
        let theta = model.params();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            arch: spec.arch.as_str().into(),
            aggregation: spec.aggregation.into(),
            input_dim: spec.input_dim,
            hidden: spec.hidden,
            layers: spec.layers,
            classes: spec.classes,
            dropout: spec.dropout,
            blocks: model
                .layout()
                .iter()
                .map(|p| Block {
                    name: p.name.clone(),
                    rows: p.rows,
                    cols: p.cols,
                    data: theta[p.range()].to_vec(),
                })
                .collect(),
            sha256: param_digest(theta),
        }
    }

    pub fn into_model(self) -> Result<GnnModel> {
        let bad = |message: String| Error::Format { what: "checkpoint", message };
        if self.format != FORMAT || self.version != VERSION {
            return Err(bad(format!("unsupported {} v{}", self.format, self.version)));
        }
        let arch = Arch::parse(&self.arch).ok_or_else(|| bad(format!("unknown arch {:?}", self.arch)))?;
        let spec = ModelSpec {
            arch,
            input_dim: self.input_dim,
            hidden: self.hidden,
            layers: self.layers,
            classes: self.classes,
            dropout: self.dropout,
            aggregation: self.aggregation.into(),
        };
        spec.validate()?;
        let layout = spec.layout();
        if layout.len() != self.blocks.len() {
            return Err(bad(format!("{} blocks, expected {}", self.blocks.len(), layout.len())));
        }
        let mut theta = Vec::with_capacity(layout.last().map_or(0, |p| p.offset + p.len()));
        for (p, b) in layout.iter().zip(self.blocks) {
            if p.name != b.name || p.rows != b.rows || p.cols != b.cols || b.data.len() != p.len() {
                return Err(bad(format!(
                    "block {:?} {}x{} ({} values) does not match expected {:?} {}x{}",
                    b.name,
                    b.rows,
                    b.cols,
                    b.data.len(),
                    p.name,
                    p.rows,
                    p.cols
                )));
            }
            theta.extend(b.data);
        }
        let digest = param_digest(&theta);
        if digest != self.sha256 {
            return Err(bad(format!("digest mismatch: stored {}, computed {digest}", self.sha256)));
        }
        Ok(GnnModel::from_params(spec, theta)?)
    }
}

/// Writes `model` to `path` and returns its parameter digest.
pub fn save_checkpoint(model: &GnnModel, path: &Path) -> Result<String> {
    let ckpt = Checkpoint::from_model(model);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string(&ckpt)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(ckpt.sha256)
}

pub fn load_checkpoint(path: &Path) -> Result<GnnModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}

//! Content-addressed artifact store.
//!
//! ```text
//! <root>/datasets/<digest>/NAME_*.txt, NAME_meta.json, cloak_manifest.json
//! <root>/models/<digest>.json
//! ```
//!
//! Dataset keys cover every graph, the split, the dataset header and the
//! manifest; model keys cover the whole checkpoint. An artifact that already
//! exists is never rewritten.

use std::fs;
use std::path::{Path, PathBuf};

use graphcloak_core::gnn::GnnModel;
use graphcloak_core::graph::GraphDataset;
use sha2::{Digest, Sha256};

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::manifest::CloakManifest;
use crate::tu::write_dataset;

/// Hex digest prefix used for directory names.
const KEY_LEN: usize = 16;

fn put_usize(h: &mut Sha256, x: usize) {
    h.update((x as u64).to_le_bytes());
}

fn put_list(h: &mut Sha256, xs: &[usize]) {
    put_usize(h, xs.len());
    for &x in xs {
        put_usize(h, x);
    }
}

pub fn dataset_digest(ds: &GraphDataset) -> String {
    let mut h = Sha256::new();
    h.update((ds.name.len() as u64).to_le_bytes());
    h.update(ds.name.as_bytes());
    put_usize(&mut h, ds.class_count);
    put_usize(&mut h, ds.feature_dim);
    put_usize(&mut h, ds.graphs.len());
    for g in &ds.graphs {
        put_usize(&mut h, g.node_count());
        put_usize(&mut h, g.label());
        put_list(&mut h, g.feature_classes());
        let edges: Vec<usize> = g.adjacency().edges().flat_map(|(u, v)| [u, v]).collect();
        put_list(&mut h, &edges);
    }
    match &ds.split {
        None => h.update([0u8]),
        Some(s) => {
            h.update([1u8]);
            put_list(&mut h, &s.train);
            put_list(&mut h, &s.val);
            put_list(&mut h, &s.test);
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Persists a dataset (and its manifest, when given) and returns its directory.
    pub fn put_dataset(&self, ds: &GraphDataset, manifest: Option<&CloakManifest>) -> Result<PathBuf> {
        let mut digest = dataset_digest(ds);
        if let Some(m) = manifest {
            let mut h = Sha256::new();
            h.update(digest.as_bytes());
            h.update(serde_json::to_vec(m)?);
            digest = hex::encode(h.finalize());
        }
        let key = &digest[..KEY_LEN];
        let dir = self.root.join("datasets").join(key);
        if !dir.exists() {
            let staging = self.root.join("datasets").join(format!(".{key}.tmp"));
            if staging.exists() {
                fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
            }
            write_dataset(ds, &staging)?;
            if let Some(m) = manifest {
                m.write(&staging)?;
            }
            fs::rename(&staging, &dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(dir)
    }

    /// Persists a model checkpoint and returns `(path, digest)`.
    pub fn put_model(&self, model: &GnnModel) -> Result<(PathBuf, String)> {
        let ckpt = Checkpoint::from_model(model);
        let key = hex::encode(Sha256::digest(serde_json::to_vec(&ckpt)?));
        let path = self.root.join("models").join(format!("{}.json", &key[..KEY_LEN]));
        if !path.exists() {
            save_checkpoint(model, &path)?;
        }
        Ok((path, ckpt.sha256))
    }
}

//! Graph data cloaking primitives.
//!
//! Everything in this crate is pure computation over dense, small graphs:
//! the graph model and dataset statistics, a GCN/GIN/GraphSAGE engine with
//! exact reverse-mode gradients (weights, node features and the continuous
//! adjacency relaxation), Adam training, the five perturbation generators
//! and the attacker-side countermeasures. File formats, reporting and the
//! command line live in the `graphcloak` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod budget;
pub mod cloak;
pub mod defense;
mod error;
pub mod generate;
pub mod gnn;
pub mod graph;
pub mod matrix;
pub mod optim;
pub mod soft_median;
pub mod train;

pub use error::{Error, Result};
pub use graph::{DatasetStats, Graph, GraphDataset, Split};
pub use matrix::Matrix;

/// Deterministic generator used across the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeds the crate-wide generator.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Seeded generator on an independent stream, so consumers sharing a seed
/// never draw from each other's sequence.
pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}

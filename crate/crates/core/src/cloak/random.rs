use alloc::vec::Vec;

use rand::seq::index;

use super::{select_poisoned, stream, stream_rng, usage_report, CloakOutcome, Method};
use crate::budget::graph_budget;
use crate::graph::GraphDataset;
use crate::Result;

/// Maps a linear index over unordered pairs (row-major, `u < v`) to the pair.
fn pair_at(n: usize, mut k: usize) -> (usize, usize) {
    for u in 0..n {
        let row = n - u - 1;
        if k < row {
            return (u, u + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair index out of range")
}

/// Flips `min(c, pairs)` distinct uniformly chosen pairs in every poisoned
/// training graph.
pub fn random_cloak(ds: &GraphDataset, beta: f64, poison_rate: f64, seed: u64) -> Result<CloakOutcome> {
    let poisoned = select_poisoned(ds, poison_rate, &mut stream_rng(seed, stream::POISON))?;
    let mut rng = stream_rng(seed, stream::FLIPS);
    let mut cloaked = ds.clone();
    for &i in &poisoned {
        let g = &mut cloaked.graphs[i];
        let n = g.node_count();
        let pairs = g.adjacency().pair_count();
        let c = graph_budget(&ds.graphs[i], beta).min(pairs);
        for k in index::sample(&mut rng, pairs, c).iter() {
            let (u, v) = pair_at(n, k);
            g.flip_edge(u, v);
        }
    }
    let usage = usage_report(Method::Random, ds, &cloaked, &poisoned, beta)?;
    Ok(CloakOutcome {
        dataset: cloaked,
        usage,
        triggers: Vec::new(),
        surrogate: None,
    })
}

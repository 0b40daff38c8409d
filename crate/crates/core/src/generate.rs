use alloc::format;

use rand::Rng as _;

use crate::graph::Adjacency;
use crate::{Error, Result, Rng};

/// G(n, ρ): visits every unordered pair once, in row-major order, and keeps
/// it with probability `density`.
pub fn erdos_renyi(node_count: usize, density: f64, rng: &mut Rng) -> Result<Adjacency> {
    if node_count == 0 {
        return Err(Error::InvalidArgument("Erdős–Rényi graph needs at least one node".into()));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("edge probability {density} outside [0, 1]")));
    }
    let mut adj = Adjacency::empty(node_count);
    for u in 0..node_count {
        for v in (u + 1)..node_count {
            if rng.random::<f64>() < density {
                adj.set(u, v, true);
            }
        }
    }
    Ok(adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn single_node_has_no_edges() {
        let adj = erdos_renyi(1, 0.9, &mut seeded_rng(0)).unwrap();
        assert_eq!(adj.edge_count(), 0);
    }

    #[test]
    fn density_one_is_complete() {
        let adj = erdos_renyi(4, 1.0, &mut seeded_rng(0)).unwrap();
        assert_eq!(adj.edge_count(), 6);
    }

    #[test]
    fn rejects_bad_density() {
        assert!(erdos_renyi(3, 1.5, &mut seeded_rng(0)).is_err());
        assert!(erdos_renyi(3, -0.1, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = erdos_renyi(12, 0.4, &mut seeded_rng(11)).unwrap();
        let b = erdos_renyi(12, 0.4, &mut seeded_rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_edge_count_over_seeds() {
        // n = 5, ρ = 0.6: E[|E|] = 0.6 · 10 = 6; Var = 10 · 0.6 · 0.4 = 2.4.
        let trials = 1000;
        let total: usize = (0..trials)
            .map(|s| erdos_renyi(5, 0.6, &mut seeded_rng(s)).unwrap().edge_count())
            .sum();
        let mean = total as f64 / trials as f64;
        let se = (2.4f64 / trials as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "mean {mean}");
    }
}

//! Per-graph perturbation budgets.

use crate::graph::Graph;

pub const DEFAULT_BETA: f64 = 0.05;

/// `⌊min(|E|/10, β·|V|²)⌋` without the clamp.
pub fn raw_budget(edges: usize, nodes: usize, beta: f64) -> usize {
    let by_edges = edges as f64 / 10.0;
    let by_nodes = beta * (nodes * nodes) as f64;
    libm::floor(by_edges.min(by_nodes)).max(0.0) as usize
}

/// Adaptive budget clamped to at least one edit, so small sparse graphs
/// still receive a perturbation.
pub fn compute_budget(edges: usize, nodes: usize, beta: f64) -> usize {
    raw_budget(edges, nodes, beta).max(1)
}

pub fn graph_budget(g: &Graph, beta: f64) -> usize {
    compute_budget(g.edge_count(), g.node_count(), beta)
}

/// Largest `n` with `n(n-1) + 2n = n(n+1) ≤ c`, i.e.
/// `⌊(-1 + √(1 + 4c)) / 2⌋`, computed in integers. Not clamped.
pub fn raw_trigger_size(c: usize) -> usize {
    let mut n = libm::floor((libm::sqrt(1.0 + 4.0 * c as f64) - 1.0) / 2.0) as usize;
    while n * (n + 1) > c {
        n -= 1;
    }
    while (n + 1) * (n + 2) <= c {
        n += 1;
    }
    n
}

/// Trigger node count for budget `c`, clamped to at least one node.
pub fn trigger_size(c: usize) -> usize {
    raw_trigger_size(c).max(1)
}

/// Worst-case cost `n(n-1) + 2n` charged to an `n`-node trigger.
pub fn trigger_cost_bound(n: usize) -> usize {
    n * (n - 1) + 2 * n
}

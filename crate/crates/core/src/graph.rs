//! Graphs, datasets, splits and stealth statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::matrix::Matrix;
use crate::{Error, Result, Rng};

/// Symmetric {0,1} adjacency with an empty diagonal.
///
/// Self-loops are never stored; the GCN layer adds them while normalising.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    /// Builds an adjacency from undirected pairs. Duplicates and both
    /// orientations collapse to one edge; self-loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = Self::empty(n);
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) outside a graph of {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            adj.set(u, v, true);
        }
        Ok(adj)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.n + v]
    }

    /// Sets the undirected pair `{u, v}`. Panics on `u == v`.
    pub fn set(&mut self, u: usize, v: usize, present: bool) {
        assert_ne!(u, v, "self-loops are not stored");
        self.bits[u * self.n + v] = present;
        self.bits[v * self.n + u] = present;
    }

    pub fn toggle(&mut self, u: usize, v: usize) {
        let present = self.has_edge(u, v);
        self.set(u, v, !present);
    }

    /// Undirected edge count; each edge counted once.
    pub fn edge_count(&self) -> usize {
        let mut count = 0;
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                count += usize::from(self.has_edge(u, v));
            }
        }
        count
    }

    pub fn degree(&self, v: usize) -> usize {
        self.bits[v * self.n..(v + 1) * self.n]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| ((u + 1)..self.n).filter_map(move |v| self.has_edge(u, v).then_some((u, v))))
    }

    /// Number of unordered node pairs, i.e. the size of the flip space.
    pub fn pair_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    /// Dense `f64` copy, the continuous relaxation differentiated by the engine.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |u, v| if self.has_edge(u, v) { 1.0 } else { 0.0 })
    }

    /// Number of undirected pairs on which two adjacencies differ.
    pub fn edit_distance(&self, other: &Adjacency) -> usize {
        assert_eq!(self.n, other.n, "edit distance needs equal node counts");
        let mut d = 0;
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                d += usize::from(self.has_edge(u, v) != other.has_edge(u, v));
            }
        }
        d
    }
}

/// A labelled graph with one-hot node features.
///
/// Features are stored as the hot index of each row, so every row is
/// one-hot by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    adjacency: Adjacency,
    features: Vec<usize>,
    feature_dim: usize,
    label: usize,
}

impl Graph {
    pub fn new(adjacency: Adjacency, features: Vec<usize>, feature_dim: usize, label: usize) -> Result<Self> {
        let n = adjacency.node_count();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if features.len() != n {
            return Err(Error::DimensionMismatch {
                what: "feature rows",
                expected: n,
                found: features.len(),
            });
        }
        if let Some(&bad) = features.iter().find(|&&f| f >= feature_dim) {
            return Err(Error::InvalidGraph(format!(
                "feature class {bad} outside dimension {feature_dim}"
            )));
        }
        Ok(Self {
            adjacency,
            features,
            feature_dim,
            label,
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    #[inline]
    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.adjacency.edge_count()
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.has_edge(u, v)
    }

    /// Hot index of every node's feature row.
    #[inline]
    pub fn feature_classes(&self) -> &[usize] {
        &self.features
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    #[inline]
    pub fn label(&self) -> usize {
        self.label
    }

    pub fn feature_matrix(&self) -> Matrix {
        let mut x = Matrix::zeros(self.node_count(), self.feature_dim);
        for (v, &f) in self.features.iter().enumerate() {
            x[(v, f)] = 1.0;
        }
        x
    }

    pub fn flip_edge(&mut self, u: usize, v: usize) {
        self.adjacency.toggle(u, v);
    }

    pub fn set_edge(&mut self, u: usize, v: usize, present: bool) {
        self.adjacency.set(u, v, present);
    }

    pub fn set_feature(&mut self, v: usize, class: usize) {
        assert!(class < self.feature_dim, "feature class out of range");
        self.features[v] = class;
    }

    /// Structural edit distance, one per flipped undirected pair.
    pub fn edit_distance(&self, other: &Graph) -> usize {
        self.adjacency.edit_distance(&other.adjacency)
    }

    /// CostFeat: number of nodes whose feature class differs.
    pub fn feature_cost(&self, other: &Graph) -> usize {
        assert_eq!(self.node_count(), other.node_count());
        self.features
            .iter()
            .zip(&other.features)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// `|E| / |V|²`, the per-graph term of the dataset density.
    pub fn density(&self) -> f64 {
        let n = self.node_count() as f64;
        self.edge_count() as f64 / (n * n)
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut adj = Adjacency::empty(n);
        for (u, v) in self.adjacency.edges() {
            adj.set(perm[u], perm[v], true);
        }
        let mut features = vec![0; n];
        for v in 0..n {
            features[perm[v]] = self.features[v];
        }
        Graph {
            adjacency: adj,
            features,
            feature_dim: self.feature_dim,
            label: self.label,
        }
    }

    /// Re-checks every structural invariant. Construction already enforces
    /// them; this exists for property tests over mutation paths.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.node_count();
        for u in 0..n {
            if self.adjacency.has_edge(u, u) {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            for v in 0..u {
                if self.adjacency.has_edge(u, v) != self.adjacency.has_edge(v, u) {
                    return Err(Error::InvalidGraph(format!("asymmetric pair ({u}, {v})")));
                }
            }
        }
        if self.features.len() != n || self.features.iter().any(|&f| f >= self.feature_dim) {
            return Err(Error::InvalidGraph("feature rows are not one-hot".into()));
        }
        Ok(())
    }
}

/// Disjoint train/validation/test index sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Checks disjointness and full coverage of `0..len`.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut seen = vec![false; len];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= len {
                return Err(Error::InvalidArgument(format!("split index {i} out of range {len}")));
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("split index {i} appears twice")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("graph {missing} is in no split")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub class_count: usize,
    pub feature_dim: usize,
    pub split: Option<Split>,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, class_count: usize, feature_dim: usize) -> Result<Self> {
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidGraph(format!(
                    "graph {i} has feature dimension {}, dataset has {feature_dim}",
                    g.feature_dim()
                )));
            }
            if g.label() >= class_count {
                return Err(Error::InvalidGraph(format!(
                    "graph {i} has label {} but only {class_count} classes",
                    g.label()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            class_count,
            feature_dim,
            split: None,
        })
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.graphs.len())?;
        self.split = Some(split);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn split(&self) -> Result<&Split> {
        self.split.as_ref().ok_or(Error::EmptySet("split (dataset has not been split)"))
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Graph> {
        indices.iter().map(|&i| &self.graphs[i]).collect()
    }
}

/// Dataset-level edge count and density, optionally relative to a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub avg_edges: f64,
    pub avg_density: f64,
    pub delta_edges_pct: Option<f64>,
    pub delta_density_pct: Option<f64>,
}

/// Mean undirected edge count and mean `|E|/|V|²`, with percentage deltas
/// against `reference` when given.
pub fn dataset_stats(ds: &GraphDataset, reference: Option<&GraphDataset>) -> Result<DatasetStats> {
    let (avg_edges, avg_density) = averages(&ds.graphs)?;
    let (delta_edges_pct, delta_density_pct) = match reference {
        None => (None, None),
        Some(r) => {
            if r.len() != ds.len() {
                return Err(Error::DimensionMismatch {
                    what: "reference dataset graph count",
                    expected: ds.len(),
                    found: r.len(),
                });
            }
            let (ref_edges, ref_density) = averages(&r.graphs)?;
            (Some(pct_change(avg_edges, ref_edges)), Some(pct_change(avg_density, ref_density)))
        }
    };
    Ok(DatasetStats {
        avg_edges,
        avg_density,
        delta_edges_pct,
        delta_density_pct,
    })
}

fn averages(graphs: &[Graph]) -> Result<(f64, f64)> {
    if graphs.is_empty() {
        return Err(Error::EmptySet("dataset"));
    }
    let n = graphs.len() as f64;
    let edges: f64 = graphs.iter().map(|g| g.edge_count() as f64).sum();
    let density: f64 = graphs.iter().map(Graph::density).sum();
    Ok((edges / n, density / n))
}

fn pct_change(value: f64, reference: f64) -> f64 {
    if value == reference {
        0.0
    } else if reference == 0.0 {
        f64::INFINITY.copysign(value)
    } else {
        (value - reference) / reference * 100.0
    }
}

/// Stratified random split.
///
/// Global part sizes are `round(N·f)` for validation and test (train takes
/// the rest); each part is apportioned across classes by largest remainder.
pub fn split_dataset(ds: &GraphDataset, fractions: [f64; 3], rng: &mut Rng) -> Result<GraphDataset> {
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let n = ds.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, g) in ds.graphs.iter().enumerate() {
        by_class[g.label()].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < 3 {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
            });
        }
    }
    for members in &mut by_class {
        members.shuffle(rng);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let n_val = libm::round(n as f64 * fractions[1]) as usize;
    let n_test = libm::round(n as f64 * fractions[2]) as usize;
    // Each class keeps at least one training graph.
    let val_caps: Vec<usize> = counts.iter().map(|c| c.saturating_sub(1)).collect();
    let val_quota = apportion(&counts, n_val, &val_caps);
    let test_caps: Vec<usize> = val_caps.iter().zip(&val_quota).map(|(c, v)| c - v).collect();
    let test_quota = apportion(&counts, n_test, &test_caps);

    let mut split = Split::default();
    for (c, members) in by_class.iter().enumerate() {
        let (v, t) = (val_quota[c], test_quota[c]);
        split.val.extend_from_slice(&members[..v]);
        split.test.extend_from_slice(&members[v..v + t]);
        split.train.extend_from_slice(&members[v + t..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    ds.clone().with_split(split)
}

/// Distributes `total` over classes proportionally to `counts` by largest
/// remainder, giving class `c` at most `caps[c]`.
pub(crate) fn apportion(counts: &[usize], total: usize, caps: &[usize]) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let cap = |c: usize| caps[c];
    let mut quota: Vec<usize> = counts
        .iter()
        .enumerate()
        .map(|(c, &m)| (m * total / n).min(cap(c)))
        .collect();
    let mut remaining = total.saturating_sub(quota.iter().sum());
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // Largest fractional remainder first, ties to the lower class index.
    order.sort_by(|&a, &b| {
        let ra = (counts[a] * total) % n;
        let rb = (counts[b] * total) % n;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if quota[c] < cap(c) {
                quota[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn path3() -> Graph {
        let adj = Adjacency::from_edges(3, [(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        Graph::new(adj, vec![0, 1, 0], 2, 0).unwrap()
    }

    fn balanced(n: usize) -> GraphDataset {
        let graphs = (0..n)
            .map(|i| Graph::new(Adjacency::empty(2), vec![0, 0], 1, i % 2).unwrap())
            .collect();
        GraphDataset::new("balanced", graphs, 2, 1).unwrap()
    }

    #[test]
    fn both_directions_dedup_to_one_edge() {
        let g = path3();
        assert_eq!(g.edge_count(), 2);
        g.check_invariants().unwrap();
    }

    #[test]
    fn single_node_graph_is_valid() {
        let g = Graph::new(Adjacency::empty(1), vec![0], 1, 0).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.adjacency().pair_count(), 0);
    }

    #[test]
    fn rejects_out_of_range_feature() {
        assert!(Graph::new(Adjacency::empty(2), vec![0, 3], 2, 0).is_err());
    }

    #[test]
    fn density_of_four_nodes_two_edges() {
        let adj = Adjacency::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let g = Graph::new(adj, vec![0; 4], 1, 0).unwrap();
        let ds = GraphDataset::new("one", vec![g], 1, 1).unwrap();
        let stats = dataset_stats(&ds, None).unwrap();
        assert_eq!(stats.avg_density, 0.125);
        assert_eq!(stats.avg_edges, 2.0);
    }

    #[test]
    fn stats_against_self_are_zero() {
        let ds = balanced(10);
        let stats = dataset_stats(&ds, Some(&ds)).unwrap();
        assert_eq!(stats.delta_edges_pct, Some(0.0));
        assert_eq!(stats.delta_density_pct, Some(0.0));
    }

    #[test]
    fn stats_reference_cardinality_mismatch() {
        assert!(dataset_stats(&balanced(10), Some(&balanced(12))).is_err());
    }

    #[test]
    fn split_sizes_and_stratification() {
        let ds = balanced(100);
        let out = split_dataset(&ds, [0.8, 0.1, 0.1], &mut seeded_rng(7)).unwrap();
        let s = out.split().unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        for part in [&s.train, &s.val, &s.test] {
            let ones = part.iter().filter(|&&i| ds.graphs[i].label() == 1).count();
            let zeros = part.len() - ones;
            assert!(ones.abs_diff(zeros) <= 1, "{ones} vs {zeros}");
        }
    }

    #[test]
    fn split_uneven_classes_hits_exact_totals() {
        let graphs = (0..100)
            .map(|i| Graph::new(Adjacency::empty(1), vec![0], 1, i % 3).unwrap())
            .collect();
        let ds = GraphDataset::new("three", graphs, 3, 1).unwrap();
        let out = split_dataset(&ds, [0.8, 0.1, 0.1], &mut seeded_rng(1)).unwrap();
        let s = out.split().unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = balanced(40);
        let a = split_dataset(&ds, [0.8, 0.1, 0.1], &mut seeded_rng(3)).unwrap();
        let b = split_dataset(&ds, [0.8, 0.1, 0.1], &mut seeded_rng(3)).unwrap();
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let mut graphs: Vec<Graph> = (0..10)
            .map(|_| Graph::new(Adjacency::empty(1), vec![0], 1, 0).unwrap())
            .collect();
        graphs.push(Graph::new(Adjacency::empty(1), vec![0], 1, 1).unwrap());
        let ds = GraphDataset::new("tiny", graphs, 2, 1).unwrap();
        assert_eq!(
            split_dataset(&ds, [0.8, 0.1, 0.1], &mut seeded_rng(0)),
            Err(Error::ClassTooSmall { class: 1, count: 1 })
        );
    }

    #[test]
    fn permutation_preserves_counts() {
        let g = path3();
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.edge_count(), 2);
        assert!(p.has_edge(2, 0) && p.has_edge(0, 1));
        assert_eq!(p.feature_classes(), &[1, 0, 0]);
    }
}

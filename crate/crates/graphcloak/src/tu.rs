//! TU benchmark text format.
//!
//! A dataset `NAME` is a directory holding
//!
//! | file | content |
//! |------|---------|
//! | `NAME_A.txt` | one `u, v` pair of 1-indexed global node ids per line |
//! | `NAME_graph_indicator.txt` | line `i` holds the 1-indexed graph of node `i` |
//! | `NAME_graph_labels.txt` | line `g` holds the label of graph `g` |
//! | `NAME_node_labels.txt` | optional; line `i` holds the label of node `i` |
//!
//! The reader accepts `u,v` and `u, v`, symmetrises and deduplicates edges,
//! drops self-loops and remaps labels to a contiguous range. The writer emits
//! `u,v` with both orientations plus a `NAME_meta.json` sidecar so that
//! [`read_dataset`] restores a dataset exactly, including its split and
//! feature dimension.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use graphcloak_core::graph::{Adjacency, Graph, GraphDataset, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Context as _, Error, Result};

pub const DEFAULT_DEGREE_CAP: usize = 64;
const META_FORMAT: &str = "graphcloak-tu-meta";
const META_VERSION: u32 = 1;

/// How node features are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FeaturePolicy {
    /// One-hot node labels; falls back to degree features with the default
    /// cap when the dataset has no node-label file.
    NodeLabels,
    /// One-hot node degree, degrees above `cap` share the last bucket.
    #[serde(rename = "degree-onehot")]
    DegreeOneHot { cap: usize },
}

impl FeaturePolicy {
    pub fn parse(s: &str, cap: usize) -> Option<Self> {
        match s {
            "node-labels" => Some(FeaturePolicy::NodeLabels),
            "degree" | "degree-onehot" => Some(FeaturePolicy::DegreeOneHot { cap }),
            _ => None,
        }
    }
}

fn file(root: &Path, name: &str, suffix: &str) -> PathBuf {
    root.join(format!("{name}_{suffix}.txt"))
}

fn read_text(path: &Path, mandatory: bool) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            if mandatory {
                Err(Error::MissingFile(path.to_path_buf()))
            } else {
                Ok(None)
            }
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

fn parse_ints(path: &Path, text: &str, per_line: usize) -> Result<Vec<Vec<i64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.len() != per_line {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {per_line} comma-separated values, found {}", tokens.len()),
            });
        }
        let mut row = Vec::with_capacity(per_line);
        for t in tokens {
            row.push(t.parse::<i64>().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                message: format!("non-integer token {t:?}"),
            })?);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_column(path: &Path, mandatory: bool) -> Result<Option<Vec<i64>>> {
    match read_text(path, mandatory)? {
        None => Ok(None),
        Some(text) => Ok(Some(parse_ints(path, &text, 1)?.into_iter().map(|r| r[0]).collect())),
    }
}

/// Maps arbitrary integer ids to `0..k` in ascending order.
fn remap(values: &[i64]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<i64, usize> = values
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    (values.iter().map(|v| ids[v]).collect(), ids.len())
}

struct RawDataset {
    /// Per graph: global node ids (0-indexed) in file order.
    members: Vec<Vec<usize>>,
    /// Per graph: local edges.
    edges: Vec<Vec<(usize, usize)>>,
    graph_labels: Vec<i64>,
    node_labels: Option<Vec<i64>>,
}

fn read_raw(root: &Path, name: &str) -> Result<RawDataset> {
    let a_path = file(root, name, "A");
    let ind_path = file(root, name, "graph_indicator");
    let lab_path = file(root, name, "graph_labels");
    let a_text = read_text(&a_path, true)?.unwrap_or_default();
    let indicator = read_column(&ind_path, true)?.unwrap_or_default();
    let graph_labels = read_column(&lab_path, true)?.unwrap_or_default();
    let node_labels = read_column(&file(root, name, "node_labels"), false)?;
    let graphs = graph_labels.len();

    let mut members = vec![Vec::new(); graphs];
    let mut local = Vec::with_capacity(indicator.len());
    for (node, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > graphs {
            return Err(Error::Parse {
                file: ind_path.clone(),
                line: node + 1,
                message: format!("graph id {gid} outside 1..={graphs}"),
            });
        }
        let g = gid as usize - 1;
        local.push((g, members[g].len()));
        members[g].push(node);
    }
    if let Some(labels) = &node_labels {
        if labels.len() != indicator.len() {
            return Err(Error::Dataset(format!(
                "{} node labels for {} nodes",
                labels.len(),
                indicator.len()
            )));
        }
    }
    let mut edges = vec![Vec::new(); graphs];
    for (i, pair) in parse_ints(&a_path, &a_text, 2)?.into_iter().enumerate() {
        let mut ends = [0usize; 2];
        for (k, &id) in pair.iter().enumerate() {
            if id < 1 || id as usize > indicator.len() {
                return Err(Error::Parse {
                    file: a_path.clone(),
                    line: i + 1,
                    message: format!("node {id} outside 1..={}", indicator.len()),
                });
            }
            ends[k] = id as usize - 1;
        }
        let ((gu, u), (gv, v)) = (local[ends[0]], local[ends[1]]);
        if gu != gv {
            return Err(Error::Parse {
                file: a_path.clone(),
                line: i + 1,
                message: format!(
                    "edge ({}, {}) joins graph {} and graph {}",
                    pair[0],
                    pair[1],
                    gu + 1,
                    gv + 1
                ),
            });
        }
        if u != v {
            edges[gu].push((u, v));
        }
    }
    Ok(RawDataset {
        members,
        edges,
        graph_labels,
        node_labels,
    })
}

/// Loads `root/NAME_*.txt`.
pub fn load_tu_dataset(root: &Path, name: &str, policy: FeaturePolicy) -> Result<GraphDataset> {
    let raw = read_raw(root, name).context(|| format!("loading {name} from {}", root.display()))?;
    let (labels, class_count) = remap(&raw.graph_labels);
    let policy = match (policy, &raw.node_labels) {
        (FeaturePolicy::NodeLabels, None) => FeaturePolicy::DegreeOneHot { cap: DEFAULT_DEGREE_CAP },
        (p, _) => p,
    };

    let mut adjacencies = Vec::with_capacity(raw.members.len());
    for (g, (members, edges)) in raw.members.iter().zip(&raw.edges).enumerate() {
        let adj = Adjacency::from_edges(members.len(), edges.iter().copied())
            .map_err(Error::from)
            .context(|| format!("graph {}", g + 1))?;
        adjacencies.push(adj);
    }
    let (features, feature_dim): (Vec<Vec<usize>>, usize) = match policy {
        FeaturePolicy::NodeLabels => {
            let (mapped, dim) = remap(raw.node_labels.as_deref().unwrap_or_default());
            (raw.members.iter().map(|m| m.iter().map(|&v| mapped[v]).collect()).collect(), dim)
        }
        FeaturePolicy::DegreeOneHot { cap } => {
            let degrees: Vec<Vec<usize>> = adjacencies
                .iter()
                .map(|a| (0..a.node_count()).map(|v| a.degree(v).min(cap)).collect())
                .collect();
            let dim = degrees.iter().flatten().copied().max().unwrap_or(0) + 1;
            (degrees, dim)
        }
    };
    let mut graphs = Vec::with_capacity(adjacencies.len());
    for (g, ((adj, feats), label)) in adjacencies.into_iter().zip(features).zip(labels).enumerate() {
        graphs.push(
            Graph::new(adj, feats, feature_dim, label)
                .map_err(Error::from)
                .context(|| format!("graph {} of {name}", g + 1))?,
        );
    }
    Ok(GraphDataset::new(name, graphs, class_count, feature_dim)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format: String,
    version: u32,
    name: String,
    class_count: usize,
    feature_dim: usize,
    split: Option<SplitRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitRecord {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl From<&Split> for SplitRecord {
    fn from(s: &Split) -> Self {
        Self {
            train: s.train.clone(),
            val: s.val.clone(),
            test: s.test.clone(),
        }
    }
}

impl From<SplitRecord> for Split {
    fn from(s: SplitRecord) -> Self {
        Split {
            train: s.train,
            val: s.val,
            test: s.test,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `ds` as `dir/NAME_*.txt` plus the meta sidecar. Returns the
/// written files in a fixed order.
pub fn write_dataset(ds: &GraphDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &ds.name;
    let (mut a, mut ind, mut labels, mut nodes) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0;
    for (g, graph) in ds.graphs.iter().enumerate() {
        for (u, v) in graph.adjacency().edges() {
            a.push_str(&format!("{},{}\n{},{}\n", offset + u + 1, offset + v + 1, offset + v + 1, offset + u + 1));
        }
        for &f in graph.feature_classes() {
            ind.push_str(&format!("{}\n", g + 1));
            nodes.push_str(&format!("{f}\n"));
        }
        labels.push_str(&format!("{}\n", graph.label()));
        offset += graph.node_count();
    }
    let meta = Meta {
        format: META_FORMAT.into(),
        version: META_VERSION,
        name: name.clone(),
        class_count: ds.class_count,
        feature_dim: ds.feature_dim,
        split: ds.split.as_ref().map(SplitRecord::from),
    };
    let files = [
        (file(dir, name, "A"), a),
        (file(dir, name, "graph_indicator"), ind),
        (file(dir, name, "graph_labels"), labels),
        (file(dir, name, "node_labels"), nodes),
        (dir.join(format!("{name}_meta.json")), serde_json::to_string_pretty(&meta)? + "\n"),
    ];
    for (path, contents) in &files {
        write_file(path, contents)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Reads a dataset written by [`write_dataset`]: labels and node labels are
/// taken verbatim and the split is restored.
pub fn read_dataset(dir: &Path, name: &str) -> Result<GraphDataset> {
    let meta_path = dir.join(format!("{name}_meta.json"));
    let text = read_text(&meta_path, true)?.unwrap_or_default();
    let meta: Meta = serde_json::from_str(&text)?;
    if meta.format != META_FORMAT || meta.version != META_VERSION {
        return Err(Error::Format {
            what: "dataset meta",
            message: format!("unsupported {} v{}", meta.format, meta.version),
        });
    }
    let raw = read_raw(dir, name)?;
    let node_labels = raw.node_labels.ok_or_else(|| Error::MissingFile(file(dir, name, "node_labels")))?;
    let as_index = |v: i64, bound: usize, what: &str| -> Result<usize> {
        usize::try_from(v)
            .ok()
            .filter(|&x| x < bound)
            .ok_or_else(|| Error::Dataset(format!("{what} {v} outside 0..{bound}")))
    };
    let mut graphs = Vec::with_capacity(raw.members.len());
    for (g, (members, edges)) in raw.members.iter().zip(&raw.edges).enumerate() {
        let adj = Adjacency::from_edges(members.len(), edges.iter().copied())?;
        let feats = members
            .iter()
            .map(|&v| as_index(node_labels[v], meta.feature_dim, "node label"))
            .collect::<Result<Vec<_>>>()?;
        let label = as_index(raw.graph_labels[g], meta.class_count, "graph label")?;
        graphs.push(Graph::new(adj, feats, meta.feature_dim, label)?);
    }
    let ds = GraphDataset::new(meta.name, graphs, meta.class_count, meta.feature_dim)?;
    match meta.split {
        Some(s) => Ok(ds.with_split(s.into())?),
        None => Ok(ds),
    }
}

/// The single dataset name stored in `dir`, found via its meta sidecar.
pub fn dataset_name_in(dir: &Path) -> Result<String> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let file_name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file_name.strip_suffix("_meta.json") {
            names.push(stem.to_owned());
        }
    }
    match names.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(Error::Dataset(format!("no *_meta.json in {}", dir.display()))),
        _ => Err(Error::Dataset(format!("several datasets in {}", dir.display()))),
    }
}

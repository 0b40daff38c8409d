//! Message-passing graph classifiers with exact gradients.
//!
//! A model is three convolution layers of width 32, global mean pooling and
//! a one-hidden-layer MLP head. All parameters live in one flat vector
//! described by a [`ParamInfo`] layout so optimisers and checkpoints can
//! treat them uniformly.

mod engine;
mod loss;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::graph::Graph;
use crate::matrix::{MatRef, Matrix};
use crate::{Error, Result, Rng};

pub use engine::{Forward, ForwardCache};
pub use loss::{cross_entropy, predict, softmax};

pub const HIDDEN: usize = 32;
pub const LAYERS: usize = 3;
pub const GIN_HEAD_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arch {
    Gcn,
    Gin,
    Sage,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Gcn, Arch::Gin, Arch::Sage];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Gin => "gin",
            Arch::Sage => "sage",
        }
    }

    pub fn parse(s: &str) -> Option<Arch> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Some(Arch::Gcn),
            "gin" => Some(Arch::Gin),
            "sage" | "graphsage" => Some(Arch::Sage),
            _ => None,
        }
    }

    fn blocks_per_layer(self) -> usize {
        match self {
            Arch::Gcn => 2,
            Arch::Gin => 5,
            Arch::Sage => 3,
        }
    }
}

impl core::fmt::Display for Arch {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a GCN layer combines the normalised messages of a neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    /// `Â Z W`, the standard GCN propagation.
    Sum,
    /// `(|N(v)|+1) · SoftMedian({Â_vu (ZW)_u})`; equals `Sum` as T → ∞.
    SoftMedian { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
    /// Dropout on the head's hidden layer, train mode only.
    pub dropout: f64,
    pub aggregation: Aggregation,
}

impl ModelSpec {
    /// Standard configuration: 3 layers × 32, head dropout 0.5 for GIN only.
    pub fn new(arch: Arch, input_dim: usize, classes: usize) -> Self {
        Self {
            arch,
            input_dim,
            hidden: HIDDEN,
            layers: LAYERS,
            classes,
            dropout: if arch == Arch::Gin { GIN_HEAD_DROPOUT } else { 0.0 },
            aggregation: Aggregation::Sum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.layers == 0 || self.classes == 0 {
            return Err(Error::InvalidArgument(format!("degenerate model shape {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if let Aggregation::SoftMedian { temperature } = self.aggregation {
            if self.arch != Arch::Gcn {
                return Err(Error::Unsupported("soft-median aggregation is only defined for GCN"));
            }
            if !(temperature > 0.0) {
                return Err(Error::InvalidArgument(format!("soft-median temperature {temperature} must be > 0")));
            }
        }
        Ok(())
    }

    /// Parameter blocks in storage order.
    pub fn layout(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            out.push(ParamInfo {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        };
        let h = self.hidden;
        for k in 0..self.layers {
            let fin = if k == 0 { self.input_dim } else { h };
            match self.arch {
                Arch::Gcn => {
                    push(format!("conv{k}.weight"), fin, h);
                    push(format!("conv{k}.bias"), 1, h);
                }
                Arch::Gin => {
                    push(format!("conv{k}.eps"), 1, 1);
                    push(format!("conv{k}.mlp1.weight"), fin, h);
                    push(format!("conv{k}.mlp1.bias"), 1, h);
                    push(format!("conv{k}.mlp2.weight"), h, h);
                    push(format!("conv{k}.mlp2.bias"), 1, h);
                }
                Arch::Sage => {
                    push(format!("conv{k}.self.weight"), fin, h);
                    push(format!("conv{k}.neigh.weight"), fin, h);
                    push(format!("conv{k}.bias"), 1, h);
                }
            }
        }
        push("head.hidden.weight".into(), h, h);
        push("head.hidden.bias".into(), 1, h);
        push("head.out.weight".into(), h, self.classes);
        push("head.out.bias".into(), 1, self.classes);
        out
    }
}

/// One named parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn is_weight(&self) -> bool {
        self.name.ends_with(".weight")
    }
}

/// Dense continuous inputs of one forward pass.
///
/// `adjacency` is the relaxation differentiated by structural cloaking;
/// `features` is the relaxation used by feature PGD.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub adjacency: Matrix,
    pub features: Matrix,
}

impl GraphInput {
    pub fn from_graph(g: &Graph) -> Self {
        Self {
            adjacency: g.adjacency().to_matrix(),
            features: g.feature_matrix(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        let n = self.features.rows();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if self.features.cols() != input_dim {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: input_dim,
                found: self.features.cols(),
            });
        }
        if self.adjacency.rows() != n || self.adjacency.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "adjacency size",
                expected: n,
                found: self.adjacency.rows(),
            });
        }
        if !self.features.is_finite() {
            return Err(Error::NonFinite("node features"));
        }
        if !self.adjacency.is_finite() {
            return Err(Error::NonFinite("adjacency"));
        }
        Ok(())
    }
}

/// Forward-pass behaviour. Dropout only runs in `Train`.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

/// Gradients of the cross-entropy loss of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub loss: f64,
    /// Same layout as [`GnnModel::params`].
    pub d_theta: Vec<f64>,
    /// `∂L/∂X`, shape `|V| × d`.
    pub d_features: Matrix,
    /// Symmetrised `∂L/∂A`: entry `(u, v)` is `∂L/∂A_uv + ∂L/∂A_vu`, so it is
    /// the derivative for flipping the undirected pair. Diagonal is zero.
    /// All zeros for the soft-median variant, which does not differentiate
    /// through the adjacency.
    pub d_adjacency: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    spec: ModelSpec,
    layout: Vec<ParamInfo>,
    theta: Vec<f64>,
    version: u64,
}

impl GnnModel {
    /// Glorot-uniform weights, zero biases, `ε = 0` for GIN.
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let total = layout.last().map_or(0, |p| p.offset + p.len());
        let mut theta = alloc::vec![0.0; total];
        for p in &layout {
            if p.is_weight() {
                let bound = libm::sqrt(6.0 / (p.rows + p.cols) as f64);
                for x in &mut theta[p.range()] {
                    *x = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self {
            spec,
            layout,
            theta,
            version: 0,
        })
    }

    /// Rebuilds a model from stored parameters (e.g. a checkpoint).
    pub fn from_params(spec: ModelSpec, theta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let total = layout.last().map_or(0, |p| p.offset + p.len());
        if theta.len() != total {
            return Err(Error::DimensionMismatch {
                what: "parameter count",
                expected: total,
                found: theta.len(),
            });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            spec,
            layout,
            theta,
            version: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[ParamInfo] {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    /// Mutable parameters. Any forward cache taken before this call becomes
    /// stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Switches the GCN neighbourhood aggregation, keeping parameters.
    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Result<Self> {
        self.spec.aggregation = aggregation;
        self.spec.validate()?;
        self.version += 1;
        Ok(self)
    }

    fn block(&self, index: usize) -> MatRef<'_> {
        let p = &self.layout[index];
        MatRef::new(p.rows, p.cols, &self.theta[p.range()])
    }

    fn layer_block(&self, layer: usize, slot: usize) -> MatRef<'_> {
        self.block(layer * self.spec.arch.blocks_per_layer() + slot)
    }

    fn head_block(&self, slot: usize) -> MatRef<'_> {
        self.block(self.spec.layers * self.spec.arch.blocks_per_layer() + slot)
    }

    /// Eval-mode logits for a graph.
    pub fn logits(&self, g: &Graph) -> Result<Vec<f64>> {
        Ok(self.forward(&GraphInput::from_graph(g), Mode::Eval)?.logits)
    }

    /// Eval-mode loss and full gradients in one call.
    pub fn gradients(&self, input: &GraphInput, label: usize) -> Result<GradientBundle> {
        let fwd = self.forward(input, Mode::Eval)?;
        self.backward(&fwd, label)
    }

    /// Eval-mode loss only.
    pub fn loss(&self, input: &GraphInput, label: usize) -> Result<f64> {
        let fwd = self.forward(input, Mode::Eval)?;
        cross_entropy(&fwd.logits, label)
    }
}

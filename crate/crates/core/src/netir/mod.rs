//! Layer-graph IR: typed layers, shape inference and exact parameter/MAC
//! accounting.
//!
//! Batch size is fixed at one everywhere. BatchNorm and ReLU are flags on a
//! convolution, never nodes of their own, and contribute no MACs.

mod text;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use text::{from_text, to_text};

/// Index of a node inside its [`LayerGraph`].
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("node `{node}`: {reason}")]
    Shape { node: String, reason: String },
    #[error("node `{node}`: {reason}")]
    Structure { node: String, reason: String },
    #[error("graph `{0}` has no inferred shapes; run infer_shapes first")]
    NotInferred(String),
    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("layer `{node}`: {reason}")]
    Field { node: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    #[serde(rename = "c")]
    pub channels: u64,
    #[serde(rename = "h")]
    pub height: u64,
    #[serde(rename = "w")]
    pub width: u64,
}

impl TensorShape {
    pub const fn new(channels: u64, height: u64, width: u64) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn elements(&self) -> u64 {
        self.channels * self.height * self.width
    }

    pub fn is_positive(&self) -> bool {
        self.channels >= 1 && self.height >= 1 && self.width >= 1
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Conv {
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub stride: u64,
    pub pad_h: u64,
    pub pad_w: u64,
    pub out_channels: u64,
    pub groups: u64,
    pub bias: bool,
    pub batchnorm: bool,
    pub relu: bool,
}

impl Conv {
    /// Square `k`×`k` convolution with BN+ReLU, no bias, one group.
    pub fn square(k: u64, stride: u64, pad: u64, out_channels: u64) -> Self {
        Self::new(k, k, stride, pad, pad, out_channels)
    }

    pub fn new(
        kernel_h: u64,
        kernel_w: u64,
        stride: u64,
        pad_h: u64,
        pad_w: u64,
        out_channels: u64,
    ) -> Self {
        Self {
            kernel_h,
            kernel_w,
            stride,
            pad_h,
            pad_w,
            out_channels,
            groups: 1,
            bias: false,
            batchnorm: true,
            relu: true,
        }
    }

    pub fn with_groups(mut self, groups: u64) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_batchnorm(mut self, batchnorm: bool) -> Self {
        self.batchnorm = batchnorm;
        self
    }

    pub fn with_relu(mut self, relu: bool) -> Self {
        self.relu = relu;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pool {
    pub kind: PoolKind,
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub stride: u64,
    pub pad_h: u64,
    pub pad_w: u64,
}

impl Pool {
    pub fn max(kernel: u64, stride: u64) -> Self {
        Self {
            kind: PoolKind::Max,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            pad_h: 0,
            pad_w: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    Conv(Conv),
    FullyConnected {
        out_features: u64,
        bias: bool,
    },
    Pool(Pool),
    GlobalAvgPool,
    Add,
    /// Channel concatenation of two or more inputs with equal spatial size.
    Concat,
}

impl LayerKind {
    /// Short tag used in the network file and in reports.
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv(_) => "conv",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::Pool(_) => "pool",
            LayerKind::GlobalAvgPool => "gap",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
        }
    }

    pub fn is_compute(&self) -> bool {
        matches!(self, LayerKind::Conv(_) | LayerKind::FullyConnected { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: LayerKind,
    pub inputs: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGraph {
    name: String,
    input_shape: TensorShape,
    nodes: Vec<Node>,
    shapes: Option<Vec<TensorShape>>,
}

/// A diagnostic produced by [`LayerGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub node: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.reason)
    }
}

/// Per-layer accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LayerCounts {
    pub params: u64,
    pub macs: u64,
    /// Elements touched by pooling / add layers; zero for conv and FC.
    pub elementwise_ops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    pub total: u64,
    pub per_layer: Vec<(String, u64)>,
}

impl LayerGraph {
    /// Builds a graph from raw parts. No checks are made; use
    /// [`validate`](Self::validate) or [`infer_shapes`](Self::infer_shapes).
    pub fn from_parts(name: impl Into<String>, input_shape: TensorShape, nodes: Vec<Node>) -> Self {
        Self {
            name: name.into(),
            input_shape,
            nodes,
            shapes: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> TensorShape {
        self.input_shape
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_inferred(&self) -> bool {
        self.shapes.is_some()
    }

    /// Output shape of `id`, if shapes have been inferred.
    pub fn shape(&self, id: NodeId) -> Option<TensorShape> {
        self.shapes.as_ref().map(|s| s[id])
    }

    pub fn output_shape(&self) -> Option<TensorShape> {
        self.shapes.as_ref().and_then(|s| s.last().copied())
    }

    /// Shapes of the predecessors of `id`, in input order.
    pub fn input_shapes(&self, id: NodeId) -> Result<Vec<TensorShape>, NetError> {
        let shapes = self.inferred()?;
        Ok(self.nodes[id].inputs.iter().map(|&p| shapes[p]).collect())
    }

    fn inferred(&self) -> Result<&[TensorShape], NetError> {
        self.shapes
            .as_deref()
            .ok_or_else(|| NetError::NotInferred(self.name.clone()))
    }

    /// Annotates every node with its output shape.
    ///
    /// Requires a structurally valid graph in topological order; the first
    /// offending node is reported.
    pub fn infer_shapes(mut self) -> Result<Self, NetError> {
        if let Some(d) = self.structural_diagnostics().into_iter().next() {
            return Err(NetError::Structure {
                node: d.node,
                reason: d.reason,
            });
        }
        let mut shapes: Vec<TensorShape> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<TensorShape> = node.inputs.iter().map(|&p| shapes[p]).collect();
            let out = output_shape(&node.kind, self.input_shape, &ins).map_err(|reason| {
                NetError::Shape {
                    node: node.id.clone(),
                    reason,
                }
            })?;
            shapes.push(out);
        }
        self.shapes = Some(shapes);
        Ok(self)
    }

    /// Every invariant violation, each tagged with the node it concerns.
    /// An empty list means the graph is well formed and shape inference
    /// succeeds.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = self.structural_diagnostics();
        if !diags.is_empty() {
            return diags;
        }
        // Tolerant shape pass: a failing node is reported once and its
        // dependents are skipped instead of cascading.
        let mut shapes: Vec<Option<TensorShape>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Option<Vec<TensorShape>> = node.inputs.iter().map(|&p| shapes[p]).collect();
            let out = match ins {
                None => None,
                Some(ins) => match output_shape(&node.kind, self.input_shape, &ins) {
                    Ok(s) => Some(s),
                    Err(reason) => {
                        diags.push(Diagnostic {
                            node: node.id.clone(),
                            reason,
                        });
                        None
                    }
                },
            };
            shapes.push(out);
        }
        diags
    }

    fn structural_diagnostics(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut push = |node: &str, reason: String| {
            diags.push(Diagnostic {
                node: node.to_string(),
                reason,
            })
        };

        if !self.input_shape.is_positive() {
            push(
                &self.name,
                format!("input shape {} has a zero dimension", self.input_shape),
            );
        }

        let mut seen = HashSet::new();
        for node in &self.nodes {
            if !seen.insert(node.id.as_str()) {
                push(&node.id, "duplicate node id".into());
            }
        }

        let n_inputs = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, LayerKind::Input))
            .count();
        if n_inputs != 1 {
            push(
                &self.name,
                format!("expected exactly one input node, found {n_inputs}"),
            );
        }

        let mut dangling = false;
        for node in &self.nodes {
            for &p in &node.inputs {
                if p >= self.nodes.len() {
                    push(&node.id, format!("predecessor index {p} out of range"));
                    dangling = true;
                }
            }
            let arity_ok = match node.kind {
                LayerKind::Input => node.inputs.is_empty(),
                LayerKind::Add => node.inputs.len() == 2,
                LayerKind::Concat => node.inputs.len() >= 2,
                _ => node.inputs.len() == 1,
            };
            if !arity_ok {
                let want = match node.kind {
                    LayerKind::Input => "no predecessors",
                    LayerKind::Add => "exactly 2 predecessors",
                    LayerKind::Concat => "at least 2 predecessors",
                    _ => "exactly 1 predecessor",
                };
                push(
                    &node.id,
                    format!(
                        "{} layer needs {want}, has {}",
                        node.kind.tag(),
                        node.inputs.len()
                    ),
                );
            }
        }
        if dangling {
            return diags;
        }

        if let Some(cycle_node) = self.find_cycle() {
            push(&self.nodes[cycle_node].id, "graph contains a cycle".into());
            return diags;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(&p) = node.inputs.iter().find(|&&p| p >= i) {
                push(
                    &node.id,
                    format!(
                        "predecessor `{}` appears later in the node list (not topological order)",
                        self.nodes[p].id
                    ),
                );
            }
        }
        diags
    }

    /// Returns a node lying on a cycle, if any.
    fn find_cycle(&self) -> Option<NodeId> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut marks = vec![Mark::New; self.nodes.len()];
        for root in 0..self.nodes.len() {
            if marks[root] != Mark::New {
                continue;
            }
            // Iterative DFS over predecessor edges.
            let mut stack = vec![(root, 0usize)];
            marks[root] = Mark::Active;
            while let Some(&mut (n, ref mut next)) = stack.last_mut() {
                if let Some(&p) = self.nodes[n].inputs.get(*next) {
                    *next += 1;
                    match marks[p] {
                        Mark::Active => return Some(p),
                        Mark::New => {
                            marks[p] = Mark::Active;
                            stack.push((p, 0));
                        }
                        Mark::Done => {}
                    }
                } else {
                    marks[n] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Per-node counts, in node order.
    pub fn layer_counts(&self) -> Result<Vec<LayerCounts>, NetError> {
        let shapes = self.inferred()?;
        Ok(self
            .nodes
            .iter()
            .map(|node| {
                let ins: Vec<TensorShape> = node.inputs.iter().map(|&p| shapes[p]).collect();
                layer_counts(&node.kind, &ins)
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<Breakdown, NetError> {
        self.breakdown(|c| c.params)
    }

    pub fn mac_count(&self) -> Result<Breakdown, NetError> {
        self.breakdown(|c| c.macs)
    }

    fn breakdown(&self, pick: impl Fn(&LayerCounts) -> u64) -> Result<Breakdown, NetError> {
        let counts = self.layer_counts()?;
        let per_layer: Vec<(String, u64)> = self
            .nodes
            .iter()
            .zip(&counts)
            .map(|(n, c)| (n.id.clone(), pick(c)))
            .collect();
        Ok(Breakdown {
            total: per_layer.iter().map(|(_, v)| v).sum(),
            per_layer,
        })
    }

    /// Looks a node up by its string id.
    pub fn find(&self, id: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.id == id)
    }
}

fn conv_out_dim(input: u64, pad: u64, kernel: u64, stride: u64) -> Result<u64, String> {
    if stride == 0 {
        return Err("stride must be positive".into());
    }
    if kernel == 0 {
        return Err("kernel must be positive".into());
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(format!(
            "kernel {kernel} larger than padded input extent {padded}; output dimension would be non-positive"
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output shape of a single layer given its input shapes.
pub fn output_shape(
    kind: &LayerKind,
    graph_input: TensorShape,
    inputs: &[TensorShape],
) -> Result<TensorShape, String> {
    let first = || {
        inputs
            .first()
            .copied()
            .ok_or_else(|| "missing input".to_string())
    };
    let out = match kind {
        LayerKind::Input => graph_input,
        LayerKind::Conv(c) => {
            let x = first()?;
            if c.groups == 0 {
                return Err("groups must be positive".into());
            }
            if c.out_channels == 0 {
                return Err("out_channels must be positive".into());
            }
            if x.channels % c.groups != 0 {
                return Err(format!(
                    "in_channels {} not divisible by groups {}",
                    x.channels, c.groups
                ));
            }
            if c.out_channels % c.groups != 0 {
                return Err(format!(
                    "out_channels {} not divisible by groups {}",
                    c.out_channels, c.groups
                ));
            }
            TensorShape::new(
                c.out_channels,
                conv_out_dim(x.height, c.pad_h, c.kernel_h, c.stride)?,
                conv_out_dim(x.width, c.pad_w, c.kernel_w, c.stride)?,
            )
        }
        LayerKind::FullyConnected { out_features, .. } => {
            if *out_features == 0 {
                return Err("out_features must be positive".into());
            }
            first()?;
            TensorShape::new(*out_features, 1, 1)
        }
        LayerKind::Pool(p) => {
            let x = first()?;
            TensorShape::new(
                x.channels,
                conv_out_dim(x.height, p.pad_h, p.kernel_h, p.stride)?,
                conv_out_dim(x.width, p.pad_w, p.kernel_w, p.stride)?,
            )
        }
        LayerKind::GlobalAvgPool => TensorShape::new(first()?.channels, 1, 1),
        LayerKind::Add => {
            let (a, b) = match inputs {
                [a, b] => (*a, *b),
                _ => return Err("add needs exactly two inputs".into()),
            };
            if a != b {
                return Err(format!("add operand shapes differ: {a} vs {b}"));
            }
            a
        }
        LayerKind::Concat => {
            let a = first()?;
            if let Some(b) = inputs
                .iter()
                .find(|s| s.height != a.height || s.width != a.width)
            {
                return Err(format!("concat operand spatial sizes differ: {a} vs {b}"));
            }
            TensorShape::new(inputs.iter().map(|s| s.channels).sum(), a.height, a.width)
        }
    };
    if !out.is_positive() {
        return Err(format!("computed output shape {out} has a zero dimension"));
    }
    Ok(out)
}

/// Parameters, MACs and elementwise ops of one layer.
///
/// Conv params are `kh·kw·(ci/g)·co`, plus `co` for a bias and `2·co` for
/// BatchNorm scale and shift (running statistics are not parameters).
pub fn layer_counts(kind: &LayerKind, inputs: &[TensorShape]) -> LayerCounts {
    let x = inputs.first().copied().unwrap_or(TensorShape::new(0, 0, 0));
    match kind {
        LayerKind::Input | LayerKind::Concat => LayerCounts::default(),
        LayerKind::Conv(c) => {
            let ci_g = x.channels / c.groups;
            let weights = c.kernel_h * c.kernel_w * ci_g * c.out_channels;
            let ho = (x.height + 2 * c.pad_h - c.kernel_h) / c.stride + 1;
            let wo = (x.width + 2 * c.pad_w - c.kernel_w) / c.stride + 1;
            LayerCounts {
                params: weights
                    + if c.bias { c.out_channels } else { 0 }
                    + if c.batchnorm { 2 * c.out_channels } else { 0 },
                macs: ho * wo * weights,
                elementwise_ops: 0,
            }
        }
        LayerKind::FullyConnected { out_features, bias } => {
            let flat = x.elements();
            LayerCounts {
                params: flat * out_features + if *bias { *out_features } else { 0 },
                macs: flat * out_features,
                elementwise_ops: 0,
            }
        }
        LayerKind::Pool(p) => {
            let ho = (x.height + 2 * p.pad_h - p.kernel_h) / p.stride + 1;
            let wo = (x.width + 2 * p.pad_w - p.kernel_w) / p.stride + 1;
            LayerCounts {
                elementwise_ops: x.channels * ho * wo * p.kernel_h * p.kernel_w,
                ..Default::default()
            }
        }
        LayerKind::GlobalAvgPool => LayerCounts {
            elementwise_ops: x.elements(),
            ..Default::default()
        },
        LayerKind::Add => LayerCounts {
            elementwise_ops: x.elements(),
            ..Default::default()
        },
    }
}

/// Incremental graph construction in topological order.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: String,
    input_shape: TensorShape,
    nodes: Vec<Node>,
}

impl GraphBuilder {
    /// Starts a graph whose first node is the input node `"input"`.
    pub fn new(name: impl Into<String>, input_shape: TensorShape) -> Self {
        Self {
            name: name.into(),
            input_shape,
            nodes: vec![Node {
                id: "input".into(),
                kind: LayerKind::Input,
                inputs: vec![],
            }],
        }
    }

    pub const INPUT: NodeId = 0;

    pub fn add(&mut self, id: impl Into<String>, kind: LayerKind, inputs: &[NodeId]) -> NodeId {
        self.nodes.push(Node {
            id: id.into(),
            kind,
            inputs: inputs.to_vec(),
        });
        self.nodes.len() - 1
    }

    pub fn conv(&mut self, id: impl Into<String>, conv: Conv, input: NodeId) -> NodeId {
        self.add(id, LayerKind::Conv(conv), &[input])
    }

    pub fn last(&self) -> NodeId {
        self.nodes.len() - 1
    }

    /// Finishes and infers shapes.
    pub fn build(self) -> Result<LayerGraph, NetError> {
        LayerGraph::from_parts(self.name, self.input_shape, self.nodes).infer_shapes()
    }
}

//! Network file format.
//!
//! A JSON document with `name`, `input` (`{c,h,w}`) and `layers`, an array in
//! node order. Each layer names its predecessors by id. Unknown fields, and
//! fields that do not belong to the layer's kind, are rejected. The writer
//! emits one layer per line with a fixed key order, so output is
//! byte-identical across round-trips.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Conv, LayerGraph, LayerKind, NetError, Node, NodeId, Pool, PoolKind, TensorShape};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    name: String,
    input: TensorShape,
    layers: Vec<RawLayer>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    id: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<[u64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pad: Option<[u64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_channels: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bn: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relu: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pool_kind: Option<PoolKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_features: Option<u64>,
    #[serde(default)]
    inputs: Vec<String>,
}

impl RawLayer {
    /// Names of the kind-specific fields that are present.
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! chk {
            ($($f:ident),*) => { $( if self.$f.is_some() { v.push(stringify!($f)); } )* };
        }
        chk!(
            kernel,
            stride,
            pad,
            out_channels,
            groups,
            bias,
            bn,
            relu,
            pool_kind,
            out_features
        );
        v
    }

    fn from_node(node: &Node, graph: &LayerGraph) -> Self {
        let mut raw = RawLayer {
            id: node.id.clone(),
            kind: node.kind.tag().to_string(),
            inputs: node
                .inputs
                .iter()
                .map(|&p| graph.nodes[p].id.clone())
                .collect(),
            ..Default::default()
        };
        match node.kind {
            LayerKind::Conv(c) => {
                raw.kernel = Some([c.kernel_h, c.kernel_w]);
                raw.stride = Some(c.stride);
                raw.pad = Some([c.pad_h, c.pad_w]);
                raw.out_channels = Some(c.out_channels);
                raw.groups = Some(c.groups);
                raw.bias = Some(c.bias);
                raw.bn = Some(c.batchnorm);
                raw.relu = Some(c.relu);
            }
            LayerKind::FullyConnected { out_features, bias } => {
                raw.out_features = Some(out_features);
                raw.bias = Some(bias);
            }
            LayerKind::Pool(p) => {
                raw.pool_kind = Some(p.kind);
                raw.kernel = Some([p.kernel_h, p.kernel_w]);
                raw.stride = Some(p.stride);
                raw.pad = Some([p.pad_h, p.pad_w]);
            }
            LayerKind::Input | LayerKind::GlobalAvgPool | LayerKind::Add | LayerKind::Concat => {}
        }
        raw
    }

    fn to_kind(&self) -> Result<LayerKind, NetError> {
        let err = |reason: String| NetError::Field {
            node: self.id.clone(),
            reason,
        };
        let (allowed, required): (&[&str], &[&str]) = match self.kind.as_str() {
            "input" | "gap" | "add" | "concat" => (&[], &[]),
            "conv" => (
                &[
                    "kernel",
                    "stride",
                    "pad",
                    "out_channels",
                    "groups",
                    "bias",
                    "bn",
                    "relu",
                ],
                &["kernel", "stride", "pad", "out_channels"],
            ),
            "fc" => (&["out_features", "bias"], &["out_features"]),
            "pool" => (
                &["pool_kind", "kernel", "stride", "pad"],
                &["pool_kind", "kernel", "stride"],
            ),
            other => return Err(err(format!("unknown layer kind `{other}`"))),
        };
        let present = self.present();
        if let Some(extra) = present.iter().find(|f| !allowed.contains(f)) {
            return Err(err(format!(
                "field `{extra}` is not valid for a {} layer",
                self.kind
            )));
        }
        if let Some(missing) = required.iter().find(|f| !present.contains(f)) {
            return Err(err(format!(
                "{} layer is missing required field `{missing}`",
                self.kind
            )));
        }
        Ok(match self.kind.as_str() {
            "input" => LayerKind::Input,
            "gap" => LayerKind::GlobalAvgPool,
            "add" => LayerKind::Add,
            "concat" => LayerKind::Concat,
            "conv" => {
                let [kernel_h, kernel_w] = self.kernel.unwrap_or_default();
                let [pad_h, pad_w] = self.pad.unwrap_or_default();
                LayerKind::Conv(Conv {
                    kernel_h,
                    kernel_w,
                    stride: self.stride.unwrap_or_default(),
                    pad_h,
                    pad_w,
                    out_channels: self.out_channels.unwrap_or_default(),
                    groups: self.groups.unwrap_or(1),
                    bias: self.bias.unwrap_or(false),
                    batchnorm: self.bn.unwrap_or(false),
                    relu: self.relu.unwrap_or(false),
                })
            }
            "fc" => LayerKind::FullyConnected {
                out_features: self.out_features.unwrap_or_default(),
                bias: self.bias.unwrap_or(false),
            },
            "pool" => {
                let [kernel_h, kernel_w] = self.kernel.unwrap_or_default();
                let [pad_h, pad_w] = self.pad.unwrap_or_default();
                LayerKind::Pool(Pool {
                    kind: self.pool_kind.unwrap_or(PoolKind::Max),
                    kernel_h,
                    kernel_w,
                    stride: self.stride.unwrap_or_default(),
                    pad_h,
                    pad_w,
                })
            }
            _ => unreachable!("kind checked above"),
        })
    }
}

/// Serializes a graph to the canonical network document.
pub fn to_text(graph: &LayerGraph) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!(
        "  \"name\": {},\n",
        serde_json::to_string(&graph.name).expect("string serializes")
    ));
    out.push_str(&format!(
        "  \"input\": {},\n",
        serde_json::to_string(&graph.input_shape).expect("shape serializes")
    ));
    out.push_str("  \"layers\": [\n");
    let n = graph.nodes.len();
    for (i, node) in graph.nodes.iter().enumerate() {
        let raw = RawLayer::from_node(node, graph);
        out.push_str("    ");
        out.push_str(&serde_json::to_string(&raw).expect("layer serializes"));
        out.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    out.push_str("  ]\n}\n");
    out
}

/// Parses a network document. The result is not shape-inferred; predecessor
/// ids may refer forward, so invalid orderings and cycles are representable
/// and left to [`LayerGraph::validate`].
pub fn from_text(doc: &str) -> Result<LayerGraph, NetError> {
    let parsed: Document = serde_json::from_str(doc).map_err(|e| NetError::Parse {
        line: e.line(),
        column: e.column(),
        reason: e.to_string(),
    })?;

    let mut index: HashMap<&str, NodeId> = HashMap::new();
    for (i, raw) in parsed.layers.iter().enumerate() {
        if index.insert(raw.id.as_str(), i).is_some() {
            return Err(NetError::Field {
                node: raw.id.clone(),
                reason: "duplicate layer id".into(),
            });
        }
    }

    let mut nodes = Vec::with_capacity(parsed.layers.len());
    for raw in &parsed.layers {
        let kind = raw.to_kind()?;
        let inputs = raw
            .inputs
            .iter()
            .map(|name| {
                index
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| NetError::Field {
                        node: raw.id.clone(),
                        reason: format!("unknown input `{name}`"),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        nodes.push(Node {
            id: raw.id.clone(),
            kind,
            inputs,
        });
    }
    Ok(LayerGraph::from_parts(parsed.name, parsed.input, nodes))
}

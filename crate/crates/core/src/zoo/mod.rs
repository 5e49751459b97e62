//! Network builders: the SqueezeNext family and the baseline CNNs it is
//! compared against.

mod baselines;
mod squeezenext;

use serde::Serialize;
use thiserror::Error;

use crate::netir::{LayerGraph, NetError};

pub use baselines::{alexnet, mobilenet_v1, squeezenet_v1_0, squeezenet_v1_1};
pub use squeezenext::{build_squeezenext, SqueezeNextSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZooError {
    #[error("unknown network `{0}`")]
    UnknownNetwork(String),
    #[error("invalid SqueezeNext configuration: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Which group of published reference numbers a catalog entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSet {
    /// Baseline and deeper 1.0× SqueezeNext models alongside AlexNet.
    Baseline,
    /// 1.5× / 2.0× wide models alongside MobileNet.
    Wide,
    /// Networks with simulated hardware results and MAC counts.
    Hardware,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    /// Published parameter count.
    pub expected_params: Option<u64>,
    /// Published MAC count.
    pub expected_macs: Option<u64>,
    pub source_table: ReferenceSet,
}

#[derive(Debug, Clone, Copy)]
enum Recipe {
    SqNxt {
        width: f64,
        depth: [usize; 4],
        conv1_kernel: u64,
        groups: u64,
    },
    AlexNet,
    SqueezeNet10,
    SqueezeNet11,
    MobileNet,
}

const BASE: [usize; 4] = [6, 6, 8, 1];
const D34: [usize; 4] = [8, 10, 13, 1];
const D44: [usize; 4] = [10, 14, 17, 1];
const V3: [usize; 4] = [4, 8, 8, 1];
const V4: [usize; 4] = [2, 10, 8, 1];
const V5: [usize; 4] = [2, 4, 14, 1];

const fn sq(width: f64, depth: [usize; 4], conv1_kernel: u64, groups: u64) -> Recipe {
    Recipe::SqNxt {
        width,
        depth,
        conv1_kernel,
        groups,
    }
}

const fn m(v: f64) -> Option<u64> {
    Some((v * 1e6 + 0.5) as u64)
}

struct Row {
    entry: CatalogEntry,
    recipe: Recipe,
}

macro_rules! row {
    ($name:expr, $desc:expr, $params:expr, $macs:expr, $src:ident, $recipe:expr) => {
        Row {
            entry: CatalogEntry {
                name: $name,
                description: $desc,
                expected_params: $params,
                expected_macs: $macs,
                source_table: ReferenceSet::$src,
            },
            recipe: $recipe,
        }
    };
}

const ROWS: &[Row] = &[
    row!(
        "1.0-SqNxt-23",
        "baseline SqueezeNext, depth [6,6,8,1], 7x7 conv1",
        m(0.72),
        m(282.0),
        Hardware,
        sq(1.0, BASE, 7, 1)
    ),
    row!(
        "1.0-G-SqNxt-23",
        "baseline with group-2 1x1 convolutions in every block",
        m(0.54),
        None,
        Baseline,
        sq(1.0, BASE, 7, 2)
    ),
    row!(
        "1.0-SqNxt-23v2",
        "baseline with a 5x5 conv1",
        m(0.74),
        m(228.0),
        Hardware,
        sq(1.0, BASE, 5, 1)
    ),
    row!(
        "1.0-SqNxt-23v3",
        "v2 with depth [4,8,8,1]",
        m(0.74),
        m(228.0),
        Hardware,
        sq(1.0, V3, 5, 1)
    ),
    row!(
        "1.0-SqNxt-23v4",
        "v2 with depth [2,10,8,1]",
        m(0.77),
        m(228.0),
        Hardware,
        sq(1.0, V4, 5, 1)
    ),
    row!(
        "1.0-SqNxt-23v5",
        "v2 with depth [2,4,14,1]",
        m(0.94),
        m(228.0),
        Hardware,
        sq(1.0, V5, 5, 1)
    ),
    row!(
        "1.0-SqNxt-34",
        "34-module SqueezeNext, depth [8,10,13,1]",
        m(1.0),
        None,
        Baseline,
        sq(1.0, D34, 7, 1)
    ),
    row!(
        "1.0-SqNxt-44",
        "44-module SqueezeNext, depth [10,14,17,1]",
        m(1.2),
        None,
        Baseline,
        sq(1.0, D44, 7, 1)
    ),
    row!(
        "1.5-SqNxt-23",
        "1.5x wide baseline",
        m(1.4),
        None,
        Wide,
        sq(1.5, BASE, 7, 1)
    ),
    row!(
        "1.5-SqNxt-34",
        "1.5x wide 34-module",
        m(2.1),
        None,
        Wide,
        sq(1.5, D34, 7, 1)
    ),
    row!(
        "1.5-SqNxt-44",
        "1.5x wide 44-module",
        m(2.6),
        None,
        Wide,
        sq(1.5, D44, 7, 1)
    ),
    row!(
        "2.0-SqNxt-23",
        "2x wide baseline",
        m(2.4),
        m(749.0),
        Hardware,
        sq(2.0, BASE, 7, 1)
    ),
    row!(
        "2.0-SqNxt-34",
        "2x wide 34-module",
        m(3.8),
        None,
        Wide,
        sq(2.0, D34, 7, 1)
    ),
    row!(
        "2.0-SqNxt-44",
        "2x wide 44-module",
        m(4.4),
        None,
        Wide,
        sq(2.0, D44, 7, 1)
    ),
    row!(
        "2.0-SqNxt-23v4",
        "2x wide v4",
        m(2.56),
        m(708.0),
        Hardware,
        sq(2.0, V4, 5, 1)
    ),
    row!(
        "2.0-SqNxt-23v5",
        "2x wide v5",
        m(3.23),
        m(708.0),
        Hardware,
        sq(2.0, V5, 5, 1)
    ),
    row!(
        "AlexNet",
        "AlexNet (227 input, grouped conv2/4/5)",
        m(60.9),
        m(725.0),
        Hardware,
        Recipe::AlexNet
    ),
    row!(
        "SqueezeNet-v1.0",
        "SqueezeNet v1.0 (227 input)",
        m(1.2),
        m(837.0),
        Hardware,
        Recipe::SqueezeNet10
    ),
    row!(
        "SqueezeNet-v1.1",
        "SqueezeNet v1.1 (227 input)",
        m(1.2),
        m(352.0),
        Hardware,
        Recipe::SqueezeNet11
    ),
    row!(
        "MobileNet-1.0-224",
        "MobileNet v1, width 1.0, 224 input",
        m(4.2),
        m(574.0),
        Hardware,
        Recipe::MobileNet
    ),
];

/// The closed catalog of buildable networks with their published numbers.
pub fn catalog() -> Vec<CatalogEntry> {
    ROWS.iter().map(|r| r.entry.clone()).collect()
}

pub fn variant_names() -> impl Iterator<Item = &'static str> {
    ROWS.iter().map(|r| r.entry.name)
}

pub fn lookup(name: &str) -> Option<CatalogEntry> {
    ROWS.iter()
        .find(|r| r.entry.name == name)
        .map(|r| r.entry.clone())
}

/// Builds a catalog network by name. The result is shape-inferred.
pub fn build_variant(name: &str) -> Result<LayerGraph, ZooError> {
    let row = ROWS
        .iter()
        .find(|r| r.entry.name == name)
        .ok_or_else(|| ZooError::UnknownNetwork(name.to_string()))?;
    match row.recipe {
        Recipe::SqNxt {
            width,
            depth,
            conv1_kernel,
            groups,
        } => build_squeezenext(
            name,
            &SqueezeNextSpec {
                width_mult: width,
                depth_dist: depth.to_vec(),
                conv1_kernel,
                group_size: groups,
                ..SqueezeNextSpec::default()
            },
        ),
        Recipe::AlexNet => Ok(alexnet()?),
        Recipe::SqueezeNet10 => Ok(squeezenet_v1_0()?),
        Recipe::SqueezeNet11 => Ok(squeezenet_v1_1()?),
        Recipe::MobileNet => Ok(mobilenet_v1()?),
    }
}

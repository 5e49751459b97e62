//! Per-layer simulation, network aggregation and comparison tables.

pub mod report;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataflow::{
    elementwise_report, mode_report, pick_mode, AccessCounts, ConvGeometry, DataflowMode, ModeCost,
};
use crate::error::SimError;
use crate::hwmodel::{AcceleratorConfig, EnergyCostTable};
use crate::netir::{LayerGraph, LayerKind, TensorShape};
use crate::tiler::{elementwise_traffic, search_geometry, TilingPlan, TrafficBreakdown};
use crate::zoo::build_variant;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub mac: f64,
    pub rf: f64,
    pub buffer: f64,
    pub dram: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn add(&mut self, o: &EnergyBreakdown) {
        self.mac += o.mac;
        self.rf += o.rf;
        self.buffer += o.buffer;
        self.dram += o.dram;
        self.total += o.total;
    }
}

pub fn energy_of(
    acc: &AccessCounts,
    table: &EnergyCostTable,
    element_bytes: u64,
) -> EnergyBreakdown {
    let mac = acc.macs as f64 * table.mac;
    let rf = acc.rf_accesses as f64 * table.rf_access;
    let buffer = acc.buffer_accesses as f64 * table.buffer_access;
    let dram = acc.dram_bytes as f64 / element_bytes as f64 * table.dram_access;
    EnergyBreakdown {
        mac,
        rf,
        buffer,
        dram,
        total: mac + rf + buffer + dram,
    }
}

/// `(dram_cycles, total_cycles)`: compute and transfers overlap, each
/// transfer pays the full latency.
pub fn combine_cycles(compute: u64, t: &TrafficBreakdown, cfg: &AcceleratorConfig) -> (u64, u64) {
    let dram = (t.total_bytes as f64 / cfg.dram_bytes_per_cycle).ceil() as u64;
    (
        dram,
        compute.max(dram) + t.n_transfers * cfg.dram_latency_cycles,
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ModePolicy {
    #[default]
    Auto,
    Force(DataflowMode),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerResult {
    pub layer: String,
    pub kind: &'static str,
    /// Merge key: kind, kernel, stride, channels, groups and output shape.
    pub signature: String,
    pub mode: DataflowMode,
    pub plan: Option<TilingPlan>,
    pub tiles: u64,
    pub compute_cycles: u64,
    pub dram_cycles: u64,
    pub total_cycles: u64,
    /// Dense MACs.
    pub macs: u64,
    /// Dense MACs per total cycle.
    pub efficiency: f64,
    pub utilized_pes: f64,
    pub accesses: AccessCounts,
    pub traffic: TrafficBreakdown,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkResult {
    pub network: String,
    pub config: String,
    pub layers: Vec<LayerResult>,
    pub total_cycles: u64,
    pub total_energy: f64,
    pub energy: EnergyBreakdown,
    pub total_macs: u64,
    pub params: u64,
}

impl NetworkResult {
    /// Dense MACs per cycle over the whole network.
    pub fn efficiency(&self) -> f64 {
        ratio(self.total_macs, self.total_cycles)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerResult> {
        self.layers.iter().find(|l| l.layer == name)
    }

    /// `(macs, cycles)` summed over the layers selected by `keep`.
    pub fn aggregate(&self, keep: impl Fn(&LayerResult) -> bool) -> (u64, u64) {
        self.layers
            .iter()
            .filter(|l| keep(l))
            .fold((0, 0), |(m, c), l| (m + l.macs, c + l.total_cycles))
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn signature(kind: &LayerKind, inputs: &[TensorShape], out: TensorShape) -> String {
    let cin = inputs.first().map_or(0, |s| s.channels);
    let shape = format!("{}x{}x{}", out.channels, out.height, out.width);
    match kind {
        LayerKind::Conv(c) => format!(
            "conv {}x{}/{} {}->{} g{} {}",
            c.kernel_h, c.kernel_w, c.stride, cin, c.out_channels, c.groups, shape
        ),
        LayerKind::Pool(p) => format!(
            "pool {}x{}/{} {}->{} g1 {}",
            p.kernel_h, p.kernel_w, p.stride, cin, out.channels, shape
        ),
        other => format!(
            "{} 0x0/0 {}->{} g1 {}",
            other.tag(),
            cin,
            out.channels,
            shape
        ),
    }
}

struct ModeEval {
    report: crate::dataflow::CycleReport,
    plan: TilingPlan,
    traffic: TrafficBreakdown,
    dram_cycles: u64,
    total_cycles: u64,
    energy: EnergyBreakdown,
}

fn evaluate(
    g: &ConvGeometry,
    mode: DataflowMode,
    cfg: &AcceleratorConfig,
) -> Result<ModeEval, SimError> {
    let mut report = mode_report(mode, g, cfg);
    let (plan, traffic) = search_geometry(g, report.compute_cycles, cfg)?;
    report.accesses.dram_bytes = traffic.total_bytes;
    let (dram_cycles, total_cycles) = combine_cycles(report.compute_cycles, &traffic, cfg);
    let energy = energy_of(&report.accesses, &cfg.energy, cfg.element_bytes);
    Ok(ModeEval {
        report,
        plan,
        traffic,
        dram_cycles,
        total_cycles,
        energy,
    })
}

/// Simulates one layer. The input node is free and reported with zero
/// cost.
pub fn simulate_layer(
    name: &str,
    kind: &LayerKind,
    inputs: &[TensorShape],
    output: TensorShape,
    cfg: &AcceleratorConfig,
    policy: ModePolicy,
) -> Result<LayerResult, SimError> {
    let sig = signature(kind, inputs, output);
    match kind {
        LayerKind::Input => Ok(LayerResult {
            layer: name.to_string(),
            kind: kind.tag(),
            signature: sig,
            mode: DataflowMode::Os,
            plan: None,
            tiles: 0,
            compute_cycles: 0,
            dram_cycles: 0,
            total_cycles: 0,
            macs: 0,
            efficiency: 0.0,
            utilized_pes: 0.0,
            accesses: AccessCounts::default(),
            traffic: TrafficBreakdown::default(),
            energy: EnergyBreakdown::default(),
        }),
        LayerKind::Conv(_) | LayerKind::FullyConnected { .. } => {
            let g = ConvGeometry::of(kind, inputs[0])?;
            let named = |e: SimError| match e {
                SimError::Infeasible {
                    required,
                    available,
                    ..
                } => SimError::Infeasible {
                    layer: name.to_string(),
                    required,
                    available,
                },
                other => other,
            };
            let (mode, e) = match policy {
                ModePolicy::Force(m) => (m, evaluate(&g, m, cfg).map_err(named)?),
                ModePolicy::Auto => {
                    let ws = evaluate(&g, DataflowMode::Ws, cfg).map_err(named)?;
                    let os = evaluate(&g, DataflowMode::Os, cfg).map_err(named)?;
                    let cost = |e: &ModeEval| ModeCost {
                        total_cycles: e.total_cycles,
                        energy: e.energy.total,
                    };
                    match pick_mode(cost(&ws), cost(&os)) {
                        DataflowMode::Ws => (DataflowMode::Ws, ws),
                        DataflowMode::Os => (DataflowMode::Os, os),
                    }
                }
            };
            let macs = g.dense_macs();
            Ok(LayerResult {
                layer: name.to_string(),
                kind: kind.tag(),
                signature: sig,
                mode,
                tiles: e.plan.tile_count(&g),
                plan: Some(e.plan),
                compute_cycles: e.report.compute_cycles,
                dram_cycles: e.dram_cycles,
                total_cycles: e.total_cycles,
                macs,
                efficiency: ratio(macs, e.total_cycles),
                utilized_pes: e.report.utilized_pes,
                accesses: e.report.accesses,
                traffic: e.traffic,
                energy: e.energy,
            })
        }
        _ => {
            let mut r = elementwise_report(kind, inputs, cfg)?;
            let traffic = elementwise_traffic(kind, inputs, output, cfg);
            r.accesses.dram_bytes = traffic.total_bytes;
            let (dram_cycles, total_cycles) = combine_cycles(r.compute_cycles, &traffic, cfg);
            let energy = energy_of(&r.accesses, &cfg.energy, cfg.element_bytes);
            Ok(LayerResult {
                layer: name.to_string(),
                kind: kind.tag(),
                signature: sig,
                mode: DataflowMode::Os,
                plan: None,
                tiles: traffic.n_transfers / (inputs.len() as u64 + 1),
                compute_cycles: r.compute_cycles,
                dram_cycles,
                total_cycles,
                macs: 0,
                efficiency: 0.0,
                utilized_pes: 0.0,
                accesses: r.accesses,
                traffic,
                energy,
            })
        }
    }
}

/// Simulates every layer (in parallel) and sums the results in topological
/// order. The input node is omitted from the per-layer list.
pub fn simulate_network(
    graph: &LayerGraph,
    cfg: &AcceleratorConfig,
    policy: ModePolicy,
) -> Result<NetworkResult, SimError> {
    cfg.check()?;
    let params = graph.param_count()?.total;
    let jobs: Vec<(usize, Vec<TensorShape>, TensorShape)> = graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| !matches!(n.kind, LayerKind::Input))
        .map(|(i, _)| {
            let ins = graph.input_shapes(i)?;
            let out = graph
                .shape(i)
                .ok_or_else(|| crate::netir::NetError::NotInferred(graph.name().into()))?;
            Ok((i, ins, out))
        })
        .collect::<Result<_, crate::netir::NetError>>()?;
    let layers = jobs
        .par_iter()
        .map(|(i, ins, out)| {
            let n = graph.node(*i);
            simulate_layer(&n.id, &n.kind, ins, *out, cfg, policy)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut energy = EnergyBreakdown::default();
    let (mut total_cycles, mut total_macs) = (0, 0);
    for l in &layers {
        energy.add(&l.energy);
        total_cycles += l.total_cycles;
        total_macs += l.macs;
    }
    Ok(NetworkResult {
        network: graph.name().to_string(),
        config: cfg.label(),
        layers,
        total_cycles,
        total_energy: energy.total,
        energy,
        total_macs,
        params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub name: String,
    pub params: u64,
    pub macs: u64,
    pub total_cycles: u64,
    /// Cycles relative to the fastest network of the set.
    pub normalized_time: f64,
    pub total_energy: f64,
}

/// Compares catalog networks on one configuration, rows in the given order.
pub fn compare<S: AsRef<str> + Sync>(
    names: &[S],
    cfg: &AcceleratorConfig,
) -> Result<Vec<CompareRow>, SimError> {
    let graphs = names
        .iter()
        .map(|n| build_variant(n.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    compare_graphs(&graphs, cfg)
}

pub fn compare_graphs(
    graphs: &[LayerGraph],
    cfg: &AcceleratorConfig,
) -> Result<Vec<CompareRow>, SimError> {
    let results = graphs
        .par_iter()
        .map(|g| simulate_network(g, cfg, ModePolicy::Auto))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compare_results(&results))
}

pub fn compare_results(results: &[NetworkResult]) -> Vec<CompareRow> {
    let fastest = results.iter().map(|r| r.total_cycles).min().unwrap_or(0);
    results
        .iter()
        .map(|r| CompareRow {
            name: r.network.clone(),
            params: r.params,
            macs: r.total_macs,
            total_cycles: r.total_cycles,
            normalized_time: ratio(r.total_cycles, fastest),
            total_energy: r.total_energy,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigurePoint {
    pub name: String,
    /// Layers summed into this point.
    pub count: usize,
    pub cycles: u64,
    pub macs: u64,
    pub efficiency: f64,
}

/// Per-layer series. With `merge`, layers sharing a signature are summed
/// into the position of their first occurrence.
pub fn figure_data(result: &NetworkResult, merge: bool) -> Vec<FigurePoint> {
    let mut points: Vec<FigurePoint> = Vec::new();
    let mut index: std::collections::HashMap<&str, usize> = Default::default();
    for l in &result.layers {
        let slot = if merge {
            index.get(l.signature.as_str()).copied()
        } else {
            None
        };
        match slot {
            Some(i) => {
                let p = &mut points[i];
                p.count += 1;
                p.cycles += l.total_cycles;
                p.macs += l.macs;
            }
            None => {
                index.insert(&l.signature, points.len());
                points.push(FigurePoint {
                    name: l.layer.clone(),
                    count: 1,
                    cycles: l.total_cycles,
                    macs: l.macs,
                    efficiency: 0.0,
                });
            }
        }
    }
    for p in &mut points {
        p.efficiency = ratio(p.macs, p.cycles);
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::preset;
    use crate::netir::{Conv, GraphBuilder};

    fn cfg(name: &str, sparsity: f64) -> AcceleratorConfig {
        AcceleratorConfig {
            weight_sparsity: sparsity,
            ..preset(name).unwrap()
        }
    }

    #[test]
    fn small_pointwise_layer() {
        let kind = LayerKind::Conv(Conv::square(1, 1, 0, 32));
        let s = TensorShape::new(32, 4, 4);
        let r = simulate_layer(
            "l",
            &kind,
            &[s],
            s,
            &cfg("16x16_128KB", 0.0),
            ModePolicy::Auto,
        )
        .unwrap();
        assert_eq!(r.mode, DataflowMode::Ws);
        assert_eq!(r.compute_cycles, 64);
        assert_eq!(r.accesses.dram_bytes, 4096);
        assert_eq!(r.dram_cycles, 256);
        assert_eq!(r.total_cycles, 556);
        let os = simulate_layer(
            "l",
            &kind,
            &[s],
            s,
            &cfg("16x16_128KB", 0.0),
            ModePolicy::Force(DataflowMode::Os),
        )
        .unwrap();
        assert_eq!(os.compute_cycles, 1024);
    }

    #[test]
    fn elementwise_add() {
        let s = TensorShape::new(64, 14, 14);
        let r = simulate_layer(
            "a",
            &LayerKind::Add,
            &[s, s],
            s,
            &cfg("8x8_32KB", 0.4),
            ModePolicy::Auto,
        )
        .unwrap();
        assert_eq!(r.compute_cycles, 196);
        assert_eq!(r.mode, DataflowMode::Os);
        assert_eq!(r.macs, 0);
    }

    #[test]
    fn energy_example() {
        let acc = AccessCounts {
            macs: 100,
            rf_accesses: 300,
            buffer_accesses: 50,
            dram_bytes: 20,
            elementwise_ops: 0,
        };
        let e = energy_of(&acc, &EnergyCostTable::default(), 2);
        assert_eq!(e.total, 2700.0);
        assert_eq!(e.mac + e.rf + e.buffer + e.dram, e.total);
        assert_eq!(
            energy_of(&AccessCounts::default(), &EnergyCostTable::default(), 2).total,
            0.0
        );
    }

    #[test]
    fn input_only_graph_is_free() {
        let g = GraphBuilder::new("empty", TensorShape::new(3, 8, 8))
            .build()
            .unwrap();
        let r = simulate_network(&g, &cfg("8x8_32KB", 0.4), ModePolicy::Auto).unwrap();
        assert_eq!(r.total_cycles, 0);
        assert_eq!(r.total_energy, 0.0);
        assert!(r.layers.is_empty());
    }

    #[test]
    fn singleton_compare_is_unit() {
        let rows = compare(&["1.0-SqNxt-23"], &cfg("8x8_32KB", 0.4)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].normalized_time, 1.0);
    }
}

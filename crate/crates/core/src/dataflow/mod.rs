//! Compute-cycle and access-count models for the two PE-array dataflows.
//!
//! Weight stationary (WS): the array holds a `P_r × P_c` block of one
//! kernel tap, rows over input channels and columns over output channels,
//! and performs one matrix-vector step per output pixel. Partial sums across
//! rows are combined inside the array at no extra cost.
//!
//! Output stationary (WS's counterpart, single output channel / multiple
//! output pixels): every PE owns one pixel of a `P_r × P_c` output tile of a
//! single output channel and accumulates over `c, i, j`, skipping zero
//! weights. Groups run one after another in both modes.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::hwmodel::AcceleratorConfig;
use crate::netir::{layer_counts, LayerKind, TensorShape};
use crate::simrun::{combine_cycles, energy_of};
use crate::tiler::TrafficBreakdown;

pub use oracle::{oracle_cycles, WeightMask, ORACLE_MAC_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataflowMode {
    Ws,
    Os,
}

impl DataflowMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataflowMode::Ws => "ws",
            DataflowMode::Os => "os",
        }
    }
}

impl std::fmt::Display for DataflowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    /// MACs actually executed (after zero-weight skipping in OS mode).
    pub macs: u64,
    pub rf_accesses: u64,
    pub buffer_accesses: u64,
    pub dram_bytes: u64,
    pub elementwise_ops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleReport {
    pub mode: DataflowMode,
    pub compute_cycles: u64,
    pub accesses: AccessCounts,
    pub utilized_pes: f64,
}

/// Loop bounds of a convolution or fully-connected layer. FC layers are
/// 1×1 convolutions on a 1×1 input with the flattened input as channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub in_c: u64,
    pub in_h: u64,
    pub in_w: u64,
    pub out_c: u64,
    pub out_h: u64,
    pub out_w: u64,
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub stride: u64,
    pub pad_h: u64,
    pub pad_w: u64,
    pub groups: u64,
}

impl ConvGeometry {
    pub fn of(kind: &LayerKind, input: TensorShape) -> Result<Self, SimError> {
        match *kind {
            LayerKind::Conv(c) => Ok(Self {
                in_c: input.channels,
                in_h: input.height,
                in_w: input.width,
                out_c: c.out_channels,
                out_h: (input.height + 2 * c.pad_h - c.kernel_h) / c.stride + 1,
                out_w: (input.width + 2 * c.pad_w - c.kernel_w) / c.stride + 1,
                kernel_h: c.kernel_h,
                kernel_w: c.kernel_w,
                stride: c.stride,
                pad_h: c.pad_h,
                pad_w: c.pad_w,
                groups: c.groups,
            }),
            LayerKind::FullyConnected { out_features, .. } => Ok(Self {
                in_c: input.elements(),
                in_h: 1,
                in_w: 1,
                out_c: out_features,
                out_h: 1,
                out_w: 1,
                kernel_h: 1,
                kernel_w: 1,
                stride: 1,
                pad_h: 0,
                pad_w: 0,
                groups: 1,
            }),
            other => Err(SimError::UnsupportedLayer(other.tag())),
        }
    }

    /// Shorthand for tests and the oracle.
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        in_c: u64,
        out_c: u64,
        out_h: u64,
        out_w: u64,
        kernel_h: u64,
        kernel_w: u64,
        groups: u64,
    ) -> Self {
        Self {
            in_c,
            in_h: out_h + kernel_h - 1,
            in_w: out_w + kernel_w - 1,
            out_c,
            out_h,
            out_w,
            kernel_h,
            kernel_w,
            stride: 1,
            pad_h: 0,
            pad_w: 0,
            groups,
        }
    }

    pub fn in_per_group(&self) -> u64 {
        self.in_c / self.groups
    }

    pub fn out_per_group(&self) -> u64 {
        self.out_c / self.groups
    }

    /// Weights in one filter (one output channel).
    pub fn filter_len(&self) -> u64 {
        self.kernel_h * self.kernel_w * self.in_per_group()
    }

    pub fn weight_count(&self) -> u64 {
        self.filter_len() * self.out_c
    }

    pub fn out_pixels(&self) -> u64 {
        self.out_h * self.out_w
    }

    pub fn dense_macs(&self) -> u64 {
        self.out_pixels() * self.weight_count()
    }

    pub fn input_elements(&self) -> u64 {
        self.in_c * self.in_h * self.in_w
    }

    pub fn output_elements(&self) -> u64 {
        self.out_c * self.out_pixels()
    }
}

/// Non-zero weights left in a filter of `n` weights at the given sparsity:
/// `ceil(n·(1 − s))`, with the zero count rounded down.
pub fn nonzero_weights(n: u64, sparsity: f64) -> u64 {
    let zeros = ((n as f64) * sparsity + 1e-9).floor() as u64;
    n - zeros.min(n)
}

pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

pub fn ws_report(g: &ConvGeometry, cfg: &AcceleratorConfig) -> CycleReport {
    let (pr, pc) = (cfg.pe_rows, cfg.pe_cols);
    let cig = g.in_per_group();
    let cog = g.out_per_group();
    let per_group =
        g.kernel_h * g.kernel_w * ceil_div(cig, pr) * ceil_div(cog, pc) * g.out_pixels();
    let compute = g.groups * per_group;
    let macs = g.dense_macs();
    let weight_reads = g.weight_count();
    let input_reads = compute * pr.min(cig);
    let psum = 2 * compute * pc.min(cog);
    CycleReport {
        mode: DataflowMode::Ws,
        compute_cycles: compute,
        accesses: AccessCounts {
            macs,
            rf_accesses: 3 * macs,
            buffer_accesses: weight_reads + input_reads + psum,
            dram_bytes: 0,
            elementwise_ops: 0,
        },
        utilized_pes: utilization(macs, compute, cfg),
    }
}

pub fn os_report(g: &ConvGeometry, cfg: &AcceleratorConfig) -> CycleReport {
    let inner = nonzero_weights(g.filter_len(), cfg.weight_sparsity);
    let tiles = ceil_div(g.out_h, cfg.pe_rows) * ceil_div(g.out_w, cfg.pe_cols);
    let compute = g.out_c * tiles * inner;
    let macs = g.output_elements() * inner;
    CycleReport {
        mode: DataflowMode::Os,
        compute_cycles: compute,
        accesses: AccessCounts {
            macs,
            rf_accesses: 3 * macs,
            // inputs: one per active PE per cycle; one broadcast weight per
            // cycle; each output written once
            buffer_accesses: macs + compute + g.output_elements(),
            dram_bytes: 0,
            elementwise_ops: 0,
        },
        utilized_pes: utilization(macs, compute, cfg),
    }
}

fn utilization(macs: u64, cycles: u64, cfg: &AcceleratorConfig) -> f64 {
    if cycles == 0 {
        0.0
    } else {
        macs as f64 / (cycles as f64 * cfg.pes() as f64)
    }
}

pub fn ws_cycles(
    kind: &LayerKind,
    input: TensorShape,
    cfg: &AcceleratorConfig,
) -> Result<CycleReport, SimError> {
    Ok(ws_report(&ConvGeometry::of(kind, input)?, cfg))
}

pub fn os_cycles(
    kind: &LayerKind,
    input: TensorShape,
    cfg: &AcceleratorConfig,
) -> Result<CycleReport, SimError> {
    Ok(os_report(&ConvGeometry::of(kind, input)?, cfg))
}

pub fn mode_report(mode: DataflowMode, g: &ConvGeometry, cfg: &AcceleratorConfig) -> CycleReport {
    match mode {
        DataflowMode::Ws => ws_report(g, cfg),
        DataflowMode::Os => os_report(g, cfg),
    }
}

/// Pooling, global pooling and elementwise add: `ceil(ops / PEs)` cycles
/// and two buffer accesses per element touched. Concat is free.
pub fn elementwise_report(
    kind: &LayerKind,
    inputs: &[TensorShape],
    cfg: &AcceleratorConfig,
) -> Result<CycleReport, SimError> {
    match kind {
        LayerKind::Pool(_) | LayerKind::GlobalAvgPool | LayerKind::Add | LayerKind::Concat => {}
        other => return Err(SimError::UnsupportedLayer(other.tag())),
    }
    let ops = layer_counts(kind, inputs).elementwise_ops;
    Ok(CycleReport {
        mode: DataflowMode::Os,
        compute_cycles: ceil_div(ops, cfg.pes()),
        accesses: AccessCounts {
            buffer_accesses: 2 * ops,
            elementwise_ops: ops,
            ..Default::default()
        },
        utilized_pes: 0.0,
    })
}

/// The quantities mode selection compares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCost {
    pub total_cycles: u64,
    pub energy: f64,
}

/// Fewer total cycles wins; ties go to lower energy, then to WS.
pub fn pick_mode(ws: ModeCost, os: ModeCost) -> DataflowMode {
    if os.total_cycles < ws.total_cycles
        || (os.total_cycles == ws.total_cycles && os.energy < ws.energy)
    {
        DataflowMode::Os
    } else {
        DataflowMode::Ws
    }
}

/// Chooses the faster mode for a layer given each mode's DRAM traffic.
pub fn select_mode(
    kind: &LayerKind,
    input: TensorShape,
    cfg: &AcceleratorConfig,
    ws_traffic: &TrafficBreakdown,
    os_traffic: &TrafficBreakdown,
) -> Result<(DataflowMode, CycleReport), SimError> {
    let g = ConvGeometry::of(kind, input)?;
    let cost = |mut r: CycleReport, t: &TrafficBreakdown| {
        r.accesses.dram_bytes = t.total_bytes;
        let (_, total) = combine_cycles(r.compute_cycles, t, cfg);
        (
            r,
            ModeCost {
                total_cycles: total,
                energy: energy_of(&r.accesses, &cfg.energy, cfg.element_bytes).total,
            },
        )
    };
    let (ws, ws_cost) = cost(ws_report(&g, cfg), ws_traffic);
    let (os, os_cost) = cost(os_report(&g, cfg), os_traffic);
    Ok(match pick_mode(ws_cost, os_cost) {
        DataflowMode::Ws => (DataflowMode::Ws, ws),
        DataflowMode::Os => (DataflowMode::Os, os),
    })
}

//! Global-buffer tiling of the `x/y/c/k` loops and the DRAM traffic each
//! plan implies.
//!
//! Groups form a fifth, always-outermost tile loop so that depthwise layers
//! can move many groups per transfer. A tensor is re-fetched once per
//! iteration of every inter-tile loop that sits outside its innermost
//! dependent loop and that it does not depend on.

use serde::{Deserialize, Serialize};

use crate::dataflow::{ceil_div, ConvGeometry};
use crate::error::SimError;
use crate::hwmodel::AcceleratorConfig;
use crate::netir::{LayerKind, TensorShape};
use crate::simrun::combine_cycles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopAxis {
    X,
    Y,
    C,
    K,
}

impl LoopAxis {
    pub const ALL: [LoopAxis; 4] = [LoopAxis::X, LoopAxis::Y, LoopAxis::C, LoopAxis::K];

    fn letter(self) -> char {
        match self {
            LoopAxis::X => 'x',
            LoopAxis::Y => 'y',
            LoopAxis::C => 'c',
            LoopAxis::K => 'k',
        }
    }
}

/// All 24 inter-tile loop orders, outermost first, in lexicographic order.
pub fn loop_orders() -> Vec<[LoopAxis; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in LoopAxis::ALL {
        for b in LoopAxis::ALL {
            for c in LoopAxis::ALL {
                for d in LoopAxis::ALL {
                    let o = [a, b, c, d];
                    if (0..4).all(|i| (i + 1..4).all(|j| o[i] != o[j])) {
                        out.push(o);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReloadFactors {
    pub input: u64,
    pub weight: u64,
    pub output: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TilingPlan {
    pub tile_x: u64,
    pub tile_y: u64,
    pub tile_c: u64,
    pub tile_k: u64,
    /// Groups per tile; 1 for ungrouped layers.
    pub tile_g: u64,
    /// Inter-tile loops, outermost first (the group loop encloses them all).
    pub loop_order: [LoopAxis; 4],
    pub reload: ReloadFactors,
}

impl TilingPlan {
    /// One tile covering the whole layer.
    pub fn identity(g: &ConvGeometry) -> Self {
        Self::new(
            g,
            g.out_w,
            g.out_h,
            g.in_per_group(),
            g.out_per_group(),
            g.groups,
            LoopAxis::ALL,
        )
    }

    /// Builds a plan and derives its reload factors. Tile sizes are clamped
    /// to the layer.
    pub fn new(
        g: &ConvGeometry,
        tile_x: u64,
        tile_y: u64,
        tile_c: u64,
        tile_k: u64,
        tile_g: u64,
        loop_order: [LoopAxis; 4],
    ) -> Self {
        let mut plan = Self {
            tile_x: tile_x.clamp(1, g.out_w),
            tile_y: tile_y.clamp(1, g.out_h),
            tile_c: tile_c.clamp(1, g.in_per_group()),
            tile_k: tile_k.clamp(1, g.out_per_group()),
            tile_g: tile_g.clamp(1, g.groups),
            loop_order,
            reload: ReloadFactors {
                input: 1,
                weight: 1,
                output: 1,
            },
        };
        plan.reload = reload_factors(&plan.trips(g), &loop_order);
        plan
    }

    pub fn trips(&self, g: &ConvGeometry) -> Trips {
        Trips {
            x: ceil_div(g.out_w, self.tile_x),
            y: ceil_div(g.out_h, self.tile_y),
            c: ceil_div(g.in_per_group(), self.tile_c),
            k: ceil_div(g.out_per_group(), self.tile_k),
            g: ceil_div(g.groups, self.tile_g),
        }
    }

    pub fn tile_count(&self, g: &ConvGeometry) -> u64 {
        let t = self.trips(g);
        t.x * t.y * t.c * t.k * t.g
    }

    pub fn order_string(&self) -> String {
        self.loop_order.iter().map(|a| a.letter()).collect()
    }

    /// Total order used to break cost ties.
    pub fn encoding(&self) -> PlanKey {
        (
            self.tile_g,
            self.tile_x,
            self.tile_y,
            self.tile_c,
            self.tile_k,
            self.loop_order,
        )
    }

    /// Compact form for reports, e.g. `g1 x8 y8 c16 k32 ykxc`.
    pub fn summary(&self) -> String {
        format!(
            "g{} x{} y{} c{} k{} {}",
            self.tile_g,
            self.tile_x,
            self.tile_y,
            self.tile_c,
            self.tile_k,
            self.order_string()
        )
    }
}

/// Inter-tile trip counts per loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trips {
    pub x: u64,
    pub y: u64,
    pub c: u64,
    pub k: u64,
    pub g: u64,
}

impl Trips {
    fn of(&self, a: LoopAxis) -> u64 {
        match a {
            LoopAxis::X => self.x,
            LoopAxis::Y => self.y,
            LoopAxis::C => self.c,
            LoopAxis::K => self.k,
        }
    }
}

fn reload_for(trips: &Trips, order: &[LoopAxis; 4], depends: impl Fn(LoopAxis) -> bool) -> u64 {
    // the group loop is outermost and every tensor depends on it
    let innermost = order.iter().rposition(|&a| depends(a)).unwrap_or(0);
    order[..innermost]
        .iter()
        .filter(|&&a| !depends(a))
        .map(|&a| trips.of(a))
        .product()
}

pub fn reload_factors(trips: &Trips, order: &[LoopAxis; 4]) -> ReloadFactors {
    use LoopAxis::*;
    ReloadFactors {
        input: reload_for(trips, order, |a| matches!(a, X | Y | C)),
        weight: reload_for(trips, order, |a| matches!(a, C | K)),
        output: reload_for(trips, order, |a| matches!(a, X | Y | K)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrafficBreakdown {
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
    pub total_bytes: u64,
    pub n_transfers: u64,
}

impl TrafficBreakdown {
    fn new(input_bytes: u64, weight_bytes: u64, output_bytes: u64, n_transfers: u64) -> Self {
        Self {
            input_bytes,
            weight_bytes,
            output_bytes,
            total_bytes: input_bytes + weight_bytes + output_bytes,
            n_transfers,
        }
    }
}

/// Input rows (or columns) read by the output tiles of size `tile` along one
/// axis: `(sum of extents, largest extent)`. Each tile reads the contiguous
/// range from its first receptive field up to the next tile's start, so
/// halos are charged in full and the whole input is always covered.
pub fn input_extents(
    out: u64,
    tile: u64,
    input: u64,
    kernel: u64,
    stride: u64,
    pad: u64,
) -> (u64, u64) {
    let (mut sum, mut max) = (0, 0);
    let mut a = 0;
    while a < out {
        let b = (a + tile).min(out);
        let lo = if a == 0 {
            0
        } else {
            (a * stride).saturating_sub(pad)
        };
        let hi = if b == out {
            input
        } else {
            (b * stride + kernel.saturating_sub(stride)).saturating_sub(pad)
        };
        let ext = hi.min(input).saturating_sub(lo.min(input));
        sum += ext;
        max = max.max(ext);
        a = b;
    }
    (sum, max)
}

/// Bytes needed to hold a whole layer: input, weights and output.
pub fn footprint(
    kind: &LayerKind,
    input: TensorShape,
    element_bytes: u64,
) -> Result<u64, SimError> {
    Ok(layer_footprint(
        &ConvGeometry::of(kind, input)?,
        element_bytes,
    ))
}

pub fn layer_footprint(g: &ConvGeometry, element_bytes: u64) -> u64 {
    element_bytes * (g.input_elements() + g.weight_count() + g.output_elements())
}

pub fn needs_tiling(g: &ConvGeometry, cfg: &AcceleratorConfig) -> bool {
    layer_footprint(g, cfg.element_bytes) > cfg.buffer_bytes
}

/// Working set of one tile, using the largest input extent per axis.
pub fn tile_footprint(g: &ConvGeometry, plan: &TilingPlan, element_bytes: u64) -> u64 {
    let (_, ext_x) = input_extents(g.out_w, plan.tile_x, g.in_w, g.kernel_w, g.stride, g.pad_w);
    let (_, ext_y) = input_extents(g.out_h, plan.tile_y, g.in_h, g.kernel_h, g.stride, g.pad_h);
    tile_bytes(g, plan, ext_x, ext_y, element_bytes)
}

fn tile_bytes(g: &ConvGeometry, p: &TilingPlan, ext_x: u64, ext_y: u64, eb: u64) -> u64 {
    eb * p.tile_g
        * (p.tile_c * ext_y * ext_x
            + g.kernel_h * g.kernel_w * p.tile_c * p.tile_k
            + p.tile_k * p.tile_y * p.tile_x)
}

/// DRAM traffic of a plan.
pub fn traffic(
    kind: &LayerKind,
    input: TensorShape,
    plan: &TilingPlan,
    cfg: &AcceleratorConfig,
) -> Result<TrafficBreakdown, SimError> {
    let g = ConvGeometry::of(kind, input)?;
    let expected = TilingPlan::new(
        &g,
        plan.tile_x,
        plan.tile_y,
        plan.tile_c,
        plan.tile_k,
        plan.tile_g,
        plan.loop_order,
    );
    if expected != *plan {
        return Err(SimError::InvalidPlan(format!(
            "{} does not match the layer bounds",
            plan.summary()
        )));
    }
    let need = tile_footprint(&g, plan, cfg.element_bytes);
    if need > cfg.buffer_bytes {
        return Err(SimError::InvalidPlan(format!(
            "{} needs {need} bytes, buffer holds {}",
            plan.summary(),
            cfg.buffer_bytes
        )));
    }
    Ok(plan_traffic(&g, plan, cfg.element_bytes))
}

pub fn plan_traffic(g: &ConvGeometry, plan: &TilingPlan, eb: u64) -> TrafficBreakdown {
    let (sum_x, _) = input_extents(g.out_w, plan.tile_x, g.in_w, g.kernel_w, g.stride, g.pad_w);
    let (sum_y, _) = input_extents(g.out_h, plan.tile_y, g.in_h, g.kernel_h, g.stride, g.pad_h);
    traffic_from_sums(g, plan, sum_x, sum_y, eb)
}

fn traffic_from_sums(
    g: &ConvGeometry,
    p: &TilingPlan,
    sum_x: u64,
    sum_y: u64,
    eb: u64,
) -> TrafficBreakdown {
    let t = p.trips(g);
    let r = p.reload;
    let input = eb * g.in_c * sum_y * sum_x * r.input;
    let weight = eb * g.weight_count() * r.weight;
    let output = eb * g.output_elements() * r.output;
    let transfers =
        t.g * (t.x * t.y * t.c * r.input + t.c * t.k * r.weight + t.x * t.y * t.k * r.output);
    TrafficBreakdown::new(input, weight, output, transfers)
}

/// Compulsory traffic: every tensor moved exactly once.
pub fn compulsory_traffic(g: &ConvGeometry, eb: u64) -> TrafficBreakdown {
    TrafficBreakdown::new(
        eb * g.input_elements(),
        eb * g.weight_count(),
        eb * g.output_elements(),
        3,
    )
}

/// `1, 2, 4, … < dim` plus `dim` itself.
pub fn tile_candidates(dim: u64) -> Vec<u64> {
    let mut v: Vec<u64> = std::iter::successors(Some(1u64), |&t| Some(t * 2))
        .take_while(|&t| t < dim)
        .collect();
    v.push(dim.max(1));
    v
}

/// Every feasible plan of the search space with its traffic, in
/// enumeration order.
pub fn enumerate_plans(
    g: &ConvGeometry,
    cfg: &AcceleratorConfig,
) -> Vec<(TilingPlan, TrafficBreakdown)> {
    let mut out = Vec::new();
    for_each_plan(g, cfg, |p, t| out.push((p, t)));
    out
}

fn for_each_plan(
    g: &ConvGeometry,
    cfg: &AcceleratorConfig,
    mut f: impl FnMut(TilingPlan, TrafficBreakdown),
) {
    let eb = cfg.element_bytes;
    let xs: Vec<(u64, (u64, u64))> = tile_candidates(g.out_w)
        .into_iter()
        .map(|t| {
            (
                t,
                input_extents(g.out_w, t, g.in_w, g.kernel_w, g.stride, g.pad_w),
            )
        })
        .collect();
    let ys: Vec<(u64, (u64, u64))> = tile_candidates(g.out_h)
        .into_iter()
        .map(|t| {
            (
                t,
                input_extents(g.out_h, t, g.in_h, g.kernel_h, g.stride, g.pad_h),
            )
        })
        .collect();
    let cs = tile_candidates(g.in_per_group());
    let ks = tile_candidates(g.out_per_group());
    let gs = tile_candidates(g.groups);
    let orders = loop_orders();
    for &tg in &gs {
        for &(tx, (sum_x, max_x)) in &xs {
            for &(ty, (sum_y, max_y)) in &ys {
                for &tc in &cs {
                    for &tk in &ks {
                        let probe = TilingPlan {
                            tile_x: tx,
                            tile_y: ty,
                            tile_c: tc,
                            tile_k: tk,
                            tile_g: tg,
                            loop_order: LoopAxis::ALL,
                            reload: ReloadFactors {
                                input: 1,
                                weight: 1,
                                output: 1,
                            },
                        };
                        if tile_bytes(g, &probe, max_x, max_y, eb) > cfg.buffer_bytes {
                            // larger k tiles only grow the working set
                            break;
                        }
                        let trips = probe.trips(g);
                        for order in &orders {
                            let plan = TilingPlan {
                                loop_order: *order,
                                reload: reload_factors(&trips, order),
                                ..probe
                            };
                            let t = traffic_from_sums(g, &plan, sum_x, sum_y, eb);
                            f(plan, t);
                        }
                    }
                }
            }
        }
    }
}

/// Smallest tile the search can produce, for error reporting.
fn minimal_requirement(g: &ConvGeometry, eb: u64) -> u64 {
    let p = TilingPlan::new(g, 1, 1, 1, 1, 1, LoopAxis::ALL);
    tile_footprint(g, &p, eb)
}

/// Deterministic tie-break key: tile sizes then loop order.
pub type PlanKey = (u64, u64, u64, u64, u64, [LoopAxis; 4]);

/// Cost ordering of the search: total cycles, then bytes, then encoding.
pub fn plan_cost(
    compute_cycles: u64,
    plan: &TilingPlan,
    t: &TrafficBreakdown,
    cfg: &AcceleratorConfig,
) -> (u64, u64, PlanKey) {
    let (_, total) = combine_cycles(compute_cycles, t, cfg);
    (total, t.total_bytes, plan.encoding())
}

/// Best plan for a layer whose compute takes `compute_cycles` in the chosen
/// mode. Layers that fit get the identity plan.
pub fn search_geometry(
    g: &ConvGeometry,
    compute_cycles: u64,
    cfg: &AcceleratorConfig,
) -> Result<(TilingPlan, TrafficBreakdown), SimError> {
    let eb = cfg.element_bytes;
    if !needs_tiling(g, cfg) {
        return Ok((TilingPlan::identity(g), compulsory_traffic(g, eb)));
    }
    let mut best: Option<(_, TilingPlan, TrafficBreakdown)> = None;
    for_each_plan(g, cfg, |plan, t| {
        let cost = plan_cost(compute_cycles, &plan, &t, cfg);
        if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
            best = Some((cost, plan, t));
        }
    });
    best.map(|(_, p, t)| (p, t))
        .ok_or_else(|| SimError::Infeasible {
            layer: String::new(),
            required: minimal_requirement(g, eb),
            available: cfg.buffer_bytes,
        })
}

pub fn search_tiling(
    kind: &LayerKind,
    input: TensorShape,
    cfg: &AcceleratorConfig,
    mode: crate::dataflow::DataflowMode,
) -> Result<(TilingPlan, TrafficBreakdown), SimError> {
    let g = ConvGeometry::of(kind, input)?;
    let compute = crate::dataflow::mode_report(mode, &g, cfg).compute_cycles;
    search_geometry(&g, compute, cfg)
}

/// Streaming traffic of pooling and elementwise layers: every operand and
/// the result cross DRAM once, in as many buffer-sized chunks as needed.
/// Concat is free.
pub fn elementwise_traffic(
    kind: &LayerKind,
    inputs: &[TensorShape],
    output: TensorShape,
    cfg: &AcceleratorConfig,
) -> TrafficBreakdown {
    if matches!(kind, LayerKind::Concat) {
        return TrafficBreakdown::default();
    }
    let eb = cfg.element_bytes;
    let input: u64 = inputs.iter().map(|s| s.elements() * eb).sum();
    let output = output.elements() * eb;
    let chunks = ceil_div(input + output, cfg.buffer_bytes).max(1);
    TrafficBreakdown::new(input, 0, output, chunks * (inputs.len() as u64 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::preset;
    use crate::netir::Conv;

    fn big() -> AcceleratorConfig {
        preset("16x16_128KB").unwrap()
    }

    #[test]
    fn footprint_pointwise() {
        let kind = LayerKind::Conv(Conv::square(1, 1, 0, 64));
        assert_eq!(
            footprint(&kind, TensorShape::new(64, 14, 14), 2).unwrap(),
            58368
        );
    }

    #[test]
    fn alexnet_conv1_needs_tiling() {
        let kind = LayerKind::Conv(Conv::square(11, 4, 0, 96));
        let bytes = footprint(&kind, TensorShape::new(3, 227, 227), 2).unwrap();
        assert_eq!(bytes, 2 * (3 * 227 * 227 + 11 * 11 * 3 * 96 + 96 * 55 * 55));
        assert!((bytes as f64 / 1000.0 - 959.0).abs() < 1.0);
        assert!(bytes > big().buffer_bytes);
    }

    #[test]
    fn fitting_layer_gets_identity() {
        let kind = LayerKind::Conv(Conv::square(1, 1, 0, 32));
        let (plan, t) = search_tiling(
            &kind,
            TensorShape::new(32, 4, 4),
            &big(),
            crate::dataflow::DataflowMode::Ws,
        )
        .unwrap();
        assert_eq!(
            plan.tile_count(&ConvGeometry::of(&kind, TensorShape::new(32, 4, 4)).unwrap()),
            1
        );
        assert_eq!(t.total_bytes, 4096);
        assert_eq!(t.n_transfers, 3);
    }

    #[test]
    fn loop_order_count() {
        let o = loop_orders();
        assert_eq!(o.len(), 24);
        let mut s = o.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 24);
    }

    #[test]
    fn extents_cover_input() {
        // 3×3 stride 1 pad 1 over 14: tiles of 4 -> [0,5) [3,9) [7,13) [11,14)
        assert_eq!(input_extents(14, 4, 14, 3, 1, 1), (5 + 6 + 6 + 3, 6));
        assert_eq!(input_extents(14, 14, 14, 3, 1, 1), (14, 14));
        // 1×1 stride 2 (kernel smaller than stride): contiguous, no gaps
        assert_eq!(input_extents(7, 1, 14, 1, 2, 0).0, 14);
        // AlexNet conv1 single tile
        assert_eq!(input_extents(55, 55, 227, 11, 4, 0), (227, 227));
    }

    #[test]
    fn k_outermost_reloads_input() {
        // 1×1, 64→64 on 16×16: halving tile_k with k outermost doubles the
        // input reload.
        let g = ConvGeometry::conv(64, 64, 16, 16, 1, 1, 1);
        use LoopAxis::*;
        let a = TilingPlan::new(&g, 16, 16, 64, 32, 1, [K, X, Y, C]);
        let b = TilingPlan::new(&g, 16, 16, 64, 16, 1, [K, X, Y, C]);
        assert_eq!(a.reload.input, 2);
        assert_eq!(b.reload.input, 4);
        assert_eq!(a.reload.weight, 1);
        assert_eq!(a.reload.output, 1);
    }

    #[test]
    fn c_innermost_keeps_output_stationary() {
        // 32→32 3×3 on 32×32 out (34×34 in): 2·(36992 + 9216 + 32768) ≈ 2× a
        // 64 KB buffer
        let g = ConvGeometry::conv(32, 32, 32, 32, 3, 3, 1);
        let mut cfg = big();
        cfg.buffer_bytes = 64 * 1024;
        assert!(needs_tiling(&g, &cfg));
        use LoopAxis::*;
        let plan = TilingPlan::new(&g, 32, 16, 16, 32, 1, [X, Y, K, C]);
        assert!(tile_footprint(&g, &plan, 2) <= cfg.buffer_bytes);
        let t = plan_traffic(&g, &plan, 2);
        assert_eq!(plan.reload.output, 1);
        assert_eq!(t.output_bytes, 2 * g.output_elements());
        // weights are re-fetched once per y tile
        assert_eq!(plan.reload.weight, 2);
    }

    #[test]
    fn permuting_independent_loops_keeps_traffic() {
        let g = ConvGeometry::conv(64, 64, 16, 16, 3, 3, 1);
        use LoopAxis::*;
        // weights do not depend on x or y
        let a = TilingPlan::new(&g, 4, 8, 16, 16, 1, [X, Y, C, K]);
        let b = TilingPlan::new(&g, 4, 8, 16, 16, 1, [Y, X, C, K]);
        assert_eq!(plan_traffic(&g, &a, 2), plan_traffic(&g, &b, 2));
    }

    #[test]
    fn alexnet_conv1_search_is_optimal() {
        let kind = LayerKind::Conv(Conv::square(11, 4, 0, 96).with_bias(true));
        let input = TensorShape::new(3, 227, 227);
        let g = ConvGeometry::of(&kind, input).unwrap();
        let cfg = big();
        let compute = crate::dataflow::ws_report(&g, &cfg).compute_cycles;
        let (plan, t) = search_geometry(&g, compute, &cfg).unwrap();
        assert!(t.total_bytes >= layer_footprint(&g, 2));
        let best = plan_cost(compute, &plan, &t, &cfg);
        for (p, tp) in enumerate_plans(&g, &cfg) {
            assert!(best <= plan_cost(compute, &p, &tp, &cfg));
        }
        assert_eq!(traffic(&kind, input, &plan, &cfg).unwrap(), t);
    }

    #[test]
    fn infeasible_reports_requirement() {
        let g = ConvGeometry::conv(64, 64, 16, 16, 7, 7, 1);
        let mut cfg = big();
        cfg.buffer_bytes = 64;
        match search_geometry(&g, 1, &cfg) {
            Err(SimError::Infeasible {
                required,
                available,
                ..
            }) => {
                assert_eq!(available, 64);
                assert_eq!(required, 2 * (49 + 49 + 1));
            }
            other => panic!("{other:?}"),
        }
    }
}

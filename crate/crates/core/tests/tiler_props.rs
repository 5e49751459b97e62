use proptest::prelude::*;

use sqnext_core::dataflow::{mode_report, ConvGeometry, DataflowMode};
use sqnext_core::hwmodel::AcceleratorConfig;
use sqnext_core::netir::{Conv, LayerKind, TensorShape};
use sqnext_core::tiler::{
    compulsory_traffic, enumerate_plans, layer_footprint, plan_cost, search_geometry,
    search_tiling, tile_footprint, traffic, LoopAxis, TilingPlan,
};

#[derive(Debug, Clone)]
struct Layer {
    kind: LayerKind,
    input: TensorShape,
}

fn layer() -> impl Strategy<Value = Layer> {
    (
        prop::sample::select(vec![(1u64, 1u64), (1, 3), (3, 1), (3, 3), (5, 5), (7, 7)]),
        prop::sample::select(vec![8u64, 16, 32, 64, 96]),
        prop::sample::select(vec![8u64, 16, 32, 64, 128]),
        4u64..40,
        1u64..=2,
        0usize..3,
    )
        .prop_map(|((kh, kw), cin, cout, hw, stride, gsel)| {
            let groups = [1, 2, cin][gsel];
            let cout = if groups == cin { cin } else { cout };
            let conv = Conv::new(kh, kw, stride, kh / 2, kw / 2, cout).with_groups(groups);
            Layer {
                kind: LayerKind::Conv(conv),
                input: TensorShape::new(cin, hw, hw),
            }
        })
}

fn cfg(buffer: u64) -> AcceleratorConfig {
    AcceleratorConfig::new(16, 16, buffer)
}

fn geom(l: &Layer) -> ConvGeometry {
    ConvGeometry::of(&l.kind, l.input).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn chosen_plan_is_optimal(l in layer(), buf in prop::sample::select(vec![4096u64, 8192, 16384, 32768])) {
        let cfg = cfg(buf);
        let g = geom(&l);
        let compute = mode_report(DataflowMode::Ws, &g, &cfg).compute_cycles;
        let Ok((plan, t)) = search_geometry(&g, compute, &cfg) else { return Ok(()) };
        let best = plan_cost(compute, &plan, &t, &cfg);
        if layer_footprint(&g, 2) > buf {
            for (p, tp) in enumerate_plans(&g, &cfg) {
                prop_assert!(best <= plan_cost(compute, &p, &tp, &cfg));
            }
        }
    }

    #[test]
    fn traffic_at_least_compulsory(l in layer(), buf in prop::sample::select(vec![4096u64, 16384, 65536])) {
        let cfg = cfg(buf);
        let g = geom(&l);
        let c = compulsory_traffic(&g, 2);
        for (p, t) in enumerate_plans(&g, &cfg).into_iter().step_by(7) {
            prop_assert!(t.input_bytes >= c.input_bytes);
            prop_assert!(t.weight_bytes >= c.weight_bytes);
            prop_assert!(t.output_bytes >= c.output_bytes);
            prop_assert_eq!(t.total_bytes, t.input_bytes + t.weight_bytes + t.output_bytes);
            prop_assert!(tile_footprint(&g, &p, 2) <= buf);
            let r = p.reload;
            if r.input == 1 && r.weight == 1 && r.output == 1 && p.tile_x == g.out_w && p.tile_y == g.out_h {
                prop_assert_eq!(t.total_bytes, c.total_bytes);
            }
            if t.total_bytes == c.total_bytes {
                prop_assert_eq!((r.input, r.weight, r.output), (1, 1, 1));
            }
        }
    }

    #[test]
    fn search_is_deterministic(l in layer(), buf in 2048u64..200_000) {
        let cfg = cfg(buf);
        let a = search_tiling(&l.kind, l.input, &cfg, DataflowMode::Os);
        let b = search_tiling(&l.kind, l.input, &cfg, DataflowMode::Os);
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn buffer_growth_monotone(l in layer(), mode in prop::sample::select(vec![DataflowMode::Ws, DataflowMode::Os])) {
        let g = geom(&l);
        let mut last: Option<(u64, u64)> = None;
        for buf in [8 * 1024u64, 16 * 1024, 32 * 1024, 64 * 1024, 128 * 1024] {
            let cfg = cfg(buf);
            let compute = mode_report(mode, &g, &cfg).compute_cycles;
            let Ok((plan, t)) = search_geometry(&g, compute, &cfg) else { continue };
            let (cycles, bytes, _) = plan_cost(compute, &plan, &t, &cfg);
            if let Some((c0, b0)) = last {
                prop_assert!(cycles <= c0, "cycles grew {c0} -> {cycles} at {buf}");
                // cycles lead the cost, so bytes are only ordered on ties
                if cycles == c0 {
                    prop_assert!(bytes <= b0, "bytes grew {b0} -> {bytes} at {buf}");
                }
            }
            last = Some((cycles, bytes));
        }
    }

    #[test]
    fn traffic_matches_enumeration(l in layer()) {
        let cfg = cfg(16384);
        let g = geom(&l);
        for (p, t) in enumerate_plans(&g, &cfg).into_iter().step_by(97) {
            prop_assert_eq!(traffic(&l.kind, l.input, &p, &cfg).unwrap(), t);
        }
    }
}

#[test]
fn identity_plan_is_compulsory() {
    let g = ConvGeometry::conv(64, 64, 14, 14, 3, 3, 1);
    let id = TilingPlan::identity(&g);
    let cfg = cfg(1 << 20);
    let kind = LayerKind::Conv(Conv::square(3, 1, 0, 64));
    let t = traffic(&kind, TensorShape::new(64, 16, 16), &id, &cfg).unwrap();
    assert_eq!(t, compulsory_traffic(&g, 2));
    assert_eq!(t.n_transfers, 3);
}

#[test]
fn infeasible_plan_rejected() {
    let g = ConvGeometry::conv(64, 64, 14, 14, 3, 3, 1);
    let kind = LayerKind::Conv(Conv::square(3, 1, 0, 64));
    let err = traffic(
        &kind,
        TensorShape::new(64, 16, 16),
        &TilingPlan::identity(&g),
        &cfg(1024),
    )
    .unwrap_err();
    assert!(err.to_string().contains("buffer"), "{err}");
}

#[test]
fn alexnet_conv1_exhaustive() {
    let kind = LayerKind::Conv(
        Conv::square(11, 4, 0, 96)
            .with_bias(true)
            .with_batchnorm(false),
    );
    let input = TensorShape::new(3, 227, 227);
    let cfg = AcceleratorConfig::new(16, 16, 128 * 1024);
    for mode in [DataflowMode::Ws, DataflowMode::Os] {
        let g = ConvGeometry::of(&kind, input).unwrap();
        let compute = mode_report(mode, &g, &cfg).compute_cycles;
        let (plan, t) = search_tiling(&kind, input, &cfg, mode).unwrap();
        assert!(t.total_bytes >= 959_000);
        let best = plan_cost(compute, &plan, &t, &cfg);
        let all = enumerate_plans(&g, &cfg);
        assert!(!all.is_empty());
        assert!(all
            .iter()
            .all(|(p, tp)| best <= plan_cost(compute, p, tp, &cfg)));
        assert!(all.iter().all(|(_, tp)| t.total_bytes <= tp.total_bytes
            || best.0 < plan_cost(compute, &plan, tp, &cfg).0));
    }
}

#[test]
fn twenty_catalog_layers_are_optimal() {
    // every distinct tiled conv of SqueezeNext-23 and AlexNet on the small
    // preset
    let cfg = AcceleratorConfig::new(8, 8, 32 * 1024);
    let mut checked = 0;
    let mut seen = std::collections::HashSet::new();
    for name in ["1.0-SqNxt-23", "AlexNet"] {
        let graph = sqnext_core::zoo::build_variant(name).unwrap();
        for (i, n) in graph.nodes().iter().enumerate() {
            if !matches!(n.kind, LayerKind::Conv(_)) {
                continue;
            }
            let input = graph.input_shapes(i).unwrap()[0];
            let g = ConvGeometry::of(&n.kind, input).unwrap();
            if layer_footprint(&g, 2) <= cfg.buffer_bytes || !seen.insert(g) {
                continue;
            }
            let compute = mode_report(DataflowMode::Os, &g, &cfg).compute_cycles;
            let (plan, t) = search_geometry(&g, compute, &cfg).unwrap();
            let best = plan_cost(compute, &plan, &t, &cfg);
            for (p, tp) in enumerate_plans(&g, &cfg) {
                assert!(best <= plan_cost(compute, &p, &tp, &cfg), "{}", n.id);
            }
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} tiled layers");
}

#[test]
fn loop_permutation_symmetry() {
    use LoopAxis::*;
    let g = ConvGeometry::conv(64, 128, 28, 28, 3, 3, 1);
    // input does not depend on k: with k outermost, swapping x and y inside
    // changes nothing for any tensor
    let a = TilingPlan::new(&g, 8, 4, 16, 32, 1, [K, X, Y, C]);
    let b = TilingPlan::new(&g, 8, 4, 16, 32, 1, [K, Y, X, C]);
    assert_eq!(a.reload, b.reload);
}

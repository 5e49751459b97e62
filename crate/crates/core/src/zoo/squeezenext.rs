use crate::netir::{Conv, GraphBuilder, LayerGraph, LayerKind, NodeId, Pool, TensorShape};

use super::ZooError;

/// Parameters of a SqueezeNext network.
///
/// Each block on `C` input channels and stage width `W` is a two-stage 1×1
/// bottleneck, a separable 1×3 / 3×1 pair and a 1×1 expansion to `W`, joined
/// with the (possibly projected) skip by an elementwise add. The bottleneck
/// keeps `r·C` then `r·C/2` channels, where `r` is 1 for the first block of
/// stages 2–4 (which carries the stride-2 downsample), 1/4 when the block
/// narrows (`C > W`) and 1/2 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeNextSpec {
    pub width_mult: f64,
    /// Blocks per stage; must have four entries.
    pub depth_dist: Vec<usize>,
    pub conv1_kernel: u64,
    pub conv1_stride: u64,
    /// conv1 width. Not scaled by `width_mult`.
    pub conv1_channels: u64,
    /// Groups applied to the 1×1 convolutions inside blocks (1 or 2).
    pub group_size: u64,
    /// Stage widths before `width_mult`.
    pub stage_widths: [u64; 4],
    /// Width of the final 1×1 bottleneck before `width_mult`.
    pub fc_bottleneck_channels: u64,
    pub num_classes: u64,
    pub input_size: u64,
}

impl Default for SqueezeNextSpec {
    fn default() -> Self {
        Self {
            width_mult: 1.0,
            depth_dist: vec![6, 6, 8, 1],
            conv1_kernel: 7,
            conv1_stride: 2,
            conv1_channels: 64,
            group_size: 1,
            stage_widths: [32, 64, 128, 256],
            fc_bottleneck_channels: 128,
            num_classes: 1000,
            input_size: 227,
        }
    }
}

fn scaled(base: u64, mult: f64, what: &str) -> Result<u64, ZooError> {
    let v = base as f64 * mult;
    if v < 1.0 || (v - v.round()).abs() > 1e-9 {
        return Err(ZooError::InvalidSpec(format!(
            "{what}: {base}×{mult} is not a positive integer channel count"
        )));
    }
    Ok(v.round() as u64)
}

fn check_channels(c: u64, groups: u64, what: &str) -> Result<(), ZooError> {
    if c < groups || !c.is_multiple_of(groups) {
        return Err(ZooError::InvalidSpec(format!(
            "{what}: {c} channels not a multiple of group size {groups}"
        )));
    }
    Ok(())
}

fn div_exact(c: u64, by: u64, what: &str) -> Result<u64, ZooError> {
    if !c.is_multiple_of(by) || c / by == 0 {
        return Err(ZooError::InvalidSpec(format!(
            "{what}: {c} channels not divisible by {by}"
        )));
    }
    Ok(c / by)
}

/// Builds a shape-inferred SqueezeNext graph.
pub fn build_squeezenext(name: &str, spec: &SqueezeNextSpec) -> Result<LayerGraph, ZooError> {
    if spec.depth_dist.len() != 4 {
        return Err(ZooError::InvalidSpec(format!(
            "depth distribution needs 4 stages, got {}",
            spec.depth_dist.len()
        )));
    }
    if spec.depth_dist.contains(&0) {
        return Err(ZooError::InvalidSpec(
            "every stage needs at least one block".into(),
        ));
    }
    if spec.width_mult.is_nan() || spec.width_mult <= 0.0 {
        return Err(ZooError::InvalidSpec(
            "width multiplier must be positive".into(),
        ));
    }
    if spec.group_size == 0 {
        return Err(ZooError::InvalidSpec("group size must be positive".into()));
    }
    let g = spec.group_size;

    let mut b = GraphBuilder::new(name, TensorShape::new(3, spec.input_size, spec.input_size));
    let conv1 = b.conv(
        "conv1",
        Conv::square(spec.conv1_kernel, spec.conv1_stride, 0, spec.conv1_channels),
        GraphBuilder::INPUT,
    );
    let mut x = b.add("pool1", LayerKind::Pool(Pool::max(3, 2)), &[conv1]);
    let mut channels = spec.conv1_channels;

    let mut block_index = 0usize;
    for (stage, (&base, &depth)) in spec.stage_widths.iter().zip(&spec.depth_dist).enumerate() {
        let width = scaled(base, spec.width_mult, &format!("stage {} width", stage + 1))?;
        for blk in 0..depth {
            let stride = if stage > 0 && blk == 0 { 2 } else { 1 };
            let prefix = format!("stage{}.block{}", stage + 1, blk);
            x = block(&mut b, &prefix, x, channels, width, stride, g, block_index)?;
            channels = width;
            block_index += 1;
        }
    }

    let neck = scaled(spec.fc_bottleneck_channels, spec.width_mult, "bottleneck")?;
    let x = b.conv("bottleneck", Conv::square(1, 1, 0, neck), x);
    let x = b.add("gap", LayerKind::GlobalAvgPool, &[x]);
    b.add(
        "fc",
        LayerKind::FullyConnected {
            out_features: spec.num_classes,
            bias: true,
        },
        &[x],
    );
    Ok(b.build()?)
}

#[allow(clippy::too_many_arguments)]
fn block(
    b: &mut GraphBuilder,
    prefix: &str,
    input: NodeId,
    c_in: u64,
    width: u64,
    stride: u64,
    groups: u64,
    index: usize,
) -> Result<NodeId, ZooError> {
    let reduced = if stride != 1 {
        c_in
    } else if c_in > width {
        div_exact(c_in, 4, prefix)?
    } else {
        div_exact(c_in, 2, prefix)?
    };
    let squeezed = div_exact(reduced, 2, prefix)?;
    for c in [c_in, reduced, squeezed, width] {
        check_channels(c, groups, prefix)?;
    }

    let pw = |out: u64, stride: u64| Conv::square(1, stride, 0, out).with_groups(groups);
    let x = b.conv(format!("{prefix}.reduce1"), pw(reduced, stride), input);
    let x = b.conv(format!("{prefix}.reduce2"), pw(squeezed, 1), x);
    let row = Conv::new(1, 3, 1, 0, 1, reduced);
    let col = Conv::new(3, 1, 1, 1, 0, reduced);
    let (first, second) = if index.is_multiple_of(2) {
        (("sep1x3", row), ("sep3x1", col))
    } else {
        (("sep3x1", col), ("sep1x3", row))
    };
    let x = b.conv(format!("{prefix}.{}", first.0), first.1, x);
    let x = b.conv(format!("{prefix}.{}", second.0), second.1, x);
    let x = b.conv(format!("{prefix}.expand"), pw(width, 1), x);

    let skip = if stride != 1 || c_in != width {
        b.conv(
            format!("{prefix}.shortcut"),
            Conv::square(1, stride, 0, width),
            input,
        )
    } else {
        input
    };
    Ok(b.add(format!("{prefix}.add"), LayerKind::Add, &[x, skip]))
}

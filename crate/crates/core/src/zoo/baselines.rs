//! Comparison networks built from their canonical layer tables.

use crate::netir::{
    Conv, GraphBuilder, LayerGraph, LayerKind, NetError, NodeId, Pool, TensorShape,
};

fn plain(k: u64, stride: u64, pad: u64, out: u64) -> Conv {
    // Biased conv with ReLU, no BatchNorm.
    Conv::square(k, stride, pad, out)
        .with_bias(true)
        .with_batchnorm(false)
}

fn fc(b: &mut GraphBuilder, id: &str, out: u64, x: NodeId) -> NodeId {
    b.add(
        id,
        LayerKind::FullyConnected {
            out_features: out,
            bias: true,
        },
        &[x],
    )
}

fn maxpool(b: &mut GraphBuilder, id: &str, x: NodeId) -> NodeId {
    b.add(id, LayerKind::Pool(Pool::max(3, 2)), &[x])
}

/// AlexNet as trained on two GPUs: conv2, conv4 and conv5 use two groups.
pub fn alexnet() -> Result<LayerGraph, NetError> {
    let mut b = GraphBuilder::new("AlexNet", TensorShape::new(3, 227, 227));
    let x = b.conv("conv1", plain(11, 4, 0, 96), GraphBuilder::INPUT);
    let x = maxpool(&mut b, "pool1", x);
    let x = b.conv("conv2", plain(5, 1, 2, 256).with_groups(2), x);
    let x = maxpool(&mut b, "pool2", x);
    let x = b.conv("conv3", plain(3, 1, 1, 384), x);
    let x = b.conv("conv4", plain(3, 1, 1, 384).with_groups(2), x);
    let x = b.conv("conv5", plain(3, 1, 1, 256).with_groups(2), x);
    let x = maxpool(&mut b, "pool5", x);
    let x = fc(&mut b, "fc6", 4096, x);
    let x = fc(&mut b, "fc7", 4096, x);
    fc(&mut b, "fc8", 1000, x);
    b.build()
}

fn fire(b: &mut GraphBuilder, id: &str, x: NodeId, squeeze: u64, expand: u64) -> NodeId {
    let s = b.conv(format!("{id}.squeeze1x1"), plain(1, 1, 0, squeeze), x);
    let e1 = b.conv(format!("{id}.expand1x1"), plain(1, 1, 0, expand), s);
    let e3 = b.conv(format!("{id}.expand3x3"), plain(3, 1, 1, expand), s);
    b.add(format!("{id}.concat"), LayerKind::Concat, &[e1, e3])
}

fn squeezenet_head(b: &mut GraphBuilder, x: NodeId) {
    let x = b.conv("conv10", plain(1, 1, 0, 1000), x);
    b.add("gap", LayerKind::GlobalAvgPool, &[x]);
}

pub fn squeezenet_v1_0() -> Result<LayerGraph, NetError> {
    let mut b = GraphBuilder::new("SqueezeNet-v1.0", TensorShape::new(3, 227, 227));
    let x = b.conv("conv1", plain(7, 2, 0, 96), GraphBuilder::INPUT);
    let x = maxpool(&mut b, "pool1", x);
    let x = fire(&mut b, "fire2", x, 16, 64);
    let x = fire(&mut b, "fire3", x, 16, 64);
    let x = fire(&mut b, "fire4", x, 32, 128);
    let x = maxpool(&mut b, "pool4", x);
    let x = fire(&mut b, "fire5", x, 32, 128);
    let x = fire(&mut b, "fire6", x, 48, 192);
    let x = fire(&mut b, "fire7", x, 48, 192);
    let x = fire(&mut b, "fire8", x, 64, 256);
    let x = maxpool(&mut b, "pool8", x);
    let x = fire(&mut b, "fire9", x, 64, 256);
    squeezenet_head(&mut b, x);
    b.build()
}

pub fn squeezenet_v1_1() -> Result<LayerGraph, NetError> {
    let mut b = GraphBuilder::new("SqueezeNet-v1.1", TensorShape::new(3, 227, 227));
    let x = b.conv("conv1", plain(3, 2, 0, 64), GraphBuilder::INPUT);
    let x = maxpool(&mut b, "pool1", x);
    let x = fire(&mut b, "fire2", x, 16, 64);
    let x = fire(&mut b, "fire3", x, 16, 64);
    let x = maxpool(&mut b, "pool3", x);
    let x = fire(&mut b, "fire4", x, 32, 128);
    let x = fire(&mut b, "fire5", x, 32, 128);
    let x = maxpool(&mut b, "pool5", x);
    let x = fire(&mut b, "fire6", x, 48, 192);
    let x = fire(&mut b, "fire7", x, 48, 192);
    let x = fire(&mut b, "fire8", x, 64, 256);
    let x = fire(&mut b, "fire9", x, 64, 256);
    squeezenet_head(&mut b, x);
    b.build()
}

/// MobileNet v1, width 1.0, 224×224 input. Depthwise 3×3 and pointwise 1×1
/// convolutions carry BatchNorm and no bias.
pub fn mobilenet_v1() -> Result<LayerGraph, NetError> {
    const PLAN: [(u64, u64); 13] = [
        (64, 1),
        (128, 2),
        (128, 1),
        (256, 2),
        (256, 1),
        (512, 2),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (1024, 2),
        (1024, 1),
    ];
    let mut b = GraphBuilder::new("MobileNet-1.0-224", TensorShape::new(3, 224, 224));
    let mut x = b.conv("conv1", Conv::square(3, 2, 1, 32), GraphBuilder::INPUT);
    let mut channels = 32;
    for (i, &(out, stride)) in PLAN.iter().enumerate() {
        let dw = Conv::square(3, stride, 1, channels).with_groups(channels);
        x = b.conv(format!("conv{}.dw", i + 2), dw, x);
        x = b.conv(format!("conv{}.pw", i + 2), Conv::square(1, 1, 0, out), x);
        channels = out;
    }
    let x = b.add("gap", LayerKind::GlobalAvgPool, &[x]);
    fc(&mut b, "fc", 1000, x);
    b.build()
}

use super::{LayerKind, Shape, ToyModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerFlops {
    pub layer_id: usize,
    pub kind: &'static str,
    pub flops: u64,
}

/// Multiply-accumulate count ×2 per parametric layer. Bias additions and
/// relu / pool / flatten layers count as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub per_layer: Vec<LayerFlops>,
    pub total: u64,
}

pub fn count_flops(model: &ToyModel) -> FlopsReport {
    let mut shape = model.input_shape();
    let mut per_layer = Vec::with_capacity(model.layers().len());
    for (layer_id, layer) in model.layers().iter().enumerate() {
        let out = layer.kind.output_shape(shape).expect("validated model");
        let flops = match (layer.kind, out) {
            (LayerKind::Linear { inputs, outputs }, _) => 2 * inputs as u64 * outputs as u64,
            (
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                },
                Shape::Spatial { height, width, .. },
            ) => {
                2 * (kernel * kernel) as u64
                    * in_channels as u64
                    * out_channels as u64
                    * (height * width) as u64
            }
            _ => 0,
        };
        per_layer.push(LayerFlops {
            layer_id,
            kind: layer.kind.name(),
            flops,
        });
        shape = out;
    }
    let total = per_layer.iter().map(|l| l.flops).sum();
    FlopsReport { per_layer, total }
}

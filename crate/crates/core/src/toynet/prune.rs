use super::{Layer, LayerKind, Shape, ToyModel};
use crate::error::{Error, Result};
use crate::tensio::{PlanEntry, PruningPlan};

/// Removes every component the plan does not keep, together with the matching
/// inputs of the next parametric layer. The network's output shape is
/// unchanged.
pub fn apply_prune(model: &ToyModel, plan: &PruningPlan) -> Result<ToyModel> {
    plan.validate()?;
    let mut layers = model.layers.clone();
    for entry in &plan.layers {
        prune_entry(model.input, &mut layers, entry)?;
    }
    ToyModel::from_layers(model.input, layers, model.meta)
        .map_err(|e| Error::MalformedPlan(format!("pruned model does not compose: {e}")))
}

fn prune_entry(input: Shape, layers: &mut [Layer], entry: &PlanEntry) -> Result<()> {
    let id = entry.layer_id;
    let parametric: Vec<usize> = (0..layers.len())
        .filter(|&i| layers[i].kind.is_parametric())
        .collect();
    let Some(pos) = parametric.iter().position(|&i| i == id) else {
        return Err(Error::MalformedPlan(format!(
            "layer {id} is not a parametric layer"
        )));
    };
    let Some(&next) = parametric.get(pos + 1) else {
        return Err(Error::MalformedPlan(format!("layer {id} is the output layer")));
    };
    let n = layers[id].kind.components().expect("parametric");
    if n != entry.n_components {
        return Err(Error::MalformedPlan(format!(
            "layer {id} has {n} components but the plan was made for {}",
            entry.n_components
        )));
    }
    if entry.keeps_everything() {
        return Ok(());
    }
    let keep = &entry.kept_indices;

    // shape entering the flatten between `id` and `next`, if there is one
    let mut shape = input;
    let mut flatten_input = None;
    for (i, layer) in layers.iter().enumerate().take(next) {
        if i > id && layer.kind == LayerKind::Flatten {
            flatten_input = Some(shape);
        }
        shape = layer.kind.output_shape(shape)?;
    }

    let layer = &mut layers[id];
    let per = layer.weight.len() / n;
    layer.weight = keep
        .iter()
        .flat_map(|&j| layer.weight[j * per..(j + 1) * per].iter().copied())
        .collect();
    layer.bias = keep.iter().map(|&j| layer.bias[j]).collect();
    match &mut layer.kind {
        LayerKind::Linear { outputs, .. } => *outputs = keep.len(),
        LayerKind::Conv { out_channels, .. } => *out_channels = keep.len(),
        _ => unreachable!("parametric"),
    }

    let down = &mut layers[next];
    match &mut down.kind {
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => {
            let kk = *kernel * *kernel;
            let old_in = *in_channels;
            let mut w = Vec::with_capacity(*out_channels * keep.len() * kk);
            for co in 0..*out_channels {
                for &ci in keep {
                    let start = (co * old_in + ci) * kk;
                    w.extend_from_slice(&down.weight[start..start + kk]);
                }
            }
            down.weight = w;
            *in_channels = keep.len();
        }
        LayerKind::Linear { inputs, outputs } => {
            // each removed component owns a contiguous block of input columns:
            // one for a neuron, h*w for a flattened channel
            let block = match flatten_input {
                Some(Shape::Spatial { height, width, .. }) => height * width,
                _ => 1,
            };
            let old_in = *inputs;
            let mut w = Vec::with_capacity(*outputs * keep.len() * block);
            for o in 0..*outputs {
                let row = &down.weight[o * old_in..(o + 1) * old_in];
                for &j in keep {
                    w.extend_from_slice(&row[j * block..(j + 1) * block]);
                }
            }
            down.weight = w;
            *inputs = keep.len() * block;
        }
        _ => unreachable!("parametric"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toynet::{arch, count_flops};

    fn model(spec: &str) -> ToyModel {
        let a = arch::parse(spec).unwrap();
        ToyModel::new(a.input, &a.layers, 3).unwrap()
    }

    fn plan(entries: Vec<PlanEntry>) -> PruningPlan {
        PruningPlan {
            layers: entries,
            ..PruningPlan::default()
        }
    }

    #[test]
    fn empty_plan_is_identity() {
        let m = model("mlp:2-6-5-3");
        assert_eq!(apply_prune(&m, &PruningPlan::default()).unwrap(), m);
    }

    #[test]
    fn linear_rows_and_next_columns_are_removed() {
        let m = model("mlp:2-4-3");
        let p = apply_prune(&m, &plan(vec![PlanEntry::new(0, 4, vec![1, 3])])).unwrap();
        let l0 = &p.layers()[0];
        assert_eq!(
            l0.kind,
            LayerKind::Linear {
                inputs: 2,
                outputs: 2
            }
        );
        assert_eq!(
            l0.weight,
            [&m.layers()[0].weight[2..4], &m.layers()[0].weight[6..8]].concat()
        );
        assert_eq!(l0.bias, vec![m.layers()[0].bias[1], m.layers()[0].bias[3]]);
        let l2 = &p.layers()[2];
        assert_eq!(
            l2.kind,
            LayerKind::Linear {
                inputs: 2,
                outputs: 3
            }
        );
        let w = &m.layers()[2].weight;
        assert_eq!(l2.weight, vec![w[1], w[3], w[5], w[7], w[9], w[11]]);
        assert_eq!(l2.bias, m.layers()[2].bias);
    }

    #[test]
    fn conv_channel_across_flatten_removes_a_block() {
        let m = model("cnn:1x4x4-c3k3-p2-f-2");
        // conv output 3x4x4, pooled to 3x2x2, flattened to 12 columns
        let p = apply_prune(&m, &plan(vec![PlanEntry::new(0, 3, vec![0, 2])])).unwrap();
        assert_eq!(
            p.layers()[4].kind,
            LayerKind::Linear {
                inputs: 8,
                outputs: 2
            }
        );
        let w = &m.layers()[4].weight;
        let expect: Vec<f64> = (0..2)
            .flat_map(|o| {
                let row = &w[o * 12..(o + 1) * 12];
                [&row[0..4], &row[8..12]].concat()
            })
            .collect();
        assert_eq!(p.layers()[4].weight, expect);
        assert_eq!(p.output_len(), m.output_len());
    }

    #[test]
    fn output_layer_and_wrong_sizes_are_rejected() {
        let m = model("mlp:2-4-3");
        let err = apply_prune(&m, &plan(vec![PlanEntry::new(2, 3, vec![0, 1])])).unwrap_err();
        assert_eq!(err.kind(), "MalformedPlan");
        let err = apply_prune(&m, &plan(vec![PlanEntry::new(0, 5, vec![0, 1])])).unwrap_err();
        assert_eq!(err.kind(), "MalformedPlan");
        let err = apply_prune(&m, &plan(vec![PlanEntry::new(1, 4, vec![0, 1])])).unwrap_err();
        assert_eq!(err.kind(), "MalformedPlan");
    }

    #[test]
    fn flops_drop_only_when_something_is_removed() {
        let m = model("cnn:1x6x6-c4k3-c4k3-f-8-3");
        let keep_all = plan(vec![PlanEntry::new(0, 4, vec![0, 1, 2, 3])]);
        assert_eq!(
            count_flops(&apply_prune(&m, &keep_all).unwrap()).total,
            count_flops(&m).total
        );
        let drop_one = plan(vec![PlanEntry::new(2, 4, vec![0, 1, 3])]);
        assert!(count_flops(&apply_prune(&m, &drop_one).unwrap()).total < count_flops(&m).total);
    }
}

//! Minimal sequential network engine: linear, conv, relu, average-pool and
//! flatten layers with SGD training, activation capture, structural pruning
//! surgery and FLOPs accounting.
//!
//! Arithmetic is done in f64. Weights produced by initialization and training
//! are rounded to f32 after every update, so saving a model to the f32
//! container and loading it back is lossless.

pub mod arch;
mod flops;
mod prune;
mod train;

use rand::Rng;
use rayon::prelude::*;

pub use flops::{count_flops, FlopsReport, LayerFlops};
pub use prune::apply_prune;
pub use train::{finetune, stratified_subset, train, EpochLog, FinetuneConfig, TrainConfig, TrainLog};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::tensio::{ActivationTensor, ComponentKind, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    AvgPool {
        size: usize,
    },
    Flatten,
}

impl LayerKind {
    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerKind::Linear { .. } | LayerKind::Conv { .. })
    }

    /// Prunable component count: neurons of a linear layer, output channels
    /// of a conv layer.
    pub fn components(&self) -> Option<usize> {
        match *self {
            LayerKind::Linear { outputs, .. } => Some(outputs),
            LayerKind::Conv { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Linear { inputs, outputs } => inputs * outputs,
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel,
            _ => 0,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Linear { inputs, .. } => inputs,
            LayerKind::Conv {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Linear { .. } => "linear",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::AvgPool { .. } => "avgpool",
            LayerKind::Flatten => "flatten",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match (*self, input) {
            (LayerKind::Linear { inputs, outputs }, Shape::Flat(d)) if d == inputs => {
                Ok(Shape::Flat(outputs))
            }
            (
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                },
                Shape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) if channels == in_channels
                && stride > 0
                && kernel > 0
                && height + 2 * pad >= kernel
                && width + 2 * pad >= kernel =>
            {
                Ok(Shape::Spatial {
                    channels: out_channels,
                    height: (height + 2 * pad - kernel) / stride + 1,
                    width: (width + 2 * pad - kernel) / stride + 1,
                })
            }
            (LayerKind::Relu, s) => Ok(s),
            (
                LayerKind::AvgPool { size },
                Shape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) if size > 0 && height >= size && width >= size => Ok(Shape::Spatial {
                channels,
                height: height / size,
                width: width / size,
            }),
            (LayerKind::Flatten, s) => Ok(Shape::Flat(s.len())),
            (kind, s) => Err(Error::ShapeMismatch(format!(
                "{} layer {kind:?} cannot take input {s:?}",
                kind.name()
            ))),
        }
    }
}

/// Shape of one sample flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_dims(dims: &[usize]) -> Result<Shape> {
        match *dims {
            [d] => Ok(Shape::Flat(d)),
            [c, h, w] => Ok(Shape::Spatial {
                channels: c,
                height: h,
                width: w,
            }),
            _ => Err(Error::ShapeMismatch(format!(
                "sample shape {dims:?} is neither [d] nor [c, h, w]"
            ))),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Flat(d) => vec![d],
            Shape::Spatial {
                channels,
                height,
                width,
            } => vec![channels, height, width],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    /// Linear: `[out, in]`; conv: `[c_out, c_in, k, k]`; empty otherwise.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(kind: LayerKind) -> Layer {
        Layer {
            kind,
            weight: vec![0.0; kind.weight_len()],
            bias: vec![0.0; kind.components().unwrap_or(0)],
        }
    }

    /// Incoming weights of component `j` (a weight row or a full filter).
    pub fn component_weights(&self, j: usize) -> &[f64] {
        let n = self.kind.components().unwrap_or(0);
        if n == 0 {
            return &[];
        }
        let per = self.weight.len() / n;
        &self.weight[j * per..(j + 1) * per]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: u64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    input: Shape,
    layers: Vec<Layer>,
    pub meta: TrainingMeta,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl ToyModel {
    /// Builds a model and draws weights and biases uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` using the seed's init stream.
    pub fn new(input: Shape, kinds: &[LayerKind], seed: u64) -> Result<ToyModel> {
        let mut rng = substream(seed, Stream::Init);
        let layers = kinds
            .iter()
            .map(|&kind| {
                let mut layer = Layer::zeros(kind);
                if kind.is_parametric() {
                    let bound = 1.0 / (kind.fan_in() as f64).sqrt();
                    for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                        *w = round_f32(rng.random_range(-bound..bound));
                    }
                }
                layer
            })
            .collect();
        let model = ToyModel {
            input,
            layers,
            meta: TrainingMeta {
                seed,
                ..TrainingMeta::default()
            },
        };
        model.validate()?;
        Ok(model)
    }

    /// Assembles a model from explicit layers, checking that shapes compose.
    pub fn from_layers(input: Shape, layers: Vec<Layer>, meta: TrainingMeta) -> Result<ToyModel> {
        let model = ToyModel { input, layers, meta };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let mut shape = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weight.len() != layer.kind.weight_len()
                || layer.bias.len() != layer.kind.components().unwrap_or(0)
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: parameter lengths do not match {:?}",
                    layer.kind
                )));
            }
            shape = layer.kind.output_shape(shape).map_err(|e| e.in_layer(i))?;
        }
        if !self.layers.is_empty() && !matches!(shape, Shape::Flat(_)) {
            return Err(Error::ShapeMismatch(
                "network output must be flat class logits".into(),
            ));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to one layer's parameters. Callers may change values but
    /// must not resize the weight or bias vectors.
    pub fn layer_mut(&mut self, i: usize) -> &mut Layer {
        &mut self.layers[i]
    }

    /// Output shape of every layer, in order.
    pub fn shapes(&self) -> Vec<Shape> {
        let mut shape = self.input;
        self.layers
            .iter()
            .map(|l| {
                shape = l.kind.output_shape(shape).expect("validated model");
                shape
            })
            .collect()
    }

    /// Shape fed into layer `i`.
    pub fn input_shape_of(&self, i: usize) -> Shape {
        if i == 0 {
            self.input
        } else {
            self.shapes()[i - 1]
        }
    }

    pub fn output_len(&self) -> usize {
        self.shapes().last().map_or(self.input.len(), Shape::len)
    }

    pub fn parametric_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].kind.is_parametric())
            .collect()
    }

    /// Parametric layers whose components may be removed: every one except
    /// the output layer.
    pub fn prunable_layers(&self) -> Vec<usize> {
        let mut p = self.parametric_layers();
        p.pop();
        p
    }

    pub fn n_components(&self, layer_id: usize) -> Result<usize> {
        self.layers
            .get(layer_id)
            .and_then(|l| l.kind.components())
            .ok_or(Error::NotPrunableLayer { layer_id })
    }

    pub fn check_prunable(&self, layer_id: usize) -> Result<usize> {
        if !self.prunable_layers().contains(&layer_id) {
            return Err(Error::NotPrunableLayer { layer_id });
        }
        self.n_components(layer_id)
    }

    /// Multiplies every weight and bias by `s`.
    pub fn scale_parameters(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|w| *w *= s);
        }
    }

    pub(crate) fn round_parameters(&mut self) {
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|w| *w = round_f32(*w));
        }
    }

    fn check_input(&self, data: &LabeledDataset) -> Result<()> {
        let expected = self.input.dims();
        if data.sample_shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "model expects samples of shape {expected:?}, dataset has {:?}",
                data.sample_shape()
            )));
        }
        if self.output_len() < data.num_classes() {
            return Err(Error::ShapeMismatch(format!(
                "model emits {} logits but dataset has {} classes",
                self.output_len(),
                data.num_classes()
            )));
        }
        Ok(())
    }

    /// Runs one sample through layers `[0, upto)` and returns every
    /// intermediate output (index 0 is the input itself).
    fn trace(&self, x: &[f64], upto: usize) -> Vec<Vec<f64>> {
        let mut outs = Vec::with_capacity(upto + 1);
        outs.push(x.to_vec());
        let mut shape = self.input;
        for layer in &self.layers[..upto] {
            let out = layer_forward(layer, shape, outs.last().expect("input"));
            shape = layer.kind.output_shape(shape).expect("validated model");
            outs.push(out);
        }
        outs
    }

    fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut shape = self.input;
        for layer in &self.layers {
            cur = layer_forward(layer, shape, &cur);
            shape = layer.kind.output_shape(shape).expect("validated model");
        }
        cur
    }

    /// Class logits for a flat row-major batch of samples.
    pub fn forward(&self, batch: &[f64]) -> Result<Vec<Vec<f64>>> {
        let width = self.input.len();
        if width == 0 || !batch.len().is_multiple_of(width) {
            return Err(Error::ShapeMismatch(format!(
                "batch of {} values is not a multiple of the input width {width}",
                batch.len()
            )));
        }
        Ok(batch.par_chunks(width).map(|x| self.forward_one(x)).collect())
    }

    pub fn forward_dataset(&self, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
        self.check_input(data)?;
        Ok((0..data.len())
            .into_par_iter()
            .map(|i| self.forward_one(&widen(data.sample(i))))
            .collect())
    }

    /// Mean cross-entropy and accuracy over the whole dataset.
    pub fn evaluate(&self, data: &LabeledDataset) -> Result<Evaluation> {
        let logits = self.forward_dataset(data)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (z, &y) in logits.iter().zip(data.labels()) {
            loss += cross_entropy(z, y as usize);
            if argmax(z) == y as usize {
                correct += 1;
            }
        }
        Ok(Evaluation {
            loss: loss / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        })
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        Ok(self.evaluate(data)?.accuracy)
    }

    /// Mean cross-entropy over `indices` and its gradient for every layer.
    pub fn loss_and_gradients(&self, data: &LabeledDataset, indices: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(data)?;
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for &i in indices {
            loss += self.accumulate_sample(&widen(data.sample(i)), data.labels()[i] as usize, &mut grads);
        }
        let scale = 1.0 / indices.len().max(1) as f64;
        grads.scale(scale);
        Ok((loss * scale, grads))
    }

    fn accumulate_sample(&self, x: &[f64], label: usize, grads: &mut Gradients) -> f64 {
        let outs = self.trace(x, self.layers.len());
        let logits = outs.last().expect("logits");
        let loss = cross_entropy(logits, label);
        let mut g = softmax(logits);
        g[label] -= 1.0;
        let shapes = self.shapes();
        for i in (0..self.layers.len()).rev() {
            let in_shape = if i == 0 { self.input } else { shapes[i - 1] };
            g = layer_backward(&self.layers[i], in_shape, &outs[i], &g, &mut grads.layers[i]);
        }
        loss
    }

    /// Activations of a prunable layer for every sample, `[n, N, p, p]`.
    pub fn capture_activations(
        &self,
        data: &LabeledDataset,
        layer_id: usize,
        point: CapturePoint,
    ) -> Result<ActivationTensor> {
        let n_components = self.check_prunable(layer_id)?;
        self.check_input(data)?;
        let shapes = self.shapes();
        let upto = match point {
            CapturePoint::PostActivation
                if matches!(
                    self.layers.get(layer_id + 1).map(|l| l.kind),
                    Some(LayerKind::Relu)
                ) =>
            {
                layer_id + 2
            }
            _ => layer_id + 1,
        };
        let (kind, p) = match shapes[layer_id] {
            Shape::Flat(_) => (ComponentKind::Linear, 1),
            Shape::Spatial { height, width, .. } if height == width => (ComponentKind::Conv, height),
            Shape::Spatial { height, width, .. } => {
                return Err(Error::ShapeMismatch(format!(
                    "layer {layer_id} emits non-square {height}x{width} maps"
                )))
            }
        };
        let per_sample: Vec<Vec<f32>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let outs = self.trace(&widen(data.sample(i)), upto);
                outs[upto].iter().map(|&v| v as f32).collect()
            })
            .collect();
        let values = per_sample.concat();
        ActivationTensor::new(layer_id, kind, n_components, p, values, data.labels().to_vec())
    }
}

/// Where activations are read relative to the layer's nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapturePoint {
    /// After the ReLU that follows the layer (what the next layer consumes).
    #[default]
    PostActivation,
    /// The raw affine output of the layer.
    PreActivation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients with the same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &ToyModel) -> Gradients {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            g.weight.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

pub(crate) fn widen(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

fn spatial(shape: Shape) -> (usize, usize, usize) {
    match shape {
        Shape::Spatial {
            channels,
            height,
            width,
        } => (channels, height, width),
        Shape::Flat(d) => (d, 1, 1),
    }
}

fn layer_forward(layer: &Layer, in_shape: Shape, x: &[f64]) -> Vec<f64> {
    match layer.kind {
        LayerKind::Linear { inputs, outputs } => (0..outputs)
            .map(|o| {
                let row = &layer.weight[o * inputs..(o + 1) * inputs];
                layer.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect(),
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        } => {
            let (_, h, w) = spatial(in_shape);
            let ho = (h + 2 * pad - kernel) / stride + 1;
            let wo = (w + 2 * pad - kernel) / stride + 1;
            let mut out = vec![0.0; out_channels * ho * wo];
            for co in 0..out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = layer.bias[co];
                        for ci in 0..in_channels {
                            for ky in 0..kernel {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kernel {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let wi = ((co * in_channels + ci) * kernel + ky) * kernel + kx;
                                    acc += layer.weight[wi] * x[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out[(co * ho + oy) * wo + ox] = acc;
                    }
                }
            }
            out
        }
        LayerKind::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
        LayerKind::AvgPool { size } => {
            let (c, h, w) = spatial(in_shape);
            let (ho, wo) = (h / size, w / size);
            let norm = 1.0 / (size * size) as f64;
            let mut out = vec![0.0; c * ho * wo];
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for dy in 0..size {
                            for dx in 0..size {
                                acc += x[(ch * h + oy * size + dy) * w + ox * size + dx];
                            }
                        }
                        out[(ch * ho + oy) * wo + ox] = acc * norm;
                    }
                }
            }
            out
        }
        LayerKind::Flatten => x.to_vec(),
    }
}

/// Accumulates parameter gradients into `grad` and returns the gradient with
/// respect to the layer input.
fn layer_backward(layer: &Layer, in_shape: Shape, x: &[f64], g: &[f64], grad: &mut LayerGrad) -> Vec<f64> {
    match layer.kind {
        LayerKind::Linear { inputs, outputs } => {
            let mut gx = vec![0.0; inputs];
            for o in 0..outputs {
                let go = g[o];
                grad.bias[o] += go;
                let row = &layer.weight[o * inputs..(o + 1) * inputs];
                let grow = &mut grad.weight[o * inputs..(o + 1) * inputs];
                for i in 0..inputs {
                    grow[i] += go * x[i];
                    gx[i] += row[i] * go;
                }
            }
            gx
        }
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        } => {
            let (_, h, w) = spatial(in_shape);
            let ho = (h + 2 * pad - kernel) / stride + 1;
            let wo = (w + 2 * pad - kernel) / stride + 1;
            let mut gx = vec![0.0; x.len()];
            for co in 0..out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let go = g[(co * ho + oy) * wo + ox];
                        grad.bias[co] += go;
                        for ci in 0..in_channels {
                            for ky in 0..kernel {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kernel {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let wi = ((co * in_channels + ci) * kernel + ky) * kernel + kx;
                                    let xi = (ci * h + iy as usize) * w + ix as usize;
                                    grad.weight[wi] += go * x[xi];
                                    gx[xi] += layer.weight[wi] * go;
                                }
                            }
                        }
                    }
                }
            }
            gx
        }
        LayerKind::Relu => x
            .iter()
            .zip(g)
            .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
            .collect(),
        LayerKind::AvgPool { size } => {
            let (c, h, w) = spatial(in_shape);
            let (ho, wo) = (h / size, w / size);
            let norm = 1.0 / (size * size) as f64;
            let mut gx = vec![0.0; x.len()];
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let go = g[(ch * ho + oy) * wo + ox] * norm;
                        for dy in 0..size {
                            for dx in 0..size {
                                gx[(ch * h + oy * size + dy) * w + ox * size + dx] += go;
                            }
                        }
                    }
                }
            }
            gx
        }
        LayerKind::Flatten => g.to_vec(),
    }
}

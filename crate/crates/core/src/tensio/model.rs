//! Model files.
//!
//! Common preamble with `kind = Model`, `tag = 0` and `dims` = per-sample
//! input shape, followed by:
//!
//! ```text
//! label count (u64) = 0
//! seed (u64), epochs (u64), lr (f64)        training metadata
//! layer count (u64)
//! per layer: code (u32) + 5 x u64 params     1 linear(in, out), 2 conv(c_in, c_out, k, stride, pad),
//!                                            3 relu, 4 avgpool(size), 5 flatten; unused params are 0
//! value count (u64)
//! values (f32): weight then bias of each parametric layer, in layer order
//! ```

use std::fs;
use std::path::Path;

use super::codec::{ByteReader, ByteWriter};
use super::{expect_kind, finish, read_finite_f32, read_header, write_header, Header, Kind};
use crate::error::{Error, Result};
use crate::toynet::{Layer, LayerKind, Shape, ToyModel, TrainingMeta};

fn layer_code(kind: &LayerKind) -> (u32, [u64; 5]) {
    match *kind {
        LayerKind::Linear { inputs, outputs } => (1, [inputs as u64, outputs as u64, 0, 0, 0]),
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        } => (
            2,
            [
                in_channels as u64,
                out_channels as u64,
                kernel as u64,
                stride as u64,
                pad as u64,
            ],
        ),
        LayerKind::Relu => (3, [0; 5]),
        LayerKind::AvgPool { size } => (4, [size as u64, 0, 0, 0, 0]),
        LayerKind::Flatten => (5, [0; 5]),
    }
}

fn layer_kind(code: u32, p: [u64; 5]) -> Result<LayerKind> {
    let u = |v: u64| {
        usize::try_from(v).map_err(|_| Error::MalformedContainer(format!("layer parameter {v} too large")))
    };
    Ok(match code {
        1 => LayerKind::Linear {
            inputs: u(p[0])?,
            outputs: u(p[1])?,
        },
        2 => LayerKind::Conv {
            in_channels: u(p[0])?,
            out_channels: u(p[1])?,
            kernel: u(p[2])?,
            stride: u(p[3])?,
            pad: u(p[4])?,
        },
        3 => LayerKind::Relu,
        4 => LayerKind::AvgPool { size: u(p[0])? },
        5 => LayerKind::Flatten,
        other => return Err(Error::MalformedContainer(format!("unknown layer code {other}"))),
    })
}

/// Parameters are narrowed to f32; models produced by this crate's
/// initialization and training are already f32-exact.
pub fn encode_model(model: &ToyModel) -> Vec<u8> {
    let mut w = ByteWriter::default();
    write_header(
        &mut w,
        &Header {
            kind: Kind::Model,
            tag: 0,
            dims: model.input_shape().dims().iter().map(|&d| d as u64).collect(),
        },
    );
    w.u64(0);
    w.u64(model.meta.seed);
    w.u64(model.meta.epochs);
    w.f64(model.meta.lr);
    w.u64(model.layers().len() as u64);
    for layer in model.layers() {
        let (code, params) = layer_code(&layer.kind);
        w.u32(code);
        for p in params {
            w.u64(p);
        }
    }
    let values: Vec<f32> = model
        .layers()
        .iter()
        .flat_map(|l| l.weight.iter().chain(&l.bias).map(|&v| v as f32))
        .collect();
    w.u64(values.len() as u64);
    w.f32_slice(&values);
    w.into_inner()
}

pub fn decode_model(bytes: &[u8]) -> Result<ToyModel> {
    let mut r = ByteReader::new(bytes);
    let header = read_header(&mut r)?;
    expect_kind(&header, &[Kind::Model])?;
    let dims: Vec<usize> = header.dims.iter().map(|&d| d as usize).collect();
    let input = Shape::from_dims(&dims)?;
    if r.u64("label count")? != 0 {
        return Err(Error::MalformedContainer("model files carry no labels".into()));
    }
    let meta = TrainingMeta {
        seed: r.u64("seed")?,
        epochs: r.u64("epochs")?,
        lr: r.f64("lr")?,
    };
    let n_layers = r.len("layer count", 44)?;
    let mut kinds = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let code = r.u32("layer code")?;
        let mut params = [0u64; 5];
        for p in &mut params {
            *p = r.u64("layer params")?;
        }
        kinds.push(layer_kind(code, params)?);
    }
    let n_values = r.len("value count", 4)?;
    let expected: usize = kinds
        .iter()
        .map(|k| k.weight_len() + k.components().unwrap_or(0))
        .sum();
    if n_values != expected {
        return Err(Error::MalformedContainer(format!(
            "layer table needs {expected} parameters, file has {n_values}"
        )));
    }
    let values = read_finite_f32(&mut r, n_values)?;
    finish(&r)?;
    let mut cursor = values.iter().map(|&v| v as f64);
    let layers = kinds
        .into_iter()
        .map(|kind| {
            let mut layer = Layer::zeros(kind);
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = cursor.next().expect("counted above");
            }
            layer
        })
        .collect();
    ToyModel::from_layers(input, layers, meta)
}

pub fn write_model(model: &ToyModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ToyModel> {
    decode_model(&fs::read(path)?)
}

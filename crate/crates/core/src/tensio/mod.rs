//! Binary container and text formats shared by every stage of the pipeline.
//!
//! All binary files use one little-endian container:
//!
//! ```text
//! offset  size         field
//! 0       4            magic "ACSP"
//! 4       4            format version (u32) = 1
//! 8       4            kind (u32), see [`Kind`]
//! 12      8            tag (u64): layer id for activations / matrices, 0 otherwise
//! 20      8            ndims (u64)
//! 28      8 * ndims    dims (u64 each)
//! ..      8            label count (u64)
//! ..      4 * labels   labels (u32 each)
//! ..      4 * prod     values (f32 each), row-major
//! ```
//!
//! Models use the same preamble with a layer table in place of the label block,
//! see [`model`].

mod codec;
pub mod model;
pub mod plan;

use std::fs;
use std::path::Path;

pub use codec::{ByteReader, ByteWriter};
pub use model::{read_model, write_model};
pub use plan::{read_plan, write_plan, KneeProvenance, PlanEntry, PruningPlan};

use crate::error::{Error, Result};
use crate::sepspace::SeparabilityMatrix;

pub const MAGIC: [u8; 4] = *b"ACSP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Dataset = 1,
    LinearActivations = 2,
    ConvActivations = 3,
    SeparabilityMatrix = 4,
    Model = 5,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Dataset => "Dataset",
            Kind::LinearActivations => "LinearActivations",
            Kind::ConvActivations => "ConvActivations",
            Kind::SeparabilityMatrix => "SeparabilityMatrix",
            Kind::Model => "Model",
        }
    }

    fn from_u32(v: u32) -> Option<Kind> {
        Some(match v {
            1 => Kind::Dataset,
            2 => Kind::LinearActivations,
            3 => Kind::ConvActivations,
            4 => Kind::SeparabilityMatrix,
            5 => Kind::Model,
            _ => return None,
        })
    }
}

/// Fixed preamble of every container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub kind: Kind,
    pub tag: u64,
    pub dims: Vec<u64>,
}

pub(crate) fn write_header(w: &mut ByteWriter, header: &Header) {
    w.bytes(&MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(header.kind as u32);
    w.u64(header.tag);
    w.u64(header.dims.len() as u64);
    for &d in &header.dims {
        w.u64(d);
    }
}

pub(crate) fn read_header(r: &mut ByteReader<'_>) -> Result<Header> {
    let magic = r.array4("magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let raw_kind = r.u32("kind")?;
    let kind = Kind::from_u32(raw_kind)
        .ok_or_else(|| Error::MalformedContainer(format!("unknown container kind {raw_kind}")))?;
    let tag = r.u64("tag")?;
    let ndims = r.len("ndims", 8)?;
    let dims = (0..ndims).map(|_| r.u64("dims")).collect::<Result<Vec<_>>>()?;
    Ok(Header { kind, tag, dims })
}

fn expect_kind(header: &Header, allowed: &[Kind]) -> Result<()> {
    if allowed.contains(&header.kind) {
        Ok(())
    } else {
        Err(Error::WrongKind {
            expected: allowed[0].name(),
            found: header.kind as u32,
        })
    }
}

fn element_count(dims: &[u64]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        usize::try_from(d)
            .ok()
            .and_then(|d| acc.checked_mul(d))
            .ok_or_else(|| Error::MalformedContainer("dimension product overflows".into()))
    })
}

fn write_labels(w: &mut ByteWriter, labels: &[u32]) {
    w.u64(labels.len() as u64);
    for &l in labels {
        w.u32(l);
    }
}

fn read_labels(r: &mut ByteReader<'_>) -> Result<Vec<u32>> {
    let n = r.len("label count", 4)?;
    (0..n).map(|_| r.u32("labels")).collect()
}

fn read_finite_f32(r: &mut ByteReader<'_>, count: usize) -> Result<Vec<f32>> {
    let values = r.f32_vec("values", count)?;
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    Ok(values)
}

fn finish(r: &ByteReader<'_>) -> Result<()> {
    if r.remaining() != 0 {
        return Err(Error::MalformedContainer(format!(
            "{} trailing bytes after payload",
            r.remaining()
        )));
    }
    Ok(())
}

/// Samples with integer class labels.
///
/// Samples are stored row-major as `[n_samples, sample_shape...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    sample_shape: Vec<usize>,
    samples: Vec<f32>,
    labels: Vec<u32>,
    num_classes: usize,
}

impl LabeledDataset {
    /// Validates that every class id in `[0, C)` (with `C = max label + 1`)
    /// occurs at least twice and all values are finite.
    pub fn new(sample_shape: Vec<usize>, samples: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        let width: usize = sample_shape.iter().product();
        if sample_shape.is_empty() || width == 0 {
            return Err(Error::InvalidDataset("sample shape must be non-empty".into()));
        }
        if samples.len() != n * width {
            return Err(Error::InvalidDataset(format!(
                "{} values do not fill {n} samples of {width}",
                samples.len()
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut counts = vec![0usize; num_classes];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(Error::ClassTooSmall { class, count });
        }
        Ok(LabeledDataset {
            sample_shape,
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_width(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let w = self.sample_width();
        &self.samples[i * w..(i + 1) * w]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Copies the listed samples, in the listed order. The result keeps the
    /// parent's class count so logits stay aligned even if a class is absent.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let w = self.sample_width();
        let mut samples = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            samples.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            sample_shape: self.sample_shape.clone(),
            samples,
            labels,
            num_classes: self.num_classes,
        }
    }
}

pub fn encode_dataset(ds: &LabeledDataset) -> Vec<u8> {
    let mut w = ByteWriter::default();
    let mut dims = vec![ds.len() as u64];
    dims.extend(ds.sample_shape.iter().map(|&d| d as u64));
    write_header(
        &mut w,
        &Header {
            kind: Kind::Dataset,
            tag: 0,
            dims,
        },
    );
    write_labels(&mut w, &ds.labels);
    w.f32_slice(&ds.samples);
    w.into_inner()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = ByteReader::new(bytes);
    let header = read_header(&mut r)?;
    expect_kind(&header, &[Kind::Dataset])?;
    if header.dims.len() < 2 {
        return Err(Error::MalformedContainer(
            "dataset needs a sample axis and at least one feature axis".into(),
        ));
    }
    let labels = read_labels(&mut r)?;
    let count = element_count(&header.dims)?;
    let samples = read_finite_f32(&mut r, count)?;
    finish(&r)?;
    if labels.len() as u64 != header.dims[0] {
        return Err(Error::MalformedContainer(format!(
            "{} labels for {} samples",
            labels.len(),
            header.dims[0]
        )));
    }
    let shape = header.dims[1..].iter().map(|&d| d as usize).collect();
    LabeledDataset::new(shape, samples, labels)
}

pub fn write_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    decode_dataset(&fs::read(path)?)
}

/// Which kind of layer produced an activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ComponentKind {
    Linear,
    Conv,
}

/// Per-layer activations for a labeled batch, `[n_samples, n_components, p, p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    pub layer_id: usize,
    pub kind: ComponentKind,
    pub n_samples: usize,
    pub n_components: usize,
    pub p: usize,
    pub values: Vec<f32>,
    pub labels: Vec<u32>,
}

impl ActivationTensor {
    pub fn new(
        layer_id: usize,
        kind: ComponentKind,
        n_components: usize,
        p: usize,
        values: Vec<f32>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        let act = ActivationTensor {
            layer_id,
            kind,
            n_samples: labels.len(),
            n_components,
            p,
            values,
            labels,
        };
        act.validate()?;
        Ok(act)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::ShapeMismatch("activation map size p must be >= 1".into()));
        }
        if self.kind == ComponentKind::Linear && self.p != 1 {
            return Err(Error::ShapeMismatch(format!(
                "linear activations must have p = 1, got {}",
                self.p
            )));
        }
        if self.labels.len() != self.n_samples {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} samples",
                self.labels.len(),
                self.n_samples
            )));
        }
        let expected = self.n_samples * self.n_components * self.p * self.p;
        if self.values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} activation values, got {}",
                self.values.len()
            )));
        }
        if let Some(index) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(())
    }

    /// Activation map of `component` for sample `t`, `p * p` values row-major.
    pub fn map(&self, t: usize, component: usize) -> &[f32] {
        let pp = self.p * self.p;
        let start = (t * self.n_components + component) * pp;
        &self.values[start..start + pp]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }
}

pub fn encode_activations(act: &ActivationTensor) -> Vec<u8> {
    let mut w = ByteWriter::default();
    let kind = match act.kind {
        ComponentKind::Linear => Kind::LinearActivations,
        ComponentKind::Conv => Kind::ConvActivations,
    };
    write_header(
        &mut w,
        &Header {
            kind,
            tag: act.layer_id as u64,
            dims: vec![
                act.n_samples as u64,
                act.n_components as u64,
                act.p as u64,
                act.p as u64,
            ],
        },
    );
    write_labels(&mut w, &act.labels);
    w.f32_slice(&act.values);
    w.into_inner()
}

pub fn decode_activations(bytes: &[u8]) -> Result<ActivationTensor> {
    let mut r = ByteReader::new(bytes);
    let header = read_header(&mut r)?;
    expect_kind(&header, &[Kind::LinearActivations, Kind::ConvActivations])?;
    let [n, comps, rows, cols] = header.dims[..] else {
        return Err(Error::MalformedContainer(format!(
            "activations need 4 dims, found {}",
            header.dims.len()
        )));
    };
    if rows != cols {
        return Err(Error::MalformedContainer(format!(
            "activation maps must be square, found {rows}x{cols}"
        )));
    }
    let labels = read_labels(&mut r)?;
    let values = read_finite_f32(&mut r, element_count(&header.dims)?)?;
    finish(&r)?;
    if labels.len() as u64 != n {
        return Err(Error::MalformedContainer(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    let kind = match header.kind {
        Kind::LinearActivations => ComponentKind::Linear,
        _ => ComponentKind::Conv,
    };
    ActivationTensor::new(
        header.tag as usize,
        kind,
        comps as usize,
        rows as usize,
        values,
        labels,
    )
}

pub fn write_activations(act: &ActivationTensor, path: impl AsRef<Path>) -> Result<()> {
    act.validate()?;
    fs::write(path, encode_activations(act))?;
    Ok(())
}

pub fn read_activations(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    decode_activations(&fs::read(path)?)
}

/// Inspection dump of a separability matrix. Values are narrowed to f32.
///
/// dims are `[rows, pairs, p, p]`, which is exactly the column layout.
pub fn encode_matrix(m: &SeparabilityMatrix) -> Vec<u8> {
    let mut w = ByteWriter::default();
    write_header(
        &mut w,
        &Header {
            kind: Kind::SeparabilityMatrix,
            tag: m.layer_id as u64,
            dims: vec![m.rows as u64, m.pairs.len() as u64, m.p as u64, m.p as u64],
        },
    );
    write_labels(&mut w, &[]);
    let narrowed: Vec<f32> = m.values.iter().map(|&v| v as f32).collect();
    w.f32_slice(&narrowed);
    w.into_inner()
}

/// Returns `(layer_id, dims, values)` of a matrix dump.
pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, Vec<usize>, Vec<f32>)> {
    let mut r = ByteReader::new(bytes);
    let header = read_header(&mut r)?;
    expect_kind(&header, &[Kind::SeparabilityMatrix])?;
    if header.dims.len() != 4 {
        return Err(Error::MalformedContainer("matrix dump needs 4 dims".into()));
    }
    let labels = read_labels(&mut r)?;
    if !labels.is_empty() {
        return Err(Error::MalformedContainer("matrix dump carries no labels".into()));
    }
    let values = read_finite_f32(&mut r, element_count(&header.dims)?)?;
    finish(&r)?;
    Ok((
        header.tag as usize,
        header.dims.iter().map(|&d| d as usize).collect(),
        values,
    ))
}

pub fn write_matrix(m: &SeparabilityMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_matrix(m))?;
    Ok(())
}

//! Seeded synthetic classification data.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::tensio::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    /// One isotropic unit-variance Gaussian per class; centers evenly spaced
    /// on a circle in the first two dimensions.
    Blobs,
    /// Concentric noisy annuli in the first two dimensions.
    Rings,
}

impl FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DataKind::Blobs),
            "rings" => Ok(DataKind::Rings),
            other => Err(Error::BadParams(format!("unknown dataset kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub kind: DataKind,
    pub n: usize,
    pub classes: usize,
    pub dims: usize,
    pub seed: u64,
}

/// Samples are interleaved by class (`label = i mod C`), so class sizes
/// differ by at most one.
pub fn generate(p: &GenParams) -> Result<LabeledDataset> {
    if p.classes < 2 {
        return Err(Error::BadParams(format!(
            "need at least 2 classes, got {}",
            p.classes
        )));
    }
    if p.n < 2 * p.classes {
        return Err(Error::BadParams(format!(
            "need at least 2 samples per class: n = {} < 2 * {}",
            p.n, p.classes
        )));
    }
    if p.dims == 0 || (p.kind == DataKind::Rings && p.dims < 2) {
        return Err(Error::BadParams(format!("unsupported dimensionality {}", p.dims)));
    }
    let mut rng = substream(p.seed, Stream::Data);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let c = p.classes;

    let radius = 4.0 * (c as f64 / 4.0).max(1.0);
    let centers: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            let angle = TAU * k as f64 / c as f64;
            let mut center = vec![0.0; p.dims];
            if p.dims == 1 {
                center[0] = 4.0 * k as f64;
            } else {
                center[0] = radius * angle.cos();
                center[1] = radius * angle.sin();
                for v in center.iter_mut().skip(2) {
                    *v = rng.random_range(-2.0..2.0);
                }
            }
            center
        })
        .collect();

    let mut samples = Vec::with_capacity(p.n * p.dims);
    let mut labels = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let label = i % c;
        labels.push(label as u32);
        match p.kind {
            DataKind::Blobs => {
                for &m in &centers[label] {
                    samples.push((m + unit.sample(&mut rng)) as f32);
                }
            }
            DataKind::Rings => {
                let r = 1.0 + 1.5 * label as f64 + 0.15 * unit.sample(&mut rng);
                let theta = rng.random_range(0.0..TAU);
                samples.push((r * theta.cos()) as f32);
                samples.push((r * theta.sin()) as f32);
                for _ in 2..p.dims {
                    samples.push((0.5 * unit.sample(&mut rng)) as f32);
                }
            }
        }
    }
    LabeledDataset::new(vec![p.dims], samples, labels)
}

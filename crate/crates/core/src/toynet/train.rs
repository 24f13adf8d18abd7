use rand::seq::SliceRandom;

use super::ToyModel;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::tensio::LabeledDataset;

/// Plain mini-batch SGD (no momentum) on softmax cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Layers with index below this are left untouched.
    pub frozen_below: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
            frozen_below: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Full-set loss and accuracy before training (epoch 0) and after each epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn initial(&self) -> Option<&EpochLog> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.loss, e.accuracy));
        }
        s
    }
}

pub fn train(model: &ToyModel, data: &LabeledDataset, cfg: &TrainConfig) -> Result<(ToyModel, TrainLog)> {
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::BadParams(format!(
            "learning rate must be > 0, got {}",
            cfg.lr
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::BadParams("batch size must be >= 1".into()));
    }
    let mut model = model.clone();
    let mut log = TrainLog::default();
    let start = model.evaluate(data)?;
    log.epochs.push(EpochLog {
        epoch: 0,
        loss: start.loss,
        accuracy: start.accuracy,
    });
    if cfg.epochs == 0 {
        return Ok((model, log));
    }

    let mut rng = substream(cfg.seed, Stream::Train);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = model.loss_and_gradients(data, batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for (i, (layer, g)) in model.layers.iter_mut().zip(&grads.layers).enumerate() {
                if i < cfg.frozen_below {
                    continue;
                }
                for (w, gw) in layer.weight.iter_mut().zip(&g.weight) {
                    *w -= cfg.lr * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= cfg.lr * gb;
                }
            }
            model.round_parameters();
        }
        let eval = model.evaluate(data)?;
        if !eval.loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: eval.loss,
            accuracy: eval.accuracy,
        });
    }
    model.meta.epochs += cfg.epochs as u64;
    model.meta.lr = cfg.lr;
    Ok((model, log))
}

/// Short retraining on a stratified random portion of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub fraction: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub frozen_below: usize,
}

/// `ceil(fraction * n)` indices drawn per class in proportion to class size
/// (largest remainder, ties to the lower class id), at least one per class
/// while the budget allows. Returned in ascending order.
pub fn stratified_subset(data: &LabeledDataset, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::BadParams(format!(
            "fine-tune fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = data.len();
    let target = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    if target == n {
        return Ok((0..n).collect());
    }
    let mut rng = substream(seed, Stream::Finetune);
    let classes = data.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }

    let exact: Vec<f64> = by_class
        .iter()
        .map(|m| m.len() as f64 * target as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = target - quota.iter().sum::<usize>();
    // every present class gets at least one sample first
    for c in 0..classes {
        if remaining > 0 && quota[c] == 0 && !by_class[c].is_empty() {
            quota[c] = 1;
            remaining -= 1;
        }
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    while remaining > 0 {
        let before = remaining;
        for &c in &order {
            if remaining > 0 && quota[c] < by_class[c].len() {
                quota[c] += 1;
                remaining -= 1;
            }
        }
        if before == remaining {
            break;
        }
    }
    let mut picked: Vec<usize> = by_class
        .iter()
        .zip(&quota)
        .flat_map(|(m, &q)| m[..q.min(m.len())].iter().copied())
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

pub fn finetune(
    model: &ToyModel,
    data: &LabeledDataset,
    cfg: &FinetuneConfig,
) -> Result<(ToyModel, TrainLog)> {
    let subset = stratified_subset(data, cfg.fraction, cfg.seed)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        frozen_below: cfg.frozen_below,
    };
    let (mut tuned, log) = if subset.len() == data.len() {
        train(model, data, &train_cfg)?
    } else {
        train(model, &data.subset(&subset), &train_cfg)?
    };
    // the model's recorded training schedule stays the original one
    tuned.meta = model.meta;
    Ok((tuned, log))
}

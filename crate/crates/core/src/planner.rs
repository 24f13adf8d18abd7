//! Layer-by-layer pruning loop.
//!
//! For each prunable layer, in forward order: capture activations, build the
//! separability space, sweep k-medoids over every subset size, pick the knee
//! of the MSS curve, compose the kept set, cut the layer and fine-tune. Each
//! layer sees the model as left by all previous layers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cluster::{sweep, ClusterResult, DistanceMatrix, MssCurve, SweepRange};
use crate::error::{Error, Result};
use crate::knee::{find_knee, KneeResult, DEFAULT_DEGREE};
use crate::rng::indexed_seed;
use crate::sepspace::build_space;
use crate::tensio::{ActivationTensor, LabeledDataset, PlanEntry, PruningPlan};
use crate::toynet::{apply_prune, count_flops, finetune, CapturePoint, FinetuneConfig, ToyModel, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Keep each cluster's medoid.
    Regular,
    /// Keep each cluster's member with the largest incoming-weight norm.
    #[default]
    Weighted,
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(SelectionMode::Regular),
            "weighted" => Ok(SelectionMode::Weighted),
            other => Err(Error::BadParams(format!("unknown selection mode {other:?}"))),
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Regular => "regular",
            SelectionMode::Weighted => "weighted",
        })
    }
}

/// L2 norm of component `j`'s incoming weights (bias excluded).
pub fn component_norm(model: &ToyModel, layer_id: usize, j: usize) -> Result<f64> {
    let n = model.n_components(layer_id)?;
    if j >= n {
        return Err(Error::BadParams(format!(
            "component {j} out of range for {n} components"
        )));
    }
    let w = model.layers()[layer_id].component_weights(j);
    Ok(w.iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub fn component_norms(model: &ToyModel, layer_id: usize) -> Result<Vec<f64>> {
    let n = model.n_components(layer_id)?;
    (0..n).map(|j| component_norm(model, layer_id, j)).collect()
}

/// One representative per cluster, sorted. Weighted ties go to the lowest index.
pub fn compose(result: &ClusterResult, mode: SelectionMode, norms: &[f64]) -> Vec<usize> {
    let mut kept: Vec<usize> = match mode {
        SelectionMode::Regular => result.medoids.clone(),
        SelectionMode::Weighted => result
            .clusters()
            .iter()
            .map(|members| {
                let mut best = members[0];
                for &j in &members[1..] {
                    if norms[j] > norms[best] {
                        best = j;
                    }
                }
                best
            })
            .collect(),
    };
    kept.sort_unstable();
    kept
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub degree: usize,
    pub selection: SelectionMode,
    pub stride: usize,
    pub ft_fraction: f64,
    pub ft_epochs: usize,
    /// Defaults to a tenth of the model's training learning rate.
    pub ft_lr: Option<f64>,
    pub ft_batch_size: usize,
    /// Fine-tune only the layers after the one just pruned.
    pub freeze_upstream: bool,
    pub capture: CapturePoint,
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            degree: DEFAULT_DEGREE,
            selection: SelectionMode::Weighted,
            stride: 1,
            ft_fraction: 0.25,
            ft_epochs: 2,
            ft_lr: None,
            ft_batch_size: 32,
            freeze_upstream: false,
            capture: CapturePoint::PostActivation,
            seed: 0,
        }
    }
}

const FALLBACK_LR: f64 = 0.05;

impl PruneConfig {
    pub fn effective_ft_lr(&self, model: &ToyModel) -> f64 {
        self.ft_lr.unwrap_or_else(|| {
            let base = if model.meta.lr > 0.0 {
                model.meta.lr
            } else {
                FALLBACK_LR
            };
            base / 10.0
        })
    }

    /// Flat key/value echo of the configuration.
    pub fn to_map(&self, model: &ToyModel) -> BTreeMap<String, String> {
        let capture = match self.capture {
            CapturePoint::PostActivation => "post",
            CapturePoint::PreActivation => "pre",
        };
        [
            ("degree", self.degree.to_string()),
            ("selection", self.selection.to_string()),
            ("stride", self.stride.to_string()),
            ("ft_fraction", self.ft_fraction.to_string()),
            ("ft_epochs", self.ft_epochs.to_string()),
            ("ft_lr", self.effective_ft_lr(model).to_string()),
            ("ft_batch_size", self.ft_batch_size.to_string()),
            ("freeze_upstream", self.freeze_upstream.to_string()),
            ("capture", capture.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub layer_id: usize,
    pub n_components: usize,
    pub k_selected: usize,
    pub kept_indices: Vec<usize>,
    pub mss_curve: Option<MssCurve>,
    pub knee: Option<KneeResult>,
    /// Whole-model FLOPs before and after this layer's cut.
    pub flops_before: u64,
    pub flops_after: u64,
    pub selection_mode: SelectionMode,
    pub degree: usize,
    /// Set when the layer was kept whole because of a degenerate condition.
    pub warning: Option<String>,
    pub finetune_log: TrainLog,
}

impl LayerReport {
    pub fn mss_curve_file(&self) -> String {
        format!("mss_layer{}.csv", self.layer_id)
    }

    pub fn plan_entry(&self) -> PlanEntry {
        PlanEntry {
            layer_id: self.layer_id,
            n_components: self.n_components,
            kept_indices: self.kept_indices.clone(),
            k_selected: self.k_selected,
            mss_curve_ref: self.mss_curve.as_ref().map(|_| self.mss_curve_file()),
            selection_mode: self.selection_mode,
            knee_degree: self.degree,
            knee: self.knee.as_ref().map(KneeResult::provenance),
            warning: self.warning.clone(),
        }
    }
}

/// Kept set of one layer, with the diagnostics that led to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub kept: Vec<usize>,
    pub curve: Option<MssCurve>,
    pub knee: Option<KneeResult>,
    /// Set when every component was kept for lack of a usable knee.
    pub warning: Option<String>,
}

/// Runs space construction, the k-sweep, knee detection and composition on
/// captured activations. `norms` holds one incoming-weight norm per component
/// and is only read in weighted mode.
pub fn select_components(act: &ActivationTensor, norms: &[f64], cfg: &PruneConfig) -> Result<Selection> {
    let (layer_id, n) = (act.layer_id, act.n_components);
    if cfg.selection == SelectionMode::Weighted && norms.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} norms for {n} components",
            norms.len()
        )));
    }
    let keep_all = |warning: String, curve, knee| {
        warn!("layer {layer_id}: {warning}; keeping all {n} components");
        Selection {
            kept: (0..n).collect(),
            curve,
            knee,
            warning: Some(warning),
        }
    };
    let space = match build_space(act) {
        Ok(s) => s,
        Err(e @ Error::ClassTooSmall { .. }) => return Ok(keep_all(e.to_string(), None, None)),
        Err(e) => return Err(e),
    };
    let range = SweepRange::with_stride(n, cfg.stride);
    if n < 2 || range.ks().len() < cfg.degree + 2 {
        return Ok(keep_all(
            format!("{n} components are too few for a degree-{} knee", cfg.degree),
            None,
            None,
        ));
    }
    let dist = DistanceMatrix::euclidean(&space);
    let sw = sweep(&dist, layer_id, range)?;
    let knee = find_knee(&sw.curve, cfg.degree)?;
    let Some(k) = knee.k_prime else {
        return Ok(keep_all(
            "no knee in the MSS curve".into(),
            Some(sw.curve),
            Some(knee),
        ));
    };
    let kept = compose(&sw.results[&k], cfg.selection, norms);
    Ok(Selection {
        kept,
        curve: Some(sw.curve),
        knee: Some(knee),
        warning: None,
    })
}

fn select(model: &ToyModel, data: &LabeledDataset, layer_id: usize, cfg: &PruneConfig) -> Result<Selection> {
    model.check_prunable(layer_id)?;
    let act = model.capture_activations(data, layer_id, cfg.capture)?;
    select_components(&act, &component_norms(model, layer_id)?, cfg)
}

/// Prunes one layer and fine-tunes the result.
pub fn prune_layer(
    model: &ToyModel,
    data: &LabeledDataset,
    layer_id: usize,
    cfg: &PruneConfig,
) -> Result<(ToyModel, LayerReport)> {
    let run = || -> Result<(ToyModel, LayerReport)> {
        let n = model.check_prunable(layer_id)?;
        let flops_before = count_flops(model).total;
        let sel = select(model, data, layer_id, cfg)?;
        let mut entry = PlanEntry::new(layer_id, n, sel.kept.clone());
        entry.selection_mode = cfg.selection;
        entry.knee_degree = cfg.degree;
        let pruned = if sel.kept.len() < n {
            let plan = PruningPlan {
                layers: vec![entry],
                ..PruningPlan::default()
            };
            apply_prune(model, &plan)?
        } else {
            model.clone()
        };
        // a layer that kept everything has nothing to recover from
        let (tuned, finetune_log) = if cfg.ft_epochs > 0 && sel.kept.len() < n {
            let ft = FinetuneConfig {
                fraction: cfg.ft_fraction,
                epochs: cfg.ft_epochs,
                lr: cfg.effective_ft_lr(model),
                batch_size: cfg.ft_batch_size,
                seed: indexed_seed(cfg.seed, layer_id as u64 + 1),
                frozen_below: if cfg.freeze_upstream { layer_id + 1 } else { 0 },
            };
            finetune(&pruned, data, &ft)?
        } else {
            (pruned, TrainLog::default())
        };
        let flops_after = count_flops(&tuned).total;
        info!(
            "layer {layer_id}: kept {}/{n}, flops {flops_before} -> {flops_after}",
            sel.kept.len()
        );
        let report = LayerReport {
            layer_id,
            n_components: n,
            k_selected: sel.kept.len(),
            kept_indices: sel.kept,
            mss_curve: sel.curve,
            knee: sel.knee,
            flops_before,
            flops_after,
            selection_mode: cfg.selection,
            degree: cfg.degree,
            warning: sel.warning,
            finetune_log,
        };
        Ok((tuned, report))
    };
    run().map_err(|e| e.in_layer(layer_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub model: ToyModel,
    pub reports: Vec<LayerReport>,
    pub flops_before: u64,
    pub flops_after: u64,
    pub config: BTreeMap<String, String>,
}

impl PruneOutcome {
    pub fn speedup(&self) -> f64 {
        if self.flops_after == 0 {
            return 1.0;
        }
        self.flops_before as f64 / self.flops_after as f64
    }

    /// Replayable plan of every layer that could be recorded (at least two
    /// components).
    pub fn plan(&self) -> PruningPlan {
        PruningPlan {
            config: self.config.clone(),
            layers: self
                .reports
                .iter()
                .filter(|r| r.n_components >= 2)
                .map(LayerReport::plan_entry)
                .collect(),
            ..PruningPlan::default()
        }
    }
}

pub fn prune_model(model: &ToyModel, data: &LabeledDataset, cfg: &PruneConfig) -> Result<PruneOutcome> {
    prune_model_observed(model, data, cfg, |_, _| {})
}

/// As [`prune_model`], calling `observe(layer_id, model)` with the model each
/// layer is about to be pruned from.
pub fn prune_model_observed(
    model: &ToyModel,
    data: &LabeledDataset,
    cfg: &PruneConfig,
    mut observe: impl FnMut(usize, &ToyModel),
) -> Result<PruneOutcome> {
    if cfg.stride == 0 {
        return Err(Error::BadParams("sweep stride must be >= 1".into()));
    }
    let config = cfg.to_map(model);
    let flops_before = count_flops(model).total;
    let mut current = model.clone();
    let mut reports = Vec::new();
    for layer_id in model.prunable_layers() {
        observe(layer_id, &current);
        let (next, report) = prune_layer(&current, data, layer_id, cfg)?;
        current = next;
        reports.push(report);
    }
    let flops_after = count_flops(&current).total;
    Ok(PruneOutcome {
        model: current,
        reports,
        flops_before,
        flops_after,
        config,
    })
}

//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datagen::{generate, DataKind, GenParams};
use crate::error::{Error, Result};
use crate::planner::{prune_model, PruneConfig, SelectionMode};
use crate::report::{mss_svg, summary, AccuracyPair};
use crate::tensio::{read_dataset, read_model, read_plan, write_dataset, write_model, write_plan};
use crate::toynet::{apply_prune, arch, count_flops, train, CapturePoint, ToyModel, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "acsp",
    version,
    about = "Structured pruning by complementary separation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    GenData(GenDataArgs),
    /// Train a toy network and print the per-epoch log as CSV.
    Train(TrainArgs),
    /// Prune every hidden layer of a trained model.
    Prune(PruneArgs),
    /// Print accuracy and FLOPs of a model on a dataset.
    Eval(EvalArgs),
    /// Apply a saved pruning plan to a model.
    Apply(ApplyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Blobs,
    Rings,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    Regular,
    Weighted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaptureArg {
    Post,
    Pre,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// e.g. `mlp:2-64-64-32-4` or `cnn:1x8x8-c8k3-p2-c16k3-p2-f-32-4`
    #[arg(long)]
    pub arch: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    #[arg(long, value_enum, default_value = "weighted")]
    pub selection: SelectionArg,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0.25)]
    pub ft_fraction: f64,
    #[arg(long, default_value_t = 2)]
    pub ft_epochs: usize,
    /// Defaults to a tenth of the model's training learning rate.
    #[arg(long)]
    pub ft_lr: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub ft_batch_size: usize,
    /// Fine-tune only the layers after the one just pruned.
    #[arg(long)]
    pub freeze_upstream: bool,
    #[arg(long, value_enum, default_value = "post")]
    pub capture: CaptureArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write an SVG chart of every MSS curve.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl PruneArgs {
    pub fn config(&self) -> PruneConfig {
        PruneConfig {
            degree: self.degree,
            selection: match self.selection {
                SelectionArg::Regular => SelectionMode::Regular,
                SelectionArg::Weighted => SelectionMode::Weighted,
            },
            stride: self.stride,
            ft_fraction: self.ft_fraction,
            ft_epochs: self.ft_epochs,
            ft_lr: self.ft_lr,
            ft_batch_size: self.ft_batch_size,
            freeze_upstream: self.freeze_upstream,
            capture: match self.capture {
                CaptureArg::Post => CapturePoint::PostActivation,
                CaptureArg::Pre => CapturePoint::PreActivation,
            },
            seed: self.seed,
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train_cmd(&a, out),
        Command::Prune(a) => prune_cmd(&a, out),
        Command::Eval(a) => eval_cmd(&a, out),
        Command::Apply(a) => apply_cmd(&a),
    }
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let ds = generate(&GenParams {
        kind: match a.kind {
            KindArg::Blobs => DataKind::Blobs,
            KindArg::Rings => DataKind::Rings,
        },
        n: a.n,
        classes: a.classes,
        dims: a.dims,
        seed: a.seed,
    })?;
    write_dataset(&ds, &a.out)
}

fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let spec = arch::parse(&a.arch)?;
    let data = read_dataset(&a.data)?;
    let model = ToyModel::new(spec.input, &spec.layers, a.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        frozen_below: 0,
    };
    let (trained, log) = train(&model, &data, &cfg)?;
    write_model(&trained, &a.out)?;
    out.write_all(log.to_csv().as_bytes())?;
    Ok(())
}

fn prune_cmd(a: &PruneArgs, out: &mut dyn Write) -> Result<()> {
    let model = read_model(&a.model)?;
    let data = read_dataset(&a.data)?;
    let outcome = prune_model(&model, &data, &a.config())?;
    let acc = AccuracyPair {
        base: model.accuracy(&data)?,
        pruned: outcome.model.accuracy(&data)?,
    };
    fs::create_dir_all(&a.out)?;
    let dir = Path::new(&a.out);
    write_model(&outcome.model, dir.join("pruned.model"))?;
    write_plan(&outcome.plan(), dir.join("plan.json"))?;
    for r in &outcome.reports {
        if let Some(curve) = &r.mss_curve {
            fs::write(dir.join(r.mss_curve_file()), curve.to_csv())?;
            if a.svg {
                fs::write(
                    dir.join(format!("mss_layer{}.svg", r.layer_id)),
                    mss_svg(curve, r.knee.as_ref()),
                )?;
            }
        }
        if let Some(knee) = &r.knee {
            fs::write(
                dir.join(format!("knee_layer{}.csv", r.layer_id)),
                knee.difference_csv(),
            )?;
        }
    }
    let text = summary(&outcome, acc);
    fs::write(dir.join("summary.txt"), &text)?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn eval_cmd(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = read_model(&a.model)?;
    let data = read_dataset(&a.data)?;
    let accuracy = model.accuracy(&data)?;
    writeln!(out, "accuracy={accuracy:.6} flops={}", count_flops(&model).total)?;
    Ok(())
}

fn apply_cmd(a: &ApplyArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let plan = read_plan(&a.plan)?;
    write_model(&apply_prune(&model, &plan)?, &a.out)
}

/// One-line, machine-parseable description of a failure.
pub fn error_line(e: &Error) -> String {
    let layer = match e {
        Error::Layer { layer_id, .. } => format!(" layer={layer_id}"),
        _ => String::new(),
    };
    let offset = match e {
        Error::Parse { offset, .. } => format!(" offset={offset}"),
        Error::Layer { source, .. } => match source.as_ref() {
            Error::Parse { offset, .. } => format!(" offset={offset}"),
            _ => String::new(),
        },
        _ => String::new(),
    };
    format!(
        "error: kind={}{layer}{offset} message={:?}",
        e.kind(),
        e.to_string()
    )
}

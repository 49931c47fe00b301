//! Command-line front end. Exit codes: 0 success, 2 usage or validation,
//! 3 I/O, 4 dataset, 5 checkpoint.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::data::{load_dataset, synthesize, write_dataset, DataError, DiscrepancyLaw, SynthConfig};
use crate::epm::{self, EigenvectorMode, Envelope, LimitingState, PerturbationSpec};
use crate::ml::{Checkpoint, LossKind, MlError, TrainingConfig};
use crate::pipeline::{self, PipelineError};
use crate::tensor::{is_realizable, AnisotropyTensor, SymTensor3, TOL_PSD};

#[derive(Debug, Parser)]
#[command(name = "mlepm", version, about = "Learned TKE correction with eigenspace perturbation envelopes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic paired dataset
    Synth(SynthArgs),
    /// Train the correction network on a dataset
    Train(TrainArgs),
    /// Score held-out stations and write a report
    Evaluate(EvaluateArgs),
    /// Perturb one Reynolds stress tensor and print the envelope
    Perturb(PerturbArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    pub profiles: usize,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Noise std as a fraction of each profile's peak high-fidelity TKE
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Coefficient of the power-law discrepancy
    #[arg(long, default_value_t = 1.8)]
    pub law_coefficient: f64,
    /// Exponent of the power-law discrepancy
    #[arg(long, default_value_t = 0.9)]
    pub law_exponent: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path; the history goes next to it as `<stem>.history.json`
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = LossKind::Mae)]
    pub loss: LossKind,
    /// Freestream velocity for every case, instead of the sidecar file
    #[arg(long)]
    pub u_inf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub u_inf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Turbulent kinetic energy
    #[arg(long)]
    pub k: f64,
    /// Anisotropy components "xx,yy,zz,xy,xz,yz"
    #[arg(long, allow_hyphen_values = true)]
    pub b: String,
    #[arg(long)]
    pub delta_b: f64,
    #[arg(long, value_delimiter = ',', default_value = "1c,2c,3c")]
    pub targets: Vec<LimitingState>,
    /// Scale the perturbed TKE by this factor
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Exchange the extreme eigenvectors
    #[arg(long)]
    pub swap_eigenvectors: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Dataset(String),
    #[error("{0}")]
    Checkpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Dataset(_) => 4,
            CliError::Checkpoint(_) => 5,
        }
    }
}

fn from_data(e: DataError, context: &Path) -> CliError {
    let msg = format!("{}: {e}", context.display());
    match e {
        DataError::Io(_) => CliError::Io(msg),
        DataError::InvalidConfig(_) => CliError::Usage(msg),
        _ => CliError::Dataset(msg),
    }
}

fn from_pipeline(e: PipelineError, context: &Path) -> CliError {
    match e {
        PipelineError::Data(d) => from_data(d, context),
        PipelineError::Ml(MlError::InvalidConfig(m)) => CliError::Usage(m),
        PipelineError::Io(io) => CliError::Io(io.to_string()),
        other => CliError::Dataset(format!("{}: {other}", context.display())),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Perturb(a) => perturb(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        profiles: a.profiles,
        points: a.points,
        noise: a.noise,
        seed: a.seed,
        law: DiscrepancyLaw::Power {
            coefficient: a.law_coefficient,
            exponent: a.law_exponent,
        },
        ..SynthConfig::default()
    };
    let ps = synthesize(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    write_dataset(&ps, &a.out).map_err(|e| io_error(&a.out, e))?;
    println!("wrote {} rows to {}", ps.record_count(), a.out.display());
    Ok(())
}

/// `model.json` → `model.history.json`
pub fn history_path(model: &Path) -> PathBuf {
    model.with_extension("history.json")
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let config = TrainingConfig {
        learning_rate: a.lr,
        patience: a.patience,
        max_epochs: a.max_epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        loss: a.loss,
        ..TrainingConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ps = load_dataset(&a.data, a.u_inf).map_err(|e| from_data(e, &a.data))?;
    let run = pipeline::train_correction(&ps, &config).map_err(|e| from_pipeline(e, &a.data))?;

    run.checkpoint.save(&a.out).map_err(|e| io_error(&a.out, e))?;
    let history = history_path(&a.out);
    let mut text = serde_json::to_string_pretty(&run.history).map_err(|e| io_error(&history, e))?;
    text.push('\n');
    std::fs::write(&history, text).map_err(|e| io_error(&history, e))?;

    let h = &run.history;
    let last = h.epochs_run() - 1;
    println!(
        "epochs {} best {} stopped_early {} train_{loss} {} val_{loss} {}",
        h.epochs_run(),
        h.best_epoch,
        h.stopped_early,
        h.train_loss[last],
        h.val_loss[last],
        loss = h.loss,
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(&a.model).map_err(|e| CliError::Checkpoint(format!("{}: {e}", a.model.display())))?;
    let ps = load_dataset(&a.data, a.u_inf).map_err(|e| from_data(e, &a.data))?;
    let reports = pipeline::evaluate_held_out(&ps, &checkpoint).map_err(|e| match e {
        PipelineError::Ml(m) => CliError::Checkpoint(format!("{}: {m}", a.model.display())),
        other => from_pipeline(other, &a.data),
    })?;
    let summary = pipeline::write_report(&a.report, &reports).map_err(|e| io_error(&a.report, e))?;
    let g = &summary.aggregate;
    let factor = g.improvement_factor.map_or("inf".to_string(), |f| f.to_string());
    println!(
        "stations {} mae_baseline {} mae_corrected {} improvement_factor {factor} coverage {}",
        g.stations, g.mae_baseline, g.mae_corrected, g.coverage
    );
    Ok(())
}

fn parse_components(text: &str) -> Result<[f64; 6], CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--b: {e}")))?;
    <[f64; 6]>::try_from(values).map_err(|v| CliError::Usage(format!("--b needs 6 components, got {}", v.len())))
}

#[derive(Debug, Serialize)]
struct PerturbedMember {
    target: LimitingState,
    tensor: SymTensor3,
}

#[derive(Debug, Serialize)]
struct PerturbOutput {
    k: f64,
    input: SymTensor3,
    delta_b: f64,
    members: Vec<PerturbedMember>,
    envelope: Envelope,
}

/// `R = 2k (b + I/3)` from the command-line arguments; must be realizable.
pub fn stress_from_args(k: f64, b: &SymTensor3) -> Result<SymTensor3, CliError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(CliError::Usage(format!("--k must be positive, got {k}")));
    }
    if b.trace().abs() > 1e-9 {
        return Err(CliError::Usage(format!("anisotropy must be traceless, trace = {}", b.trace())));
    }
    let r = b.add(&SymTensor3::identity().scale(1.0 / 3.0)).scale(2.0 * k);
    if !r.is_finite() || !is_realizable(&r, TOL_PSD) {
        return Err(CliError::Usage("input tensor is not realizable".into()));
    }
    Ok(r)
}

fn perturb(a: PerturbArgs) -> Result<(), CliError> {
    let b = AnisotropyTensor(SymTensor3::from_components(parse_components(&a.b)?));
    let r = stress_from_args(a.k, b.tensor())?;
    let mode = if a.swap_eigenvectors {
        EigenvectorMode::SwapExtremes
    } else {
        EigenvectorMode::Keep
    };
    let specs: Vec<PerturbationSpec> = a
        .targets
        .iter()
        .map(|&target| PerturbationSpec {
            target,
            delta_b: a.delta_b,
            amplitude_factor: a.amplitude,
            eigenvector_mode: mode,
        })
        .collect();
    let usage = |e: epm::EpmError| CliError::Usage(e.to_string());
    let members = epm::envelope_members(&r, &specs).map_err(usage)?;
    let out = PerturbOutput {
        k: a.k,
        input: r,
        delta_b: a.delta_b,
        members: specs
            .iter()
            .zip(&members[1..])
            .map(|(s, m)| PerturbedMember {
                target: s.target,
                tensor: *m,
            })
            .collect(),
        envelope: Envelope::from_members(&members),
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

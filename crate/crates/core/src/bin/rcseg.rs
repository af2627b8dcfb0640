use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use rcseg::io::synth::synth;
use rcseg::io::{read_kind, read_labels, read_volume, write_labels, write_volume, PipelineConfig, VolumeKind};
use rcseg::metrics::{dice, report_csv, stage_report};
use rcseg::rcnet::{forward, infer, read_checkpoint, train_toy, write_checkpoint, ConnectionMask, Skips, UnitType};
use rcseg::select::select;
use rcseg::walker::{refine_with, IntensityVolume};
use rcseg::{LabelVolume, ProbabilityMap, Volume};

#[derive(Parser)]
#[command(name = "rcseg", version, about = "Randomized-connection segmentation with random-walker refinement")]
struct Cli {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic intensity volume and its ground truth.
    Synth(SynthArgs),
    /// Train one toy network and write a checkpoint.
    Train(TrainArgs),
    /// Write the foreground probability map of a trained network.
    Infer(InferArgs),
    /// Run node selection and write the candidate mask.
    Select(SelectArgs),
    /// Node selection plus random-walker inference.
    Refine(RefineArgs),
    /// Print the Dice overlap of two label volumes.
    Dice { a: PathBuf, b: PathBuf },
    /// Dice of several stages against a reference, as CSV.
    Report(ReportArgs),
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not a finite non-negative number"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match non_negative(s)? {
        v if v > 0.0 => Ok(v),
        v => Err(format!("{v} must be positive")),
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, num_args = 3, value_names = ["D", "H", "W"], default_values_t = [32, 32, 32])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    blobs: usize,
    #[arg(long, default_value_t = 0.3, value_parser = non_negative)]
    noise: f64,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    unit: UnitType,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Feature maps per level; the depth is one less than their count.
    #[arg(long, num_args = 1..)]
    widths: Option<Vec<usize>>,
    #[arg(long, value_parser = non_negative)]
    lr: Option<f64>,
    #[arg(long, value_parser = unit_interval)]
    alpha: Option<f64>,
    /// Seed for mask sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for weight initialisation.
    #[arg(long)]
    init_seed: Option<u64>,
    /// Train with every skip connection on.
    #[arg(long)]
    fixed: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use every skip at full strength instead of scaling by alpha.
    #[arg(long)]
    all_skips: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, num_args = 1.., required = true)]
    probs: Vec<PathBuf>,
    #[arg(long, value_parser = unit_interval)]
    theta: Option<f64>,
    /// Label volume marking the candidate voxels.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-voxel selection energies.
    #[arg(long)]
    energies: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long, num_args = 1.., required = true)]
    probs: Vec<PathBuf>,
    #[arg(long)]
    intensity: PathBuf,
    #[arg(long, value_parser = unit_interval)]
    theta: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    beta: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol: Option<f64>,
    /// Ignore confident neighbours when building the walker graph.
    #[arg(long)]
    no_dirichlet: bool,
    #[arg(long)]
    out: PathBuf,
    /// Optional walker solution as a probability volume.
    #[arg(long)]
    x_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    truth: PathBuf,
    /// `name=path` pairs, in row order.
    #[arg(long = "stage", value_parser = parse_stage)]
    stages: Vec<(String, PathBuf)>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_stage(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), path.into())),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_maps(paths: &[PathBuf]) -> Result<ProbabilityMap> {
    let volumes = paths
        .iter()
        .map(|p| read_kind(p, VolumeKind::Prob).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityMap::from_volumes(&volumes)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => {
            let dims = [a.dims[0], a.dims[1], a.dims[2]];
            let scene = synth(a.seed.unwrap_or(config.seeds.synth), dims, a.blobs, a.noise)?;
            write_volume(&a.image, &scene.intensity, VolumeKind::Intensity)?;
            write_labels(&a.truth, &scene.truth)?;
            info!("{} foreground voxels of {}", scene.truth.foreground(), scene.truth.labels().len());
        }
        Command::Train(a) => {
            config.epochs = a.epochs.unwrap_or(config.epochs);
            if let Some(lr) = a.lr {
                config.learning_rate = lr;
                config.unit_learning_rates = Default::default();
            }
            config.alpha = a.alpha.unwrap_or(config.alpha);
            config.widths = a.widths.unwrap_or(config.widths);
            config.seeds.train = a.seed.unwrap_or(config.seeds.train);
            config.seeds.init = a.init_seed.unwrap_or(config.seeds.init);
            config.validate()?;
            let image = read_kind(&a.image, VolumeKind::Intensity)?;
            let truth = read_labels(&a.truth)?;
            let spec = config.network_spec(a.unit);
            let mut train = config.train_config(a.unit);
            if a.fixed {
                train.connections = rcseg::rcnet::Connections::Fixed;
            }
            let report = train_toy(&spec, &train, &[(image, truth)])?;
            if let (Some(first), Some(last)) = (report.iteration_losses.first(), report.iteration_losses.last()) {
                info!("loss {first:.6} -> {last:.6} over {} iterations", report.iteration_losses.len());
            }
            write_checkpoint(&a.out, &spec, &report.params)?;
        }
        Command::Infer(a) => {
            let (spec, params) = read_checkpoint(&a.checkpoint)?;
            let image = read_kind(&a.image, VolumeKind::Intensity)?;
            let probs = if a.all_skips {
                forward(&spec, &params, &image, Skips::Mask(&ConnectionMask::all(spec.depth, true)))?
            } else {
                infer(&spec, &params, &image)?
            };
            write_volume(&a.out, &probs.mean_volume(), VolumeKind::Prob)?;
        }
        Command::Select(a) => {
            let maps = read_maps(&a.probs)?;
            let s = select(&maps, a.theta.unwrap_or(config.theta))?;
            let mut mask = vec![0u8; maps.voxels()];
            for &i in &s.candidates {
                mask[i] = 1;
            }
            write_labels(&a.out, &LabelVolume::new(maps.dims(), mask)?)?;
            if let Some(path) = a.energies {
                write_volume(&path, &Volume::new(maps.dims(), s.energies.clone())?, VolumeKind::Intensity)?;
            }
            info!("{} confident, {} candidates", s.confident.len(), s.candidates.len());
        }
        Command::Refine(a) => {
            config.theta = a.theta.unwrap_or(config.theta);
            config.beta = a.beta.unwrap_or(config.beta);
            config.tol = a.tol.unwrap_or(config.tol);
            config.dirichlet &= !a.no_dirichlet;
            let maps = read_maps(&a.probs)?;
            let (raw, _) = read_volume(&a.intensity)?;
            let intensity = IntensityVolume::normalized(&raw)?;
            let out = refine_with(&maps, &intensity, &config.refine_config())?;
            info!(
                "{} candidates, {} iterations, residual {:.3e}",
                out.selection.candidates.len(),
                out.solution.iterations,
                out.solution.residual
            );
            write_labels(&a.out, &out.labels)?;
            if let (Some(path), Some(x)) = (a.x_out, &out.labels.x) {
                write_volume(&path, &Volume::new(maps.dims(), x.clone())?, VolumeKind::Prob)?;
            }
        }
        Command::Dice { a, b } => {
            println!("{:.6}", dice(&read_labels(&a)?, &read_labels(&b)?)?);
        }
        Command::Report(a) => {
            let truth = read_labels(&a.truth)?;
            let stages = a
                .stages
                .iter()
                .map(|(name, path)| Ok((name.clone(), read_labels(path)?)))
                .collect::<Result<Vec<_>>>()?;
            let csv = report_csv(&stage_report(&truth, &stages)?);
            match a.out {
                Some(path) => rcseg::io::atomic_write(&path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}

//! `mrcp` command line: dataset generation, training, evaluation,
//! bandwidth accounting, and results tables.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mrcp_core::datagen::{generate_dataset, FormationPreset, GenSpec, NoiseKind, NoiseSpec};
use mrcp_core::graph::CommGraph;
use mrcp_core::harness::{
    evaluate_checkpoint, render_report, simulate_exchange, train, EpisodeLog, TrainConfig,
};
use mrcp_core::model::{ModelConfig, TaskKind, Variant};
use mrcp_core::tasks::MetricBundle;

#[derive(Parser)]
#[command(
    name = "mrcp",
    version,
    about = "Multi-robot collaborative perception: GNN message passing over synthetic multi-view data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset file.
    GenData(GenDataArgs),
    /// Train a perception variant on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint at noisy-camera settings 0..=N.
    Eval(EvalArgs),
    /// Print per-link message bandwidth against raw image sharing.
    Bandwidth(BandwidthArgs),
    /// Render one or more episode logs as an aligned results table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Formation preset: circle_inward, circle_outward or pose_varied.
    #[arg(long, default_value = "circle_inward")]
    preset: String,
    #[arg(long, default_value_t = 5)]
    agents: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Square image side length in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Formation circle radius in meters.
    #[arg(long, default_value_t = 6.0)]
    radius: f64,
    /// Flight altitude in meters.
    #[arg(long, default_value_t = 4.0)]
    altitude: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Noise protocol stored in the manifest (applied at train/eval time):
    /// gaussian[:sigma], shot[:scale], impulse[:prob], gaussian_blur[:k],
    /// motion_blur[:len[:angle]], severe, mixed.
    #[arg(long, default_value = "severe")]
    noise: String,
    /// Noisy-camera count recorded in the manifest.
    #[arg(long, default_value_t = 2)]
    noisy_cameras: usize,
    /// Background depth in meters.
    #[arg(long, default_value_t = 20.0)]
    max_depth: f64,
    /// Field of view (both axes) in radians.
    #[arg(long, default_value_t = 1.0)]
    fov: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Configuration file (`key = value` lines); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for model.ckpt, model.cfg and log.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    noisy_train: Option<usize>,
    #[arg(long)]
    noisy_eval: Option<usize>,
    /// Extra `key=value` config overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    variant: String,
    /// Evaluate noisy-camera settings 0..=N.
    #[arg(long, default_value_t = 2)]
    noisy_cameras: usize,
    /// Model config sidecar; defaults to the checkpoint path with a .cfg
    /// extension.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long, default_value_t = 5)]
    agents: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    levels: usize,
    /// Bytes per transmitted value.
    #[arg(long, default_value_t = 4)]
    payload_width: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Episode log files (log.tsv) from trained variants.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
}

enum Failure {
    /// Bad invocation; exits 2.
    Usage(String),
    /// Error during execution; exits 1.
    Runtime(String),
}

impl From<mrcp_core::Error> for Failure {
    fn from(e: mrcp_core::Error) -> Self {
        match e {
            mrcp_core::Error::Config(msg) => Failure::Usage(format!("configuration error: {msg}")),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn metric_line(setting: usize, m: &MetricBundle) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    format!(
        "noisy_cameras={setting}  abs_rel={}  sq_rel={}  rmse={}  miou={}",
        fmt(m.abs_rel),
        fmt(m.sq_rel),
        fmt(m.rmse),
        fmt(m.miou)
    )
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenData(args) => {
            let preset: FormationPreset = args.preset.parse()?;
            let kind: NoiseKind = args.noise.parse()?;
            let spec = GenSpec {
                preset,
                agents: args.agents,
                frames: args.frames,
                height: args.size,
                width: args.size,
                class_count: args.classes,
                radius: args.radius,
                altitude: args.altitude,
                fov_horizontal: args.fov,
                fov_vertical: args.fov,
                seed: args.seed,
                noise: NoiseSpec {
                    kind,
                    n_corrupt: args.noisy_cameras,
                },
                max_depth: args.max_depth,
            };
            let manifest = generate_dataset(&spec, &args.out)?;
            println!(
                "wrote {} frames x {} agents ({}x{}, {} classes) to {}",
                manifest.frame_count,
                manifest.agent_count,
                manifest.height,
                manifest.width,
                manifest.class_count,
                args.out.display()
            );
            Ok(())
        }
        Command::Train(args) => {
            let mut cfg = TrainConfig::default();
            if let Some(path) = &args.config {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Usage(format!("cannot read config file {}: {e}", path.display()))
                })?;
                cfg = TrainConfig::from_str_over(&text, cfg)?;
            }
            if let Some(v) = args.dataset {
                cfg.dataset = v;
            }
            if let Some(v) = args.out {
                cfg.out_dir = v;
            }
            if let Some(v) = &args.variant {
                cfg.variant = v.parse()?;
            }
            if let Some(v) = &args.task {
                cfg.task = v.parse()?;
            }
            if let Some(v) = args.epochs {
                cfg.epochs = v;
            }
            if let Some(v) = args.seed {
                cfg.seed = v;
            }
            if let Some(v) = args.lr {
                cfg.lr = v;
            }
            if let Some(v) = args.channels {
                cfg.channels = v;
            }
            if let Some(v) = args.levels {
                cfg.levels = v;
            }
            if let Some(v) = args.heads {
                cfg.heads = v;
            }
            if let Some(v) = args.noisy_train {
                cfg.noisy_train = v;
            }
            if let Some(v) = args.noisy_eval {
                cfg.noisy_eval = v;
            }
            for assignment in &args.set {
                let Some((key, value)) = assignment.split_once('=') else {
                    return Err(Failure::Usage(format!(
                        "--set expects KEY=VALUE, got {assignment}"
                    )));
                };
                cfg.apply(key.trim(), value.trim())?;
            }
            let outcome = train(&cfg)?;
            println!("checkpoint: {}", outcome.checkpoint_path.display());
            println!("log: {}", outcome.log_path.display());
            if let Some(last_epoch) = outcome.log.rows.iter().map(|r| r.epoch).max() {
                for row in outcome.log.rows.iter().filter(|r| r.epoch == last_epoch) {
                    println!(
                        "epoch {} loss {:.6}  {}  ({:.1}s/epoch)",
                        row.epoch,
                        row.train_loss,
                        metric_line(row.noisy_cameras, &row.metrics),
                        row.wall_secs
                    );
                }
            }
            Ok(())
        }
        Command::Eval(args) => {
            let variant: Variant = args.variant.parse()?;
            let results = evaluate_checkpoint(
                &args.checkpoint,
                args.config.as_deref(),
                &args.dataset,
                variant,
                args.noisy_cameras,
            )?;
            println!("variant {variant} on {}", args.dataset.display());
            for (setting, metrics) in &results {
                println!("{}", metric_line(*setting, metrics));
            }
            Ok(())
        }
        Command::Bandwidth(args) => {
            let cfg = ModelConfig {
                variant: Variant::Mp,
                levels: args.levels,
                channels: args.channels,
                heads: 4,
                height: args.size,
                width: args.size,
                class_count: 4,
                task: TaskKind::Depth,
                agents: args.agents,
                share_level_params: true,
            };
            cfg.validate()?;
            let graph = CommGraph::complete(args.agents);
            let report = simulate_exchange(&graph, &cfg, args.payload_width);
            print!("{}", report.render());
            Ok(())
        }
        Command::Report(args) => {
            let mut logs = Vec::with_capacity(args.logs.len());
            for path in &args.logs {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Usage(format!("cannot read log {}: {e}", path.display()))
                })?;
                logs.push(EpisodeLog::from_tsv(&text)?);
            }
            print!("{}", render_report(&logs)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

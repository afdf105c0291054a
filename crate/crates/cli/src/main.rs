//! `homedqn`: runs training phases and experiments and writes their CSVs
//! and checkpoints. Phase settings come from an optional TOML file plus
//! `--key=value` overrides (dotted keys reach nested tables).

use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use homedqn_core::agent::{load_checkpoint, save_checkpoint, DqnAgent};
use homedqn_core::corpus::write_fixture;
use homedqn_core::harness::{
    evaluate_config, features_csv, metrics_csv, parse_tap, row_from, run_losocv_dir, run_mask_experiment, run_phase,
    run_sweep, sweep_csv, MetricsRow, Phase, PhaseConfig, SweepCell, METRICS_HEADER,
};
use homedqn_core::render::{Renderer, SensorMask};
use homedqn_core::world::{GeneratorConfig, SyntheticWorld};
use homedqn_live::{Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "homedqn", version, about = "Smart-home decision agent harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PhaseArgs {
    /// TOML file with phase settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh agent on the synthetic world.
    Pretrain(PhaseArgs),
    /// Continue training from `checkpoint` (defaults to a corpus).
    Adapt(PhaseArgs),
    /// Leave-one-participant-out adaptation of `checkpoint` on `corpus`.
    Losocv(PhaseArgs),
    /// Evaluate `checkpoint` with `mask` applied, then adapt under the mask.
    MaskExp(PhaseArgs),
    /// Pretraining runs over a grid of (target_q, minibatch_size, update_freq).
    Sweep {
        #[command(flatten)]
        phase: PhaseArgs,
        /// Cells as `target_q,minibatch_size,update_freq`; repeatable.
        #[arg(long = "cell", required = true)]
        cells: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
    },
    /// Greedy evaluation of `checkpoint`.
    Eval(PhaseArgs),
    /// Hidden activations of `checkpoint` on synthetic states.
    ExportFeatures {
        #[command(flatten)]
        phase: PhaseArgs,
        /// `post_conv` or `pre_output`.
        #[arg(long, default_value = "pre_output")]
        tap: String,
        #[arg(long, default_value_t = 500)]
        count: usize,
    },
    /// Render one synthetic state as a PGM image.
    Render {
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long, default_value = "state.pgm")]
        image: PathBuf,
    },
    /// Write a synthetic corpus in the recorded-corpus layout.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        participants: usize,
        #[arg(long, default_value_t = 60)]
        commands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Host live sessions over a WebSocket at `/ws`.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory that session checkpoints are loaded from.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
}

/// Separates `--key=value` phase overrides from the arguments clap knows.
/// An override is any `--name=value` whose name is a phase key or dotted.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    const KEYS: &[&str] = &[
        "phase",
        "data",
        "total_steps",
        "eval_every",
        "eval_steps",
        "render",
        "mask",
        "seed",
        "deterministic",
        "tries_threshold",
        "corpus",
        "checkpoint",
    ];
    args.into_iter().partition(|a| {
        let Some((key, _)) = a.strip_prefix("--").and_then(|r| r.split_once('=')) else { return true };
        !(KEYS.contains(&key) || key.contains('.'))
    })
}

fn load_config(phase: Phase, args: &PhaseArgs, overrides: &[String]) -> Result<PhaseConfig> {
    load_config_over(phase, args, &[], overrides)
}

/// Like `load_config`, with `presets` layered under the user's overrides.
fn load_config_over(phase: Phase, args: &PhaseArgs, presets: &[&str], overrides: &[String]) -> Result<PhaseConfig> {
    let all: Vec<String> = presets.iter().map(|s| s.to_string()).chain(overrides.iter().cloned()).collect();
    let overrides = &all;
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    Ok(PhaseConfig::load(phase, text.as_deref(), overrides)?)
}

fn load_agent(cfg: &PhaseConfig) -> Result<DqnAgent> {
    let path = cfg.checkpoint.as_ref().context("this command needs --checkpoint=<weights file>")?;
    let (agent, _) = load_checkpoint(path, cfg.agent, cfg.seed, Some(cfg.render))
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(agent)
}

fn prepare_out(out: &Path, cfg: &PhaseConfig) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn print_row(row: &MetricsRow) {
    println!("{}", row.csv_line());
}

fn write_metrics(out: &Path, name: &str, rows: &[MetricsRow]) -> Result<PathBuf> {
    let path = out.join(name);
    fs::write(&path, metrics_csv(rows)).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn phase_command(phase: Phase, args: &PhaseArgs, overrides: &[String]) -> Result<()> {
    let cfg = load_config(phase, args, overrides)?;
    prepare_out(&args.out, &cfg)?;
    let start = match phase {
        Phase::Adapt => Some(load_agent(&cfg)?),
        Phase::Pretrain => cfg.checkpoint.as_ref().map(|_| load_agent(&cfg)).transpose()?,
    };
    println!("{METRICS_HEADER}");
    let out = run_phase(&cfg, start, &mut print_row)?;
    let csv = write_metrics(&args.out, "metrics.csv", &out.outcome.rows)?;
    let weights = args.out.join("weights.bin");
    save_checkpoint(&out.agent, &weights)?;
    eprintln!("wrote {} and {}", csv.display(), weights.display());
    Ok(())
}

fn run(cli: Cli, overrides: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Pretrain(a) => phase_command(Phase::Pretrain, &a, &overrides),
        Command::Adapt(a) => phase_command(Phase::Adapt, &a, &overrides),
        Command::Losocv(a) => {
            let cfg = load_config(Phase::Adapt, &a, &overrides)?;
            prepare_out(&a.out, &cfg)?;
            let base = load_agent(&cfg)?;
            println!("{METRICS_HEADER}");
            let report = run_losocv_dir(&base, &cfg, &mut print_row)?;
            let rows: Vec<MetricsRow> = report.folds.iter().flat_map(|f| f.rows.clone()).collect();
            write_metrics(&a.out, "metrics.csv", &rows)?;
            let mut summary = String::from("held_out;f1_micro;f1_macro\n");
            for f in &report.folds {
                summary.push_str(&format!(
                    "{};{:.6};{:.6}\n",
                    f.held_out, f.final_eval.metrics.f1_micro, f.final_eval.metrics.f1_macro
                ));
            }
            summary.push_str(&format!("aggregate;{:.6};\n", report.aggregate_f1));
            fs::write(a.out.join("folds.csv"), &summary)?;
            eprintln!("aggregate micro F1 {:.4}", report.aggregate_f1);
            Ok(())
        }
        Command::MaskExp(a) => {
            let cfg = load_config_over(Phase::Adapt, &a, &["data=synthetic"], &overrides)?;
            if cfg.mask.is_empty() {
                log::warn!("empty mask: the experiment measures plain adaptation");
            }
            prepare_out(&a.out, &cfg)?;
            let base = load_agent(&cfg)?;
            println!("{METRICS_HEADER}");
            let report = run_mask_experiment(&base, &cfg, &mut print_row)?;
            write_metrics(&a.out, "metrics.csv", &report.rows)?;
            save_checkpoint(&report.agent, a.out.join("weights.bin"))?;
            eprintln!(
                "unmasked F1 {:.4}, masked F1 {:.4}, recovered at {}",
                report.baseline.metrics.f1_micro,
                report.masked.metrics.f1_micro,
                report.recovered_at(0.05).map_or("never".to_string(), |s| s.to_string())
            );
            Ok(())
        }
        Command::Sweep { phase, cells, seeds } => {
            let cfg = load_config(Phase::Pretrain, &phase, &overrides)?;
            prepare_out(&phase.out, &cfg)?;
            let cells = cells.iter().map(|c| SweepCell::parse(c)).collect::<Result<Vec<_>, _>>()?;
            let rows = run_sweep(&cells, &seeds, &cfg, &mut |r| {
                eprintln!("cell {:?} seed {}: F1 {:.4}", r.cell, r.seed, r.f1_micro);
            })?;
            let path = phase.out.join("sweep.csv");
            fs::write(&path, sweep_csv(&rows))?;
            print!("{}", sweep_csv(&rows));
            Ok(())
        }
        Command::Eval(a) => {
            let cfg = load_config(Phase::Pretrain, &a, &overrides)?;
            let agent = load_agent(&cfg)?;
            let report = evaluate_config(&agent, &cfg, 0)?;
            println!("{METRICS_HEADER}");
            print_row(&row_from("eval", 0, &report, 0.0, 0));
            Ok(())
        }
        Command::ExportFeatures { phase, tap, count } => {
            let tap = parse_tap(&tap).with_context(|| format!("unknown tap `{tap}`"))?;
            let cfg = load_config(Phase::Pretrain, &phase, &overrides)?;
            prepare_out(&phase.out, &cfg)?;
            let agent = load_agent(&cfg)?;
            let world = SyntheticWorld::reference(cfg.generator)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let samples: Vec<_> = (0..count as i64).map(|t| world.sample(t, &mut rng)).collect();
            let renderer = Renderer::reference(cfg.render);
            let mask = SensorMask::from_tokens(&cfg.mask, renderer.manifest());
            let csv = features_csv(&agent, &renderer, &samples, &mask, tap)?;
            let path = phase.out.join("features.csv");
            fs::write(&path, csv)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Render { phase, image } => {
            let cfg = load_config(Phase::Pretrain, &phase, &overrides)?;
            let world = SyntheticWorld::reference(cfg.generator)?;
            let sample = world.sample(0, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
            let renderer = Renderer::reference(cfg.render);
            let mask = SensorMask::from_tokens(&cfg.mask, renderer.manifest());
            let img = renderer.render(&sample.state, &mask)?;
            fs::File::create(&image)
                .and_then(|mut f| f.write_all(&img.to_pgm()))
                .with_context(|| format!("writing {}", image.display()))?;
            if let Some(a) = &sample.annotation {
                eprintln!("{} / {} / {} -> action {}", a.location, a.activity, a.command, a.expected_action);
            }
            Ok(())
        }
        Command::GenCorpus { out, participants, commands, seed } => {
            if participants == 0 || commands == 0 {
                bail!("participants and commands must be at least 1");
            }
            let world = SyntheticWorld::reference(GeneratorConfig::default())?;
            write_fixture(&out, &world, participants, commands, seed)?;
            eprintln!("wrote {participants} participants to {}", out.display());
            Ok(())
        }
        Command::Serve { addr, checkpoint_dir } => {
            let service = Arc::new(Service::new(ServiceConfig { checkpoint_dir, ..ServiceConfig::default() }));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(homedqn_live::serve(addr, service, |bound| eprintln!("listening on ws://{bound}/ws")))?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    run(cli, overrides)
}

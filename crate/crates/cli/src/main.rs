//! `smach`: train, evaluate, verify, plot and replay.

mod manifest;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use shapley_machine::envs::replay::{parse_log, parse_pursuit_snapshot, render_grid};
use shapley_machine::envs::EnvConfig;
use shapley_machine::trainer::{self, eval_seed, record_episode, ActMode, Networks, RunConfig};
use shapley_machine::verify::{self, Fault};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "smach", version, about = "Shapley Machine for n-agent ad hoc teamwork")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a run config; writes manifest, metrics.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "SM_SEED", default_value_t = 0)]
        seed: u64,
        /// Output directory; defaults to runs/<run id>.
        #[arg(long, env = "SM_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint over sampled team compositions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long, env = "SM_SEED", default_value_t = 0)]
        seed: u64,
        /// Per-episode CSV; defaults to eval.csv next to the checkpoint.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Uniform random controlled actions instead of the greedy policy.
        #[arg(long)]
        random: bool,
        /// Exit 1 when the mean return falls below this.
        #[arg(long)]
        min_return: Option<f64>,
    },
    /// Run the game-theory and return property suite.
    Verify {
        /// Stop starting new properties after this many seconds.
        #[arg(long, default_value_t = 300.0)]
        budget: f64,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Banded curves from metrics CSVs.
    Plot {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// Print one evaluation episode, or re-render a saved log.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, env = "SM_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        /// Render this log instead of running an episode.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Draw the grid after every step.
        #[arg(long)]
        grid: bool,
    },
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(r: Result<T, impl Into<anyhow::Error>>) -> anyhow::Result<T> {
    r.map_err(|e| UsageError(e.into()).into())
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    usage(RunConfig::from_file(path))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Eval {
            checkpoint,
            config,
            episodes,
            seed,
            csv,
            random,
            min_return,
        } => cmd_eval(&checkpoint, &config, episodes as usize, seed, csv, random, min_return),
        Command::Verify { budget, inject_fault } => cmd_verify(budget, inject_fault.as_deref()),
        Command::Plot { out, csv } => {
            let files = usage(plot::plot(&csv, &out))?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            config,
            checkpoint,
            seed,
            episode,
            log,
            grid,
        } => cmd_replay(&config, checkpoint.as_deref(), seed, episode, log.as_deref(), grid),
    }
}

fn cmd_train(config_path: &Path, seed: u64, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let cfg = load_config(config_path)?;
    let manifest = RunManifest::start(&cfg, seed);
    let out = out.unwrap_or_else(|| Path::new("runs").join(&manifest.run_id));
    usage(fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display())))?;
    manifest.write_atomic(&out.join("manifest.json"))?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let summary = trainer::train(&cfg, seed, Some(&out))?;
    manifest::write_finished(&out.join("finished.json"), summary.metrics.len())?;
    let e = &summary.final_eval;
    println!(
        "{} seed {seed}: {} iterations, final greedy return {:.3} ± {:.3}, success rate {:.3}, skipped batches {}",
        cfg.algo.variant.name(),
        summary.metrics.len(),
        e.mean_return(),
        e.ci95(),
        e.success_rate(),
        summary.skipped_batches
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_networks(cfg: &RunConfig, checkpoint: &Path) -> anyhow::Result<Networks> {
    usage(trainer::load_networks(cfg, checkpoint))
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    checkpoint: &Path,
    config: &Path,
    episodes: usize,
    seed: u64,
    csv_path: Option<PathBuf>,
    random: bool,
    min_return: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let cfg = load_config(config)?;
    let nets = load_networks(&cfg, checkpoint)?;
    let mode = if random { ActMode::Random } else { ActMode::Greedy };
    let stats = trainer::evaluate(&nets, &cfg, episodes, eval_seed(seed), mode)?;
    let csv_path = csv_path.unwrap_or_else(|| checkpoint.with_file_name("eval.csv"));
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    w.write_record(["episode", "return", "terminated"])?;
    for (i, (r, t)) in stats.returns.iter().zip(&stats.terminated).enumerate() {
        w.write_record([i.to_string(), r.to_string(), u8::from(*t).to_string()])?;
    }
    w.flush()?;
    println!(
        "episodes {episodes}  mean return {:.4} ± {:.4} (95% CI)  success rate {:.4}",
        stats.mean_return(),
        stats.ci95(),
        stats.success_rate()
    );
    if let Some(min) = min_return {
        if stats.mean_return() < min {
            eprintln!("mean return {:.4} is below {min}", stats.mean_return());
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(budget: f64, fault: Option<&str>) -> anyhow::Result<ExitCode> {
    let fault = match fault {
        None => Fault::None,
        Some("corrupt-shapley-weights") => Fault::CorruptShapleyWeights,
        Some(other) => return Err(UsageError(anyhow::anyhow!("unknown fault `{other}`")).into()),
    };
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(UsageError(anyhow::anyhow!("budget must be a nonnegative number of seconds")).into());
    }
    let report = verify::run(fault, Some(Duration::from_secs_f64(budget)));
    print!("{}", report.table());
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_replay(
    config: &Path,
    checkpoint: Option<&Path>,
    seed: u64,
    episode: usize,
    log: Option<&Path>,
    grid: bool,
) -> anyhow::Result<ExitCode> {
    let cfg = load_config(config)?;
    let grid_size = match &cfg.env {
        EnvConfig::Pursuit(p) => Some(p.grid_size),
        EnvConfig::Diagnostic { .. } => None,
    };
    let lines = match log {
        Some(path) => {
            let text = usage(fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())))?;
            usage(parse_log(&text).with_context(|| path.display().to_string()))?
        }
        None => {
            let nets = match checkpoint {
                Some(c) => load_networks(&cfg, c)?,
                None => trainer::init_networks(&cfg, seed)?,
            };
            let (team, start, lines) = record_episode(&nets, &cfg, eval_seed(seed), episode, ActMode::Greedy)?;
            println!("# controlled {:?} uncontrolled {:?}", team.controlled, team.uncontrolled);
            println!("# start {start}");
            lines
        }
    };
    if lines.is_empty() {
        bail!("empty replay");
    }
    for l in &lines {
        println!("{l}");
        if let (true, Some(g)) = (grid, grid_size) {
            if let Some(state) = parse_pursuit_snapshot(&l.snapshot) {
                println!("{}", render_grid(&state, g));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

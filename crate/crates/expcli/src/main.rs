use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rismec::ops::{self, SweepAxis};
use rismec::run::{self, Checkpoint};
use rismec::{AgentKind, CliError, ExperimentConfig};
use rismec_core::powerctl::DinkelbachSettings;

/// Rotatable-RIS edge-offloading experiments.
#[derive(Parser)]
#[command(name = "rismec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured agent.
    #[arg(long, value_enum)]
    agent: Option<AgentKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes metrics CSV, checkpoint and resolved config per seed.
    Train(Common),
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `train.eval_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train and evaluate every (axis value, scheme, seed) cell.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Dump per-slot positions, orientation, angles and energies as JSON lines.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Solve power-control instances read from CSV (`alpha_D,B_k,gain,noise,p_max,tau`).
    PowerBatch {
        #[command(flatten)]
        common: Common,
        /// Instances to solve; random ones are generated when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Run the invariant checks; exits non-zero if any fails.
    Selftest(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(kind) = common.agent {
        cfg.agent.kind = kind;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seeds(common: &Common, cfg: &ExperimentConfig) -> Vec<u64> {
    common.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(common) => {
            let cfg = load_config(&common)?;
            for seed in seeds(&common, &cfg) {
                let outcome = run::train(&cfg, seed)?;
                let dir = common.out.join(run::run_id(&cfg, seed));
                write(&dir.join("metrics.csv"), &ops::to_csv(&outcome.metrics)?)?;
                write(&dir.join("checkpoint.json"), &outcome.checkpoint.to_json())?;
                write(&dir.join("config.toml"), &cfg.to_toml())?;
                // Wall-clock time lives apart from the reproducible outputs.
                write(&dir.join("timing.json"), &pretty(&serde_json::json!({ "wall_seconds": outcome.wall_seconds })))?;
                println!("{}", dir.display());
            }
        }
        Command::Eval { common, checkpoint, episodes } => {
            let cfg = load_config(&common)?;
            let ck = Checkpoint::from_json(&read(&checkpoint)?)?;
            let episodes = episodes.unwrap_or(cfg.train.eval_episodes);
            for seed in seeds(&common, &cfg) {
                let (summary, _) = run::evaluate(&cfg, &ck, episodes, seed)?;
                let path = common.out.join(format!("eval-{}-s{seed}.json", summary.run_id));
                write(&path, &pretty(&summary))?;
                println!("{}", path.display());
            }
        }
        Command::Sweep { common, axis, jobs } => {
            let mut cfg = load_config(&common)?;
            cfg.seeds = seeds(&common, &cfg);
            if let Some(kind) = common.agent {
                cfg.sweep.schemes = vec![kind];
            }
            let rows = ops::sweep(&cfg, axis, jobs)?;
            let path = common.out.join(format!("sweep-{}-{}.csv", cfg.name, axis.as_str()));
            write(&path, &ops::to_csv(&rows)?)?;
            println!("{}", path.display());
        }
        Command::Trace { common, checkpoint, episodes } => {
            let cfg = load_config(&common)?;
            let ck = Checkpoint::from_json(&read(&checkpoint)?)?;
            let seed = common.seed.unwrap_or(ck.seed);
            let lines = ops::trace(&cfg, &ck, episodes, seed)?;
            let path = common.out.join(format!("trace-{}-s{seed}.jsonl", run::run_id(&cfg, ck.seed)));
            write(&path, &ops::to_jsonl(&lines))?;
            println!("{}", path.display());
        }
        Command::PowerBatch { common, input, count } => {
            let cfg = load_config(&common)?;
            let instances = match input {
                Some(path) => ops::read_power_csv(&read(&path)?, &path.display().to_string())?,
                None => ops::random_power_instances(count, common.seed.unwrap_or(0)),
            };
            let settings = DinkelbachSettings { tol: cfg.env.dinkelbach_tol, max_iter: cfg.env.dinkelbach_max_iter };
            let results = ops::power_batch(&instances, &settings)?;
            let path = common.out.join("power-batch.csv");
            write(&path, &ops::to_csv(&results)?)?;
            println!("{}", path.display());
        }
        Command::Selftest(common) => {
            let cfg = load_config(&common)?;
            let results = ops::selftest(&cfg)?;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.check, r.detail);
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.check.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::SelfTest(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::Usage(e.to_string().trim_end().to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

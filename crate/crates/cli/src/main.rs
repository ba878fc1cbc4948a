use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use edgescale_core::agents::{AgentKind, AllocatorKind};
use edgescale_core::harness::{
    emit, experiment_rows, mean_summary, run_experiment, run_sweep, sweep_rows, Contender,
    ExperimentConfig, OutputFormat, ResultRow, SeedLabel, SeedRun, SweepAxis, TrainedModel,
};

#[derive(Parser)]
#[command(
    name = "edgescale",
    version,
    about = "Serverless auto-scaling simulator for edge clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one agent on every configured seed and write per-episode rows.
    Run {
        #[command(flatten)]
        common: Common,
        /// Directory for the learned model of each seed.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Compare all contenders across arrival-rate or deadline values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Convergence study: per-episode rows plus the across-seed mean.
    Episodes {
        #[command(flatten)]
        common: Common,
    },
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Lambda,
    Deadline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    alloc: Option<AllocatorKind>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Fixed experiment id instead of a timestamp.
    #[arg(long)]
    pin_id: Option<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(a) = self.agent {
            cfg.agent = a;
        }
        if let Some(a) = self.alloc {
            cfg.allocator = a;
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(e) = self.events {
            cfg.events_per_episode = e;
        }
        if let Some(e) = self.episodes {
            cfg.set_episodes(e);
        }
        if let Some(id) = &self.pin_id {
            cfg.experiment_id = Some(id.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }

    fn write(&self, rows: &[ResultRow], id: &str, kind: &str) -> Result<PathBuf> {
        let format = self.format();
        let path = self.out.join(format!("{id}_{kind}.{}", format.extension()));
        emit(rows, format, &path)?;
        Ok(path)
    }
}

fn experiment_id(cfg: &ExperimentConfig) -> String {
    cfg.experiment_id.clone().unwrap_or_else(|| {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("exp-{secs}")
    })
}

fn save_models(dir: &Path, runs: &[SeedRun]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for run in runs {
        match &run.model {
            Some(TrainedModel::QTable(table)) => {
                let path = dir.join(format!("seed-{}.qtable.tsv", run.seed));
                let file = File::create(&path)
                    .with_context(|| format!("cannot write {}", path.display()))?;
                table
                    .write_tsv(BufWriter::new(file))
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            Some(TrainedModel::Network(net)) => {
                let path = dir.join(format!("seed-{}.net", run.seed));
                std::fs::write(&path, net.to_snapshot())
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            None => {}
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<Option<PathBuf>> {
    match cli.command {
        Command::Run { common, save_model } => {
            let cfg = common.config()?;
            let id = experiment_id(&cfg);
            let runs = run_experiment(&cfg)?;
            if let Some(dir) = save_model {
                save_models(&dir, &runs)?;
            }
            let rows = experiment_rows(&id, Contender::new(cfg.agent, cfg.allocator), &runs);
            common.write(&rows, &id, "run").map(Some)
        }
        Command::Sweep { common, axis } => {
            let cfg = common.config()?;
            let id = experiment_id(&cfg);
            let axis = match axis {
                Axis::Lambda => SweepAxis::Lambda,
                Axis::Deadline => SweepAxis::Deadline,
            };
            let cells = run_sweep(&cfg, axis)?;
            common
                .write(&sweep_rows(&id, &cells), &id, &format!("sweep_{axis}"))
                .map(Some)
        }
        Command::Episodes { common } => {
            let cfg = common.config()?;
            let id = experiment_id(&cfg);
            let contender = Contender::new(cfg.agent, cfg.allocator);
            let runs = run_experiment(&cfg)?;
            let mut rows = experiment_rows(&id, contender, &runs);
            for ep in 0..cfg.episodes() {
                let at_ep: Vec<_> = runs.iter().map(|r| r.episodes[ep].clone()).collect();
                rows.push(ResultRow {
                    experiment_id: id.clone(),
                    contender,
                    sweep_axis: SweepAxis::None,
                    sweep_value: None,
                    seed: SeedLabel::Mean,
                    summary: mean_summary(&at_ep),
                });
            }
            common.write(&rows, &id, "episodes").map(Some)
        }
        Command::DefaultConfig => {
            print!("{}", edgescale_core::harness::DEFAULT_CONFIG_TOML);
            Ok(None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "error": first }));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(Some(path)) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            ExitCode::from(2)
        }
    }
}

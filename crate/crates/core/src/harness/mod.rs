//! Experiment configuration, the episode loop, sweeps and result emission.

mod config;
mod output;
mod runner;

pub use config::{
    default_classes, ConfigError, Contender, DrlConfig, ExperimentConfig, MonitorConfig, RlConfig,
    SweepAxis, SweepConfig, TopologyConfig, DEFAULT_CONFIG_TOML,
};
pub use output::{
    emit, experiment_rows, render, render_csv, render_json, sort_rows, sweep_rows, OutputError,
    OutputFormat, ResultRow, SeedLabel, COLUMNS,
};
pub use runner::{
    mean_summary, run_episode, run_experiment, run_seed, run_sweep, EpisodeParams, SeedRun,
    SweepCell, TraceStep, TrainedModel,
};

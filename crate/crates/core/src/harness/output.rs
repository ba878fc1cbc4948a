use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use super::config::{Contender, SweepAxis};
use super::runner::{SeedRun, SweepCell};
use crate::agents::AgentKind;
use crate::metrics::EpisodeSummary;

pub const COLUMNS: [&str; 13] = [
    "experiment_id",
    "agent",
    "allocator",
    "sweep_axis",
    "sweep_value",
    "seed",
    "episode",
    "events",
    "avg_delay_ms",
    "avg_replicas",
    "satisfaction_rate",
    "mean_reward",
    "p99_delay_ms",
];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

/// Which seed a row describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedLabel {
    Seed(u64),
    /// Average over all seeds of the run.
    Mean,
}

impl SeedLabel {
    fn render(self) -> String {
        match self {
            SeedLabel::Seed(s) => s.to_string(),
            SeedLabel::Mean => "mean".to_string(),
        }
    }

    fn sort_key(self) -> (u8, u64) {
        match self {
            SeedLabel::Seed(s) => (0, s),
            SeedLabel::Mean => (1, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub contender: Contender,
    pub sweep_axis: SweepAxis,
    pub sweep_value: Option<f64>,
    pub seed: SeedLabel,
    pub summary: EpisodeSummary,
}

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

impl ResultRow {
    /// Allocator column; empty for the learning agents, which place by themselves.
    pub fn allocator(&self) -> &'static str {
        if self.contender.agent.is_monitor() {
            self.contender.allocator.as_str()
        } else {
            ""
        }
    }

    pub fn agent(&self) -> AgentKind {
        self.contender.agent
    }

    pub fn fields(&self) -> [String; 13] {
        let s = &self.summary;
        [
            self.experiment_id.clone(),
            self.contender.agent.to_string(),
            self.allocator().to_string(),
            self.sweep_axis.to_string(),
            self.sweep_value.map(fixed).unwrap_or_default(),
            self.seed.render(),
            s.episode.to_string(),
            s.events_processed.to_string(),
            fixed(s.avg_delay_ms),
            fixed(s.avg_replicas),
            fixed(s.satisfaction_rate),
            fixed(s.mean_reward),
            fixed(s.p99_delay_ms),
        ]
    }

    /// Flat JSON object with the CSV's columns and its rounding.
    pub fn to_json(&self) -> Value {
        let f = self.fields();
        let num =
            |i: usize| -> Value { f[i].parse::<f64>().map(Value::from).unwrap_or(Value::Null) };
        json!({
            "experiment_id": f[0],
            "agent": f[1],
            "allocator": f[2],
            "sweep_axis": f[3],
            "sweep_value": num(4),
            "seed": f[5],
            "episode": self.summary.episode,
            "events": self.summary.events_processed,
            "avg_delay_ms": num(8),
            "avg_replicas": num(9),
            "satisfaction_rate": num(10),
            "mean_reward": num(11),
            "p99_delay_ms": num(12),
        })
    }

    fn order(&self, other: &Self) -> Ordering {
        let key = |r: &Self| (r.contender, r.sweep_axis);
        key(self)
            .cmp(&key(other))
            .then_with(|| {
                self.sweep_value
                    .unwrap_or(f64::NAN)
                    .total_cmp(&other.sweep_value.unwrap_or(f64::NAN))
            })
            .then_with(|| self.seed.sort_key().cmp(&other.seed.sort_key()))
            .then_with(|| self.summary.episode.cmp(&other.summary.episode))
            .then_with(|| self.experiment_id.cmp(&other.experiment_id))
    }
}

/// Rows in their canonical emission order.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(ResultRow::order);
}

/// One row per seed and episode of an experiment.
pub fn experiment_rows(
    experiment_id: &str,
    contender: Contender,
    runs: &[SeedRun],
) -> Vec<ResultRow> {
    runs.iter()
        .flat_map(|run| {
            run.episodes.iter().map(move |s| ResultRow {
                experiment_id: experiment_id.to_string(),
                contender,
                sweep_axis: SweepAxis::None,
                sweep_value: None,
                seed: SeedLabel::Seed(run.seed),
                summary: s.clone(),
            })
        })
        .collect()
}

/// One seed-averaged row per sweep cell.
pub fn sweep_rows(experiment_id: &str, cells: &[SweepCell]) -> Vec<ResultRow> {
    cells
        .iter()
        .map(|c| ResultRow {
            experiment_id: experiment_id.to_string(),
            contender: c.contender,
            sweep_axis: c.axis,
            sweep_value: (c.axis != SweepAxis::None).then_some(c.value),
            seed: SeedLabel::Mean,
            summary: c.summary.clone(),
        })
        .collect()
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in &sorted {
        w.write_record(r.fields()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn render_json(rows: &[ResultRow]) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let records: Vec<Value> = sorted.iter().map(ResultRow::to_json).collect();
    let mut out = serde_json::to_string_pretty(&records).expect("json values serialize");
    out.push('\n');
    out
}

pub fn render(rows: &[ResultRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(rows),
        OutputFormat::Json => render_json(rows),
    }
}

/// Writes `rows` to `path` in `format`, creating parent directories.
pub fn emit(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<(), OutputError> {
    let io = |source| OutputError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, render(rows, format)).map_err(io)
}

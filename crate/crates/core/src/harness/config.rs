use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentKind, AllocatorKind, ExplorationSchedule, LearningParams};
use crate::domain::{validate_topology, DomainError, EdgeNode, FunctionClass, Topology};
use crate::environment::{EnqueueReward, FeatureVector, RewardParams};
use crate::neural::TrainConfig;
use crate::workload::{derive_seed, sample_topology_delays, Stream};

/// The default configuration as shipped, documented inline.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("default_config.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: usize,
    pub capacity: u32,
    pub capacities: Option<Vec<u32>>,
    pub tx_delays_ms: Option<Vec<f64>>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            nodes: 10,
            capacity: 10,
            capacities: None,
            tx_delays_ms: None,
        }
    }
}

impl TopologyConfig {
    pub fn node_count(&self) -> usize {
        self.capacities
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.tx_delays_ms.as_ref().map(Vec::len))
            .unwrap_or(self.nodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub episodes: usize,
    pub learning: LearningParams,
    pub exploration: ExplorationSchedule,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            learning: LearningParams::default(),
            exploration: ExplorationSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrlConfig {
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub exploration: ExplorationSchedule,
    pub train: TrainConfig,
}

impl Default for DrlConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            hidden: vec![32, 16],
            exploration: ExplorationSchedule::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub episodes: usize,
    pub threshold: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            episodes: 1,
            threshold: 1.0,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    Lambda,
    Deadline,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Deadline => "deadline",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(SweepAxis::None),
            "lambda" => Ok(SweepAxis::Lambda),
            "deadline" => Ok(SweepAxis::Deadline),
            _ => Err(format!("unknown sweep axis {s:?}")),
        }
    }
}

/// An agent (and allocator, for monitoring agents) entered in a sweep,
/// written `agent` or `agent/allocator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Contender {
    pub agent: AgentKind,
    pub allocator: AllocatorKind,
}

impl Contender {
    pub fn new(agent: AgentKind, allocator: AllocatorKind) -> Self {
        Self { agent, allocator }
    }
}

impl fmt::Display for Contender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.agent.is_monitor() {
            write!(f, "{}/{}", self.agent, self.allocator)
        } else {
            write!(f, "{}", self.agent)
        }
    }
}

impl TryFrom<String> for Contender {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let (agent, allocator) = match s.split_once('/') {
            Some((a, b)) => (a.parse()?, b.parse()?),
            None => (s.parse()?, AllocatorKind::default()),
        };
        Ok(Self { agent, allocator })
    }
}

impl From<Contender> for String {
    fn from(c: Contender) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambda_values: Vec<f64>,
    pub lambda_reference: f64,
    pub deadline_factors: Vec<f64>,
    pub contenders: Vec<Contender>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        use AgentKind::*;
        use AllocatorKind::*;
        Self {
            lambda_values: vec![2.5, 3.0, 3.5, 4.0, 4.5, 5.0],
            lambda_reference: 2.5,
            deadline_factors: vec![0.75, 1.0, 1.25, 1.5],
            contenders: vec![
                Contender::new(Rl, Ff),
                Contender::new(Drl, Ff),
                Contender::new(Mnt, Ff),
                Contender::new(Mnt, Rf),
                Contender::new(MntConstraint, Ff),
                Contender::new(MntConstraint, Rf),
            ],
        }
    }
}

impl SweepConfig {
    pub fn values(&self, axis: SweepAxis) -> &[f64] {
        match axis {
            SweepAxis::None => &[],
            SweepAxis::Lambda => &self.lambda_values,
            SweepAxis::Deadline => &self.deadline_factors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: Option<String>,
    pub agent: AgentKind,
    pub allocator: AllocatorKind,
    pub events_per_episode: u64,
    pub seeds: Vec<u64>,
    pub q_max: u16,
    pub enqueue_reward: EnqueueReward,
    pub topology: TopologyConfig,
    pub classes: Vec<FunctionClass>,
    pub reward: RewardParams,
    pub rl: RlConfig,
    pub drl: DrlConfig,
    pub monitor: MonitorConfig,
    pub sweep: SweepConfig,
}

pub fn default_classes() -> Vec<FunctionClass> {
    let service = [5.0, 6.0, 7.5, 10.0, 13.0];
    let deadline = [20.0, 23.0, 26.0, 29.0, 32.0];
    let interarrival = [2.5, 2.875, 3.25, 3.625, 4.0];
    (0..5)
        .map(|k| FunctionClass::new(k as u32 + 1, service[k], deadline[k], interarrival[k]))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment_id: None,
            agent: AgentKind::Rl,
            allocator: AllocatorKind::Ff,
            events_per_episode: 100_000,
            seeds: vec![1, 2, 3],
            q_max: 10,
            enqueue_reward: EnqueueReward::Deferred,
            topology: TopologyConfig::default(),
            classes: default_classes(),
            reward: RewardParams::default(),
            rl: RlConfig::default(),
            drl: DrlConfig::default(),
            monitor: MonitorConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Episode count of the configured agent.
    pub fn episodes(&self) -> usize {
        match self.agent {
            AgentKind::Rl => self.rl.episodes,
            AgentKind::Drl => self.drl.episodes,
            AgentKind::Mnt | AgentKind::MntConstraint => self.monitor.episodes,
        }
    }

    pub fn set_episodes(&mut self, episodes: usize) {
        match self.agent {
            AgentKind::Rl => self.rl.episodes = episodes,
            AgentKind::Drl => self.drl.episodes = episodes,
            AgentKind::Mnt | AgentKind::MntConstraint => self.monitor.episodes = episodes,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.topology.node_count()
    }

    /// Full layer chain of the q-network: input, hidden..., output.
    pub fn network_dims(&self) -> Vec<usize> {
        let (k, n) = (self.classes.len(), self.n_nodes());
        let mut dims = vec![FeatureVector::len_for(k, n)];
        dims.extend(&self.drl.hidden);
        dims.push(n + 2);
        dims
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        if self.events_per_episode == 0 {
            return invalid("events_per_episode must be positive");
        }
        if self.episodes() == 0 {
            return invalid("episode count must be positive");
        }
        if !self.reward.is_valid() {
            return invalid("reward needs r1 > 0 > r2 and finite weights");
        }
        if !self.rl.learning.is_valid() {
            return invalid("rl.learning needs 0 < alpha <= 1 and 0 <= gamma < 1");
        }
        if !self.rl.exploration.is_valid() || !self.drl.exploration.is_valid() {
            return invalid("exploration needs epsilon in [0,1] and decay in (0,1)");
        }
        if !self.drl.train.is_valid() {
            return invalid("drl.train needs 1 <= batch_size <= replay_capacity, update_every >= 1, gamma in [0,1)");
        }
        if self.drl.hidden.contains(&0) {
            return invalid("hidden layer widths must be positive");
        }
        if self.monitor.threshold.is_nan() {
            return invalid("monitor.threshold must be a number");
        }
        let t = &self.topology;
        if let (Some(c), Some(d)) = (&t.capacities, &t.tx_delays_ms) {
            if c.len() != d.len() {
                return invalid("topology.capacities and topology.tx_delays_ms differ in length");
            }
        }
        if self.classes.len() > 32 {
            return invalid("at most 32 function classes are supported");
        }
        if self.sweep.lambda_reference.is_nan() || self.sweep.lambda_reference <= 0.0 {
            return invalid("sweep.lambda_reference must be positive");
        }
        let n = self.n_nodes();
        validate_topology(
            (0..n)
                .map(|i| EdgeNode::new(self.capacity_of(i), 0.0))
                .collect(),
            self.classes.clone(),
        )?;
        Ok(())
    }

    fn capacity_of(&self, node: usize) -> u32 {
        self.topology
            .capacities
            .as_ref()
            .map_or(self.topology.capacity, |c| c[node])
    }

    /// Topology for one run seed; delays are drawn from the seed unless fixed.
    pub fn topology_for_seed(&self, seed: u64) -> Result<Topology, ConfigError> {
        let n = self.n_nodes();
        let delays = match &self.topology.tx_delays_ms {
            Some(d) => d.clone(),
            None => sample_topology_delays(
                n,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, Stream::Topology)),
            ),
        };
        let nodes = (0..n)
            .map(|i| EdgeNode::new(self.capacity_of(i), delays[i]))
            .collect();
        Ok(validate_topology(nodes, self.classes.clone())?)
    }

    /// This configuration with one sweep value applied.
    pub fn with_sweep_value(&self, axis: SweepAxis, value: f64) -> Self {
        let mut cfg = self.clone();
        match axis {
            SweepAxis::None => {}
            SweepAxis::Lambda => {
                let factor = value / self.sweep.lambda_reference;
                cfg.classes
                    .iter_mut()
                    .for_each(|c| c.mean_interarrival_ms *= factor);
            }
            SweepAxis::Deadline => {
                cfg.classes.iter_mut().for_each(|c| c.deadline_ms *= value);
            }
        }
        cfg
    }
}

//! Scaling policies behind one decision interface.
//!
//! Every policy sees the same [`StepView`] and must return one of the
//! actions listed in it. Learning policies additionally receive completed
//! `(observation, action, reward, next observation)` experiences from the
//! simulation loop.

mod dqn;
mod monitor;
mod qlearning;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ClusterState, Millis, ScalingAction, Topology};
use crate::workload::SimEvent;

pub use dqn::{action_mask, select_action_drl, DqnAgent, DqnObs};
pub use monitor::{
    allocate_first_fit, allocate_random_fit, deadline_reachable, mnt_decide, AllocError,
    MonitorAgent,
};
pub use qlearning::{
    decay_epsilon, q_update, select_action_rl, ExplorationSchedule, LearningParams, QLearningAgent,
    QTable, QTableError, QUpdate, RlObs,
};

/// What a policy may inspect when deciding on one event.
pub struct StepView<'a> {
    pub state: &'a ClusterState,
    pub topo: &'a Topology,
    pub event: &'a SimEvent,
    pub available: &'a [ScalingAction],
    pub clock: Millis,
}

pub trait Policy {
    /// The policy's own encoding of a decision point.
    type Obs: Clone;

    fn observe(&self, view: &StepView<'_>) -> Self::Obs;

    fn select(&mut self, obs: &Self::Obs, view: &StepView<'_>) -> ScalingAction;

    /// Whether the loop should bother assembling experiences.
    fn learns(&self) -> bool {
        false
    }

    fn learn(&mut self, _obs: &Self::Obs, _action: ScalingAction, _reward: f64, _next: &Self::Obs) {
    }

    /// Called once at the start of every episode (1-based).
    fn begin_episode(&mut self, _episode: usize, _total_episodes: usize) {}

    /// Called after every processed event.
    fn end_event(&mut self) {}
}

/// Uniform pick over `available`.
pub fn pick_uniform<R: Rng + ?Sized>(available: &[ScalingAction], rng: &mut R) -> ScalingAction {
    available[rng.gen_range(0..available.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Rl,
    Drl,
    Mnt,
    MntConstraint,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Rl,
        AgentKind::Drl,
        AgentKind::Mnt,
        AgentKind::MntConstraint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Rl => "rl",
            AgentKind::Drl => "drl",
            AgentKind::Mnt => "mnt",
            AgentKind::MntConstraint => "mnt_constraint",
        }
    }

    pub fn is_monitor(self) -> bool {
        matches!(self, AgentKind::Mnt | AgentKind::MntConstraint)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown agent {s:?}"))
    }
}

/// Node choice for the monitoring baselines.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    /// Closest feasible node.
    #[default]
    Ff,
    /// Uniformly random feasible node.
    Rf,
}

impl AllocatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocatorKind::Ff => "ff",
            AllocatorKind::Rf => "rf",
        }
    }
}

impl fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AllocatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ff" => Ok(AllocatorKind::Ff),
            "rf" => Ok(AllocatorKind::Rf),
            _ => Err(format!("unknown allocator {s:?}")),
        }
    }
}

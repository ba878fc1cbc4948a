//! Discrete-event simulation of serverless function auto-scaling on a
//! cluster of edge nodes, with tabular Q-learning, deep Q-learning and
//! threshold-monitoring scalers.

pub mod agents;
pub mod domain;
pub mod environment;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod workload;

pub use agents::{AgentKind, AllocatorKind, Policy};
pub use domain::{ClusterState, EdgeNode, FunctionClass, Millis, ScalingAction, Topology};
pub use environment::{EnqueueReward, Environment, RewardParams};
pub use harness::{ExperimentConfig, SweepAxis};
pub use metrics::EpisodeSummary;

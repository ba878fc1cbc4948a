//! Cluster, workload-class and action value types.
//!
//! Classes and nodes are identified by their position in the validated
//! [`Topology`] (0-based internally). Action codes and rendered keys use the
//! 1-based numbering of the scaling model: `Deploy(n)` has code `n + 1`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds of simulated time.
pub type Millis = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("topology needs at least one node and one function class")]
    Empty,
    #[error("class {0} needs more CPU than any node offers")]
    InfeasibleClass(usize),
    #[error("class {class}: {reason}")]
    InvalidClass { class: usize, reason: &'static str },
    #[error("node {node}: {reason}")]
    InvalidNode { node: usize, reason: &'static str },
}

/// A function class: resource demand, service/arrival statistics and deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    /// CPU units held by one replica.
    pub cpu_demand: u32,
    /// Mean of the exponential service time.
    pub mean_service_ms: Millis,
    /// Total-delay bound a request of this class must meet.
    pub deadline_ms: Millis,
    /// Mean of the exponential inter-arrival time.
    pub mean_interarrival_ms: Millis,
    #[serde(default = "default_processing_delay")]
    pub processing_delay_ms: Millis,
}

fn default_processing_delay() -> Millis {
    1.0
}

impl FunctionClass {
    pub fn new(
        cpu_demand: u32,
        mean_service_ms: Millis,
        deadline_ms: Millis,
        mean_interarrival_ms: Millis,
    ) -> Self {
        Self {
            cpu_demand,
            mean_service_ms,
            deadline_ms,
            mean_interarrival_ms,
            processing_delay_ms: default_processing_delay(),
        }
    }

    fn check(&self, class: usize) -> Result<(), DomainError> {
        let invalid = |reason| DomainError::InvalidClass { class, reason };
        if self.cpu_demand < 1 {
            return Err(invalid("cpu_demand must be at least 1"));
        }
        let times = [
            self.mean_service_ms,
            self.deadline_ms,
            self.mean_interarrival_ms,
            self.processing_delay_ms,
        ];
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(invalid("time fields must be finite and positive"));
        }
        if self.deadline_ms < self.processing_delay_ms {
            return Err(invalid("deadline is shorter than the processing delay"));
        }
        Ok(())
    }
}

/// A worker node with its CPU capacity and master-to-worker delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub capacity: u32,
    pub tx_delay_ms: Millis,
}

impl EdgeNode {
    pub fn new(capacity: u32, tx_delay_ms: Millis) -> Self {
        Self {
            capacity,
            tx_delay_ms,
        }
    }
}

/// A validated set of nodes and classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<EdgeNode>,
    classes: Vec<FunctionClass>,
    /// Node indices by ascending tx delay, ties by index.
    by_proximity: Vec<usize>,
    min_tx_delay: Millis,
}

/// Checks every class fits on at least one node and all fields are sane.
pub fn validate_topology(
    nodes: Vec<EdgeNode>,
    classes: Vec<FunctionClass>,
) -> Result<Topology, DomainError> {
    if nodes.is_empty() || classes.is_empty() {
        return Err(DomainError::Empty);
    }
    for (i, node) in nodes.iter().enumerate() {
        if node.capacity < 1 {
            return Err(DomainError::InvalidNode {
                node: i + 1,
                reason: "capacity must be at least 1",
            });
        }
        if !(node.tx_delay_ms.is_finite() && node.tx_delay_ms >= 0.0) {
            return Err(DomainError::InvalidNode {
                node: i + 1,
                reason: "tx delay must be finite and non-negative",
            });
        }
    }
    let max_capacity = nodes.iter().map(|n| n.capacity).max().unwrap_or(0);
    for (i, class) in classes.iter().enumerate() {
        class.check(i + 1)?;
        if class.cpu_demand > max_capacity {
            return Err(DomainError::InfeasibleClass(i + 1));
        }
    }
    let mut by_proximity: Vec<usize> = (0..nodes.len()).collect();
    by_proximity.sort_by(|&a, &b| {
        nodes[a]
            .tx_delay_ms
            .total_cmp(&nodes[b].tx_delay_ms)
            .then(a.cmp(&b))
    });
    let min_tx_delay = nodes[by_proximity[0]].tx_delay_ms;
    Ok(Topology {
        nodes,
        classes,
        by_proximity,
        min_tx_delay,
    })
}

impl Topology {
    pub fn nodes(&self) -> &[EdgeNode] {
        &self.nodes
    }

    pub fn classes(&self) -> &[FunctionClass] {
        &self.classes
    }

    pub fn node(&self, n: usize) -> &EdgeNode {
        &self.nodes[n]
    }

    pub fn class(&self, k: usize) -> &FunctionClass {
        &self.classes[k]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Node indices ordered closest-first.
    pub fn by_proximity(&self) -> &[usize] {
        &self.by_proximity
    }

    pub fn min_tx_delay(&self) -> Millis {
        self.min_tx_delay
    }
}

/// Stage of a request's life. Times are absolute simulation milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Request {
    pub id: u64,
    pub class: usize,
    pub arrival_time: Millis,
    pub dispatch_time: Option<Millis>,
    pub node: Option<usize>,
    pub completion_time: Option<Millis>,
}

impl Request {
    pub fn new(id: u64, class: usize, arrival_time: Millis) -> Self {
        Self {
            id,
            class,
            arrival_time,
            dispatch_time: None,
            node: None,
            completion_time: None,
        }
    }
}

/// One scaling decision. `Deploy` carries a 0-based node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalingAction {
    Enqueue,
    Deploy(usize),
    Remove,
    Keep,
}

impl ScalingAction {
    /// Action code: 0 enqueue/keep, `n` for deploy on node `n` (1-based), -1 remove.
    pub fn code(self) -> i32 {
        match self {
            ScalingAction::Enqueue | ScalingAction::Keep => 0,
            ScalingAction::Deploy(n) => n as i32 + 1,
            ScalingAction::Remove => -1,
        }
    }

    /// Inverse of [`code`](Self::code) given the event kind the code was taken on.
    pub fn from_code(code: i32, departure: bool) -> Option<Self> {
        match (departure, code) {
            (true, -1) => Some(ScalingAction::Remove),
            (true, 0) => Some(ScalingAction::Keep),
            (false, 0) => Some(ScalingAction::Enqueue),
            (false, c) if c >= 1 => Some(ScalingAction::Deploy(c as usize - 1)),
            _ => None,
        }
    }

    /// Position in the fixed network output layout `[remove, enqueue/keep, deploy 1..N]`.
    pub fn output_index(self) -> usize {
        (self.code() + 1) as usize
    }

    pub fn from_output_index(index: usize, departure: bool) -> Option<Self> {
        Self::from_code(index as i32 - 1, departure)
    }
}

/// Replica placement, queues and in-flight requests of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    n_classes: usize,
    n_nodes: usize,
    /// Row-major `[class][node]` replica counts.
    replicas: Vec<u32>,
    idle: Vec<u32>,
    used_cpu: Vec<u32>,
    queues: Vec<VecDeque<Request>>,
    in_flight: BTreeMap<u64, Request>,
}

impl ClusterState {
    pub fn empty(n_classes: usize, n_nodes: usize) -> Self {
        Self {
            n_classes,
            n_nodes,
            replicas: vec![0; n_classes * n_nodes],
            idle: vec![0; n_classes * n_nodes],
            used_cpu: vec![0; n_nodes],
            queues: vec![VecDeque::new(); n_classes],
            in_flight: BTreeMap::new(),
        }
    }

    pub fn for_topology(topo: &Topology) -> Self {
        Self::empty(topo.n_classes(), topo.n_nodes())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    fn cell(&self, class: usize, node: usize) -> usize {
        class * self.n_nodes + node
    }

    pub fn replicas(&self, class: usize, node: usize) -> u32 {
        self.replicas[self.cell(class, node)]
    }

    pub fn idle_replicas(&self, class: usize, node: usize) -> u32 {
        self.idle[self.cell(class, node)]
    }

    /// Flattened `[class][node]` replica matrix.
    pub fn replica_matrix(&self) -> &[u32] {
        &self.replicas
    }

    pub fn total_replicas(&self) -> u32 {
        self.replicas.iter().sum()
    }

    pub fn used_cpu(&self, node: usize) -> u32 {
        self.used_cpu[node]
    }

    pub fn free_cpu(&self, topo: &Topology, node: usize) -> u32 {
        topo.node(node).capacity.saturating_sub(self.used_cpu[node])
    }

    pub fn queue(&self, class: usize) -> &VecDeque<Request> {
        &self.queues[class]
    }

    pub fn queue_len(&self, class: usize) -> usize {
        self.queues[class].len()
    }

    pub fn queued_total(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn in_flight(&self) -> &BTreeMap<u64, Request> {
        &self.in_flight
    }

    /// Whether `class` can be placed on `node`, either by reusing an idle
    /// replica or by fitting a new one in the free capacity.
    pub fn can_place(&self, topo: &Topology, class: usize, node: usize) -> bool {
        self.idle_replicas(class, node) >= 1
            || self.free_cpu(topo, node) >= topo.class(class).cpu_demand
    }

    /// Nodes that can host a request of `class`, ascending by index.
    pub fn feasible_nodes(&self, topo: &Topology, class: usize) -> Vec<usize> {
        (0..self.n_nodes)
            .filter(|&n| self.can_place(topo, class, n))
            .collect()
    }

    pub fn has_feasible_node(&self, topo: &Topology, class: usize) -> bool {
        (0..self.n_nodes).any(|n| self.can_place(topo, class, n))
    }

    pub(crate) fn push_queue(&mut self, request: Request) {
        self.queues[request.class].push_back(request);
    }

    pub(crate) fn pop_queue(&mut self, class: usize) -> Option<Request> {
        self.queues[class].pop_front()
    }

    /// Marks one replica of `class` on `node` busy, reusing an idle one first.
    /// Returns `false` if neither an idle replica nor capacity is available.
    pub(crate) fn occupy_replica(&mut self, topo: &Topology, class: usize, node: usize) -> bool {
        let cell = self.cell(class, node);
        if self.idle[cell] > 0 {
            self.idle[cell] -= 1;
            return true;
        }
        let demand = topo.class(class).cpu_demand;
        if self.free_cpu(topo, node) < demand {
            return false;
        }
        self.replicas[cell] += 1;
        self.used_cpu[node] += demand;
        true
    }

    pub(crate) fn release_replica(&mut self, class: usize, node: usize) {
        let cell = self.cell(class, node);
        debug_assert!(self.idle[cell] < self.replicas[cell]);
        self.idle[cell] += 1;
    }

    /// Destroys a busy replica and returns its CPU.
    pub(crate) fn destroy_busy_replica(&mut self, topo: &Topology, class: usize, node: usize) {
        let cell = self.cell(class, node);
        debug_assert!(self.replicas[cell] > self.idle[cell]);
        self.replicas[cell] -= 1;
        self.used_cpu[node] -= topo.class(class).cpu_demand;
    }

    pub(crate) fn start(&mut self, request: Request) {
        self.in_flight.insert(request.id, request);
    }

    pub(crate) fn finish(&mut self, id: u64) -> Option<Request> {
        self.in_flight.remove(&id)
    }

    /// Verifies capacity, idle/busy and in-flight bookkeeping against `topo`.
    pub fn check_invariants(&self, topo: &Topology) -> Result<(), String> {
        let mut busy = vec![0u32; self.replicas.len()];
        for req in self.in_flight.values() {
            let node = req
                .node
                .ok_or_else(|| format!("in-flight request {} has no node", req.id))?;
            busy[self.cell(req.class, node)] += 1;
        }
        for n in 0..self.n_nodes {
            let mut used = 0u32;
            for k in 0..self.n_classes {
                let cell = self.cell(k, n);
                if self.idle[cell] > self.replicas[cell] {
                    return Err(format!(
                        "class {} node {}: idle exceeds replicas",
                        k + 1,
                        n + 1
                    ));
                }
                if self.replicas[cell] - self.idle[cell] != busy[cell] {
                    return Err(format!(
                        "class {} node {}: busy replicas disagree with in-flight set",
                        k + 1,
                        n + 1
                    ));
                }
                used += topo.class(k).cpu_demand * self.replicas[cell];
            }
            if used != self.used_cpu[n] {
                return Err(format!("node {}: cached CPU usage out of sync", n + 1));
            }
            if used > topo.node(n).capacity {
                return Err(format!(
                    "node {}: {} CPU used of {}",
                    n + 1,
                    used,
                    topo.node(n).capacity
                ));
            }
        }
        Ok(())
    }
}

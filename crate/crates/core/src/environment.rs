//! The scaling MDP: legal actions, state transitions, delay accounting,
//! rewards and the two state encodings used by the learning agents.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClusterState, FunctionClass, Millis, Request, ScalingAction, Topology};
use crate::workload::{EventKind, EventTimeline, SimEvent, Workload};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("illegal action {action:?} on {kind:?} event: {reason}")]
    IllegalAction {
        action: ScalingAction,
        kind: EventKind,
        reason: &'static str,
    },
    #[error("departure for unknown request {0}")]
    UnknownRequest(u64),
}

/// Delay components of one completed request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRecord {
    pub request_id: u64,
    pub class: usize,
    pub d_proc: Millis,
    pub d_tx: Millis,
    pub d_queue: Millis,
    pub total: Millis,
    pub satisfied: bool,
}

impl DelayRecord {
    pub fn new(
        request_id: u64,
        class: &FunctionClass,
        class_index: usize,
        d_tx: Millis,
        d_queue: Millis,
    ) -> Self {
        let d_proc = class.processing_delay_ms;
        let total = d_proc + d_tx + d_queue;
        Self {
            request_id,
            class: class_index,
            d_proc,
            d_tx,
            d_queue,
            total,
            satisfied: deadline_satisfied(total, class),
        }
    }
}

pub fn total_delay(record: &DelayRecord) -> Millis {
    record.d_proc + record.d_tx + record.d_queue
}

/// Inclusive deadline test.
pub fn deadline_satisfied(total: Millis, class: &FunctionClass) -> bool {
    total <= class.deadline_ms
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub r1: f64,
    pub r2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            r1: 1.0,
            r2: -1.0,
            w1: 1.0,
            w2: 1.0,
        }
    }
}

impl RewardParams {
    pub fn is_valid(&self) -> bool {
        self.r1 > 0.0 && self.r2 < 0.0 && self.w1.is_finite() && self.w2.is_finite()
    }
}

/// Piecewise reward: full base when `psi` is zero, base scaled by `w / psi` otherwise.
pub fn reward(satisfied: bool, psi: Millis, params: &RewardParams) -> f64 {
    match (satisfied, psi == 0.0) {
        (true, true) => params.r1,
        (true, false) => params.r1 * params.w1 / psi,
        (false, true) => params.r2,
        (false, false) => params.r2 * params.w2 / psi,
    }
}

/// When an enqueue decision is judged against the deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnqueueReward {
    /// At decision time: the request counts as satisfied if it could still
    /// meet its deadline on the closest node.
    Immediate,
    /// When the queued request is dispatched (scored like a deploy to the
    /// serving node) or when its deadline becomes unreachable (scored as a
    /// violation with zero distance), whichever happens first.
    #[default]
    Deferred,
}

/// Inputs of the reward function produced by one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSignal {
    pub satisfied: bool,
    pub psi: Millis,
}

/// A request placed on a replica during a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub request_id: u64,
    pub class: usize,
    pub node: usize,
    pub d_queue: Millis,
    pub signal: RewardSignal,
}

/// Everything a single `apply_action` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub scheduled: Vec<SimEvent>,
    pub completed: Option<DelayRecord>,
    pub dispatched: Option<Dispatch>,
    pub signal: RewardSignal,
}

/// Actions legal for `event` in `state`: enqueue or deploy on a feasible node
/// for arrivals, remove or keep for departures.
pub fn available_actions(
    state: &ClusterState,
    topo: &Topology,
    event: &SimEvent,
) -> Vec<ScalingAction> {
    match event.kind {
        EventKind::Arrival => {
            let mut actions = Vec::with_capacity(topo.n_nodes() + 1);
            actions.push(ScalingAction::Enqueue);
            actions.extend(
                state
                    .feasible_nodes(topo, event.class)
                    .into_iter()
                    .map(ScalingAction::Deploy),
            );
            actions
        }
        EventKind::Departure => vec![ScalingAction::Remove, ScalingAction::Keep],
    }
}

/// Whether a request that has waited until `clock` can still meet its deadline.
pub fn still_satisfiable(topo: &Topology, request: &Request, clock: Millis) -> bool {
    let class = topo.class(request.class);
    (clock - request.arrival_time) + class.processing_delay_ms + topo.min_tx_delay()
        <= class.deadline_ms
}

fn dispatch(
    state: &mut ClusterState,
    topo: &Topology,
    mut request: Request,
    node: usize,
    clock: Millis,
    workload: &mut dyn Workload,
) -> (Dispatch, SimEvent) {
    let class = topo.class(request.class);
    let d_queue = clock - request.arrival_time;
    let d_tx = topo.node(node).tx_delay_ms;
    let total = class.processing_delay_ms + d_tx + d_queue;
    let service = workload.service_time(request.class);
    request.dispatch_time = Some(clock);
    request.node = Some(node);
    let departure = SimEvent::departure(clock + service, request.class, request.id, node);
    let out = Dispatch {
        request_id: request.id,
        class: request.class,
        node,
        d_queue,
        signal: RewardSignal {
            satisfied: deadline_satisfied(total, class),
            psi: d_tx,
        },
    };
    state.start(request);
    (out, departure)
}

/// Applies `action` for `event` at time `clock`.
///
/// `Enqueue` puts the arrival at the back of its class queue; `Deploy`
/// serves it on `node` right away, so only enqueued requests ever wait.
/// A departure frees its replica: `Keep` leaves it idle and immediately
/// hands it the queue head, `Remove` destroys it.
pub fn apply_action(
    state: &mut ClusterState,
    topo: &Topology,
    event: &SimEvent,
    action: ScalingAction,
    clock: Millis,
    workload: &mut dyn Workload,
) -> Result<ActionOutcome, EnvError> {
    let illegal = |reason| EnvError::IllegalAction {
        action,
        kind: event.kind,
        reason,
    };
    let class = event.class;
    match (event.kind, action) {
        (EventKind::Arrival, ScalingAction::Enqueue) => {
            let request = Request::new(event.request_id, class, event.time);
            let satisfied = still_satisfiable(topo, &request, clock);
            state.push_queue(request);
            Ok(ActionOutcome {
                scheduled: Vec::new(),
                completed: None,
                dispatched: None,
                signal: RewardSignal {
                    satisfied,
                    psi: 0.0,
                },
            })
        }
        (EventKind::Arrival, ScalingAction::Deploy(node)) => {
            if node >= topo.n_nodes() {
                return Err(illegal("node index out of range"));
            }
            if !state.occupy_replica(topo, class, node) {
                return Err(illegal(
                    "node has neither an idle replica nor free capacity",
                ));
            }
            let request = Request::new(event.request_id, class, event.time);
            let (dispatched, departure) = dispatch(state, topo, request, node, clock, workload);
            Ok(ActionOutcome {
                scheduled: vec![departure],
                completed: None,
                signal: dispatched.signal,
                dispatched: Some(dispatched),
            })
        }
        (EventKind::Departure, ScalingAction::Keep | ScalingAction::Remove) => {
            let node = event
                .node
                .ok_or_else(|| illegal("departure without node"))?;
            let mut request = state
                .finish(event.request_id)
                .ok_or(EnvError::UnknownRequest(event.request_id))?;
            if request.node != Some(node) || request.class != class {
                return Err(illegal("departure does not match the in-flight request"));
            }
            request.completion_time = Some(clock);
            let dispatch_time = request
                .dispatch_time
                .expect("in-flight requests are dispatched");
            let record = DelayRecord::new(
                request.id,
                topo.class(class),
                class,
                topo.node(node).tx_delay_ms,
                dispatch_time - request.arrival_time,
            );
            let signal = RewardSignal {
                satisfied: record.satisfied,
                psi: 0.0,
            };
            let mut scheduled = Vec::new();
            let mut dispatched = None;
            if action == ScalingAction::Keep {
                state.release_replica(class, node);
                if let Some(head) = state.pop_queue(class) {
                    let reused = state.occupy_replica(topo, class, node);
                    debug_assert!(reused);
                    let (d, departure) = dispatch(state, topo, head, node, clock, workload);
                    scheduled.push(departure);
                    dispatched = Some(d);
                }
            } else {
                state.destroy_busy_replica(topo, class, node);
            }
            Ok(ActionOutcome {
                scheduled,
                completed: Some(record),
                dispatched,
                signal,
            })
        }
        _ => Err(illegal("action does not apply to this event kind")),
    }
}

/// Tabular state: per-class availability bits, clipped queue lengths and the event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TabularStateKey {
    pub availability: Vec<bool>,
    pub queue_lengths: Vec<u16>,
    pub departure: bool,
    /// 0-based class of the triggering event.
    pub class: usize,
}

pub fn encode_tabular(
    state: &ClusterState,
    topo: &Topology,
    event: &SimEvent,
    q_max: u16,
) -> TabularStateKey {
    let k = topo.n_classes();
    TabularStateKey {
        availability: (0..k).map(|c| state.has_feasible_node(topo, c)).collect(),
        queue_lengths: (0..k)
            .map(|c| state.queue_len(c).min(q_max as usize) as u16)
            .collect(),
        departure: event.is_departure(),
        class: event.class,
    }
}

impl fmt::Display for TabularStateKey {
    /// `bits|q1,..,qK|e|f` with a 1-based class.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &bit in &self.availability {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        f.write_str("|")?;
        for (i, q) in self.queue_lengths.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{q}")?;
        }
        write!(f, "|{}|{}", u8::from(self.departure), self.class + 1)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("malformed state key {0:?}")]
pub struct KeyParseError(pub String);

impl FromStr for TabularStateKey {
    type Err = KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || KeyParseError(s.to_string());
        let parts: Vec<&str> = s.split('|').collect();
        let [bits, queues, e, f] = parts.as_slice() else {
            return Err(err());
        };
        let availability = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(err()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let queue_lengths = queues
            .split(',')
            .map(|q| q.parse::<u16>().map_err(|_| err()))
            .collect::<Result<Vec<_>, _>>()?;
        let departure = match *e {
            "0" => false,
            "1" => true,
            _ => return Err(err()),
        };
        let class: usize = f.parse().map_err(|_| err())?;
        if class == 0 || availability.len() != queue_lengths.len() || class > availability.len() {
            return Err(err());
        }
        Ok(Self {
            availability,
            queue_lengths,
            departure,
            class: class - 1,
        })
    }
}

/// Dense network input: replica matrix, queue lengths, event bit, class one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len_for(n_classes: usize, n_nodes: usize) -> usize {
        n_classes * n_nodes + 2 * n_classes + 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode_features(state: &ClusterState, topo: &Topology, event: &SimEvent) -> FeatureVector {
    let k = topo.n_classes();
    let mut v = Vec::with_capacity(FeatureVector::len_for(k, topo.n_nodes()));
    v.extend(state.replica_matrix().iter().map(|&r| f64::from(r)));
    v.extend((0..k).map(|c| state.queue_len(c) as f64));
    v.push(f64::from(event.kind.bit()));
    v.extend((0..k).map(|c| if c == event.class { 1.0 } else { 0.0 }));
    FeatureVector(v)
}

/// Outstanding enqueue decisions awaiting a deferred reward, per class in
/// arrival order (the same order the FIFO queues serve them).
#[derive(Debug, Clone)]
pub struct PendingEnqueues<T> {
    per_class: Vec<VecDeque<(Request, T)>>,
}

impl<T> PendingEnqueues<T> {
    pub fn new(n_classes: usize) -> Self {
        Self {
            per_class: (0..n_classes).map(|_| VecDeque::new()).collect(),
        }
    }

    pub fn push(&mut self, request: Request, token: T) {
        self.per_class[request.class].push_back((request, token));
    }

    pub fn len(&self) -> usize {
        self.per_class.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resolves the pending decision for a request that was just dispatched.
    pub fn on_dispatch(&mut self, dispatch: &Dispatch) -> Option<(T, RewardSignal)> {
        let queue = &mut self.per_class[dispatch.class];
        // Expired entries are dropped from the front, so a dispatched request
        // is either at the front or was already resolved.
        match queue.front() {
            Some((req, _)) if req.id == dispatch.request_id => {
                queue.pop_front().map(|(_, token)| (token, dispatch.signal))
            }
            _ => None,
        }
    }

    /// Resolves, as violations, every pending request whose deadline can no
    /// longer be met at `clock`.
    pub fn expire(&mut self, topo: &Topology, clock: Millis) -> Vec<(T, RewardSignal)> {
        let mut out = Vec::new();
        for queue in &mut self.per_class {
            while let Some((req, _)) = queue.front() {
                if still_satisfiable(topo, req, clock) {
                    break;
                }
                let (_, token) = queue.pop_front().expect("front exists");
                out.push((
                    token,
                    RewardSignal {
                        satisfied: false,
                        psi: 0.0,
                    },
                ));
            }
        }
        out
    }
}

/// One simulation run: cluster state, event timeline and workload source.
pub struct Environment<W: Workload> {
    topo: Topology,
    state: ClusterState,
    timeline: EventTimeline,
    workload: W,
    clock: Millis,
    next_request_id: u64,
    arrivals: u64,
    completed: u64,
}

impl<W: Workload> Environment<W> {
    pub fn new(topo: Topology, mut workload: W) -> Self {
        let mut timeline = EventTimeline::new();
        let mut next_request_id = 0;
        for class in 0..topo.n_classes() {
            if let Some(t) = workload.next_arrival(class, 0.0) {
                timeline.push(SimEvent::arrival(t, class, next_request_id));
                next_request_id += 1;
            }
        }
        Self {
            state: ClusterState::for_topology(&topo),
            topo,
            timeline,
            workload,
            clock: 0.0,
            next_request_id,
            arrivals: 0,
            completed: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Pops the next event and advances the clock. Arrivals schedule the
    /// next arrival of their class.
    pub fn next_event(&mut self) -> Option<SimEvent> {
        let event = self.timeline.next_event()?;
        self.clock = event.time;
        if event.kind == EventKind::Arrival {
            self.arrivals += 1;
            if let Some(t) = self.workload.next_arrival(event.class, event.time) {
                self.timeline
                    .push(SimEvent::arrival(t, event.class, self.next_request_id));
                self.next_request_id += 1;
            }
        }
        Some(event)
    }

    pub fn available_actions(&self, event: &SimEvent) -> Vec<ScalingAction> {
        available_actions(&self.state, &self.topo, event)
    }

    pub fn step(
        &mut self,
        event: &SimEvent,
        action: ScalingAction,
    ) -> Result<ActionOutcome, EnvError> {
        let outcome = apply_action(
            &mut self.state,
            &self.topo,
            event,
            action,
            self.clock,
            &mut self.workload,
        )?;
        for ev in &outcome.scheduled {
            self.timeline.push(ev.clone());
        }
        if outcome.completed.is_some() {
            self.completed += 1;
        }
        Ok(outcome)
    }
}

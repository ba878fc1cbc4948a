//! Event timeline and seeded stochastic workload generation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};

use crate::domain::{FunctionClass, Millis};

/// Upper bound of the uniform master-to-worker delay draw.
pub const MAX_TX_DELAY_MS: Millis = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    Departure,
}

impl EventKind {
    /// The event bit: 0 for arrivals, 1 for departures.
    pub fn bit(self) -> u8 {
        match self {
            EventKind::Arrival => 0,
            EventKind::Departure => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: Millis,
    pub kind: EventKind,
    pub class: usize,
    pub request_id: u64,
    /// Serving node, set on departures.
    pub node: Option<usize>,
    pub seq: u64,
}

impl SimEvent {
    pub fn arrival(time: Millis, class: usize, request_id: u64) -> Self {
        Self {
            time,
            kind: EventKind::Arrival,
            class,
            request_id,
            node: None,
            seq: 0,
        }
    }

    pub fn departure(time: Millis, class: usize, request_id: u64, node: usize) -> Self {
        Self {
            time,
            kind: EventKind::Departure,
            class,
            request_id,
            node: Some(node),
            seq: 0,
        }
    }

    pub fn is_departure(&self) -> bool {
        self.kind == EventKind::Departure
    }
}

struct Pending(SimEvent);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap and we want the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Min-priority queue of events ordered by `(time, seq)`.
#[derive(Default)]
pub struct EventTimeline {
    pending: BinaryHeap<Pending>,
    next_seq: u64,
    emitted_count: u64,
}

impl EventTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `event`, stamping it with the next sequence number.
    pub fn push(&mut self, mut event: SimEvent) {
        event.seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push(Pending(event));
    }

    /// Removes the earliest event; `None` once the timeline is exhausted.
    pub fn next_event(&mut self) -> Option<SimEvent> {
        let event = self.pending.pop()?.0;
        self.emitted_count += 1;
        Some(event)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn emitted_count(&self) -> u64 {
        self.emitted_count
    }
}

fn sample_exponential<R: Rng + ?Sized>(mean: Millis, rng: &mut R) -> Millis {
    let dist = Exp::new(1.0 / mean).expect("exponential mean must be positive");
    loop {
        let x: f64 = dist.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}

/// Exponential gap until the next arrival of `class`.
pub fn sample_interarrival<R: Rng + ?Sized>(class: &FunctionClass, rng: &mut R) -> Millis {
    sample_exponential(class.mean_interarrival_ms, rng)
}

/// Exponential service duration of one request of `class`.
pub fn sample_service<R: Rng + ?Sized>(class: &FunctionClass, rng: &mut R) -> Millis {
    sample_exponential(class.mean_service_ms, rng)
}

/// Independent uniform draws on `[0, 30]` ms, one per node.
pub fn sample_topology_delays<R: Rng + ?Sized>(n_nodes: usize, rng: &mut R) -> Vec<Millis> {
    let dist = Uniform::new_inclusive(0.0, MAX_TX_DELAY_MS);
    (0..n_nodes).map(|_| dist.sample(rng)).collect()
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Workload,
    Agent,
}

/// Derives an independent stream seed for `(seed, episode, stream)`.
pub fn derive_seed(seed: u64, episode: u64, stream: Stream) -> u64 {
    let tag = match stream {
        Stream::Topology => 0x746f_706f,
        Stream::Workload => 0x776f_726b,
        Stream::Agent => 0x6167_6e74,
    };
    mix64(mix64(mix64(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(episode)).wrapping_add(tag))
}

/// Source of arrival times and service durations for the simulator.
pub trait Workload {
    /// Absolute time of the next arrival of `class` after `now`, or `None`
    /// when the class has no further arrivals.
    fn next_arrival(&mut self, class: usize, now: Millis) -> Option<Millis>;

    fn service_time(&mut self, class: usize) -> Millis;
}

/// Poisson arrivals and exponential service per class from one seeded stream.
pub struct PoissonWorkload {
    classes: Vec<FunctionClass>,
    rng: ChaCha8Rng,
}

impl PoissonWorkload {
    pub fn new(classes: Vec<FunctionClass>, seed: u64) -> Self {
        Self {
            classes,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Workload for PoissonWorkload {
    fn next_arrival(&mut self, class: usize, now: Millis) -> Option<Millis> {
        Some(now + sample_interarrival(&self.classes[class], &mut self.rng))
    }

    fn service_time(&mut self, class: usize) -> Millis {
        sample_service(&self.classes[class], &mut self.rng)
    }
}

/// Fixed arrival instants and service durations, consumed in order.
#[derive(Debug, Clone, Default)]
pub struct ScriptedWorkload {
    arrivals: Vec<VecDeque<Millis>>,
    services: Vec<VecDeque<Millis>>,
}

impl ScriptedWorkload {
    /// `arrivals[k]` are the absolute arrival times of class `k` (ascending);
    /// `services[k]` the service durations handed out to class `k` dispatches.
    pub fn new(arrivals: Vec<Vec<Millis>>, services: Vec<Vec<Millis>>) -> Self {
        Self {
            arrivals: arrivals.into_iter().map(VecDeque::from).collect(),
            services: services.into_iter().map(VecDeque::from).collect(),
        }
    }
}

impl Workload for ScriptedWorkload {
    fn next_arrival(&mut self, class: usize, _now: Millis) -> Option<Millis> {
        self.arrivals.get_mut(class)?.pop_front()
    }

    fn service_time(&mut self, class: usize) -> Millis {
        self.services[class]
            .pop_front()
            .expect("scripted workload ran out of service times")
    }
}

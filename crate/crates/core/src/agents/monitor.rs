//! Threshold-driven monitoring scalers with first-fit / random-fit placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{AllocatorKind, Policy, StepView};
use crate::domain::{ClusterState, Millis, ScalingAction, Topology};
use crate::workload::EventKind;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AllocError {
    #[error("no node can host class {0}")]
    NoFeasibleNode(usize),
}

/// Scaling code of the monitoring algorithm: 1 scale up, 0 hold, -1 scale down.
#[allow(clippy::too_many_arguments)]
pub fn mnt_decide(
    kind: EventKind,
    queue_len: usize,
    has_capacity: bool,
    deadline_ok: bool,
    load: f64,
    threshold: f64,
    delay_aware: bool,
) -> i8 {
    match kind {
        EventKind::Arrival => {
            if has_capacity && (deadline_ok || !delay_aware) && load > threshold {
                1
            } else {
                0
            }
        }
        EventKind::Departure => {
            if queue_len == 0 {
                -1
            } else {
                0
            }
        }
    }
}

/// Closest node (by tx delay, then index) that can host `class`.
pub fn allocate_first_fit(
    state: &ClusterState,
    topo: &Topology,
    class: usize,
) -> Result<usize, AllocError> {
    topo.by_proximity()
        .iter()
        .copied()
        .find(|&n| state.can_place(topo, class, n))
        .ok_or(AllocError::NoFeasibleNode(class + 1))
}

/// Uniformly random node among those that can host `class`.
pub fn allocate_random_fit<R: Rng + ?Sized>(
    state: &ClusterState,
    topo: &Topology,
    class: usize,
    rng: &mut R,
) -> Result<usize, AllocError> {
    let feasible = state.feasible_nodes(topo, class);
    if feasible.is_empty() {
        return Err(AllocError::NoFeasibleNode(class + 1));
    }
    Ok(feasible[rng.gen_range(0..feasible.len())])
}

/// Whether some feasible node lets a request that arrived at `arrival_time`
/// meet its deadline if dispatched at `clock`.
pub fn deadline_reachable(
    state: &ClusterState,
    topo: &Topology,
    class: usize,
    arrival_time: Millis,
    clock: Millis,
) -> bool {
    let c = topo.class(class);
    let waited = clock - arrival_time;
    state
        .feasible_nodes(topo, class)
        .into_iter()
        .any(|n| c.processing_delay_ms + topo.node(n).tx_delay_ms + waited <= c.deadline_ms)
}

pub struct MonitorAgent {
    delay_aware: bool,
    allocator: AllocatorKind,
    threshold: f64,
    rng: ChaCha8Rng,
}

impl MonitorAgent {
    pub fn new(delay_aware: bool, allocator: AllocatorKind, threshold: f64, seed: u64) -> Self {
        Self {
            delay_aware,
            allocator,
            threshold,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for MonitorAgent {
    type Obs = ();

    fn observe(&self, _view: &StepView<'_>) {}

    fn select(&mut self, _obs: &(), view: &StepView<'_>) -> ScalingAction {
        let class = view.event.class;
        let queue_len = view.state.queue_len(class);
        match view.event.kind {
            EventKind::Departure => match mnt_decide(
                EventKind::Departure,
                queue_len,
                false,
                false,
                0.0,
                0.0,
                false,
            ) {
                -1 => ScalingAction::Remove,
                _ => ScalingAction::Keep,
            },
            EventKind::Arrival => {
                let has_capacity = view.state.has_feasible_node(view.topo, class);
                let deadline_ok = !self.delay_aware
                    || deadline_reachable(
                        view.state,
                        view.topo,
                        class,
                        view.event.time,
                        view.clock,
                    );
                let code = mnt_decide(
                    EventKind::Arrival,
                    queue_len,
                    has_capacity,
                    deadline_ok,
                    queue_len as f64,
                    self.threshold,
                    self.delay_aware,
                );
                if code != 1 {
                    return ScalingAction::Enqueue;
                }
                let node = match self.allocator {
                    AllocatorKind::Ff => allocate_first_fit(view.state, view.topo, class),
                    AllocatorKind::Rf => {
                        allocate_random_fit(view.state, view.topo, class, &mut self.rng)
                    }
                };
                node.map_or(ScalingAction::Enqueue, ScalingAction::Deploy)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_topology, EdgeNode, FunctionClass};

    #[test]
    fn decision_table() {
        use EventKind::*;
        assert_eq!(mnt_decide(Arrival, 3, true, true, 3.0, 1.0, true), 1);
        assert_eq!(mnt_decide(Arrival, 3, false, true, 3.0, 1.0, false), 0);
        assert_eq!(mnt_decide(Arrival, 1, true, true, 1.0, 1.0, false), 0);
        assert_eq!(mnt_decide(Arrival, 3, true, false, 3.0, 1.0, false), 1);
        assert_eq!(mnt_decide(Arrival, 3, true, false, 3.0, 1.0, true), 0);
        assert_eq!(mnt_decide(Departure, 0, false, false, 0.0, 1.0, false), -1);
        assert_eq!(mnt_decide(Departure, 2, false, false, 0.0, 1.0, false), 0);
    }

    fn topo(delays: &[f64], capacity: u32) -> Topology {
        let nodes = delays.iter().map(|&d| EdgeNode::new(capacity, d)).collect();
        validate_topology(nodes, vec![FunctionClass::new(2, 5.0, 20.0, 3.0)]).unwrap()
    }

    #[test]
    fn first_fit_picks_closest_feasible() {
        let t = topo(&[5.0, 1.0, 9.0], 2);
        let mut s = ClusterState::for_topology(&t);
        assert_eq!(allocate_first_fit(&s, &t, 0), Ok(1));
        assert!(s.occupy_replica(&t, 0, 1));
        assert_eq!(allocate_first_fit(&s, &t, 0), Ok(0));
        assert!(s.occupy_replica(&t, 0, 0));
        assert!(s.occupy_replica(&t, 0, 2));
        assert_eq!(
            allocate_first_fit(&s, &t, 0),
            Err(AllocError::NoFeasibleNode(1))
        );
    }

    #[test]
    fn random_fit_edge_cases() {
        let t = topo(&[5.0, 1.0], 2);
        let mut s = ClusterState::for_topology(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(s.occupy_replica(&t, 0, 0));
        assert_eq!(allocate_random_fit(&s, &t, 0, &mut rng), Ok(1));
        assert!(s.occupy_replica(&t, 0, 1));
        assert_eq!(
            allocate_random_fit(&s, &t, 0, &mut rng),
            Err(AllocError::NoFeasibleNode(1))
        );
    }

    #[test]
    fn deadline_guard_considers_wait() {
        let t = topo(&[15.0, 25.0], 4);
        let s = ClusterState::for_topology(&t);
        // proc 1 + tx 15 = 16 <= 20 with no wait; waiting 5 ms breaks it
        assert!(deadline_reachable(&s, &t, 0, 0.0, 4.0));
        assert!(!deadline_reachable(&s, &t, 0, 0.0, 5.0));
    }
}

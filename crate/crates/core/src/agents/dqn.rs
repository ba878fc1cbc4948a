use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::qlearning::{decay_epsilon, ExplorationSchedule};
use super::{pick_uniform, Policy, StepView};
use crate::domain::ScalingAction;
use crate::environment::{encode_features, FeatureVector};
use crate::neural::{train_batch, DenseNetwork, Optimizer, ReplayMemory, TrainConfig, Transition};

/// Output-layout mask (`[remove, enqueue/keep, deploy 1..N]`) of the legal actions.
pub fn action_mask(available: &[ScalingAction], n_nodes: usize) -> Vec<bool> {
    let mut mask = vec![false; n_nodes + 2];
    for a in available {
        mask[a.output_index()] = true;
    }
    mask
}

/// Epsilon-greedy over the network's q-values restricted to `available` on
/// arrivals; uniform on departures.
pub fn select_action_drl<R: Rng + ?Sized>(
    net: &DenseNetwork,
    features: &FeatureVector,
    departure: bool,
    available: &[ScalingAction],
    epsilon: f64,
    rng: &mut R,
) -> ScalingAction {
    assert!(!available.is_empty(), "no available actions");
    if departure || rng.gen::<f64>() < epsilon {
        return pick_uniform(available, rng);
    }
    let q = net
        .forward(features.as_slice())
        .expect("feature length matches network input");
    let mut best = available[0];
    for &a in &available[1..] {
        let (qa, qb) = (q[a.output_index()], q[best.output_index()]);
        if qa > qb || (qa == qb && a.output_index() < best.output_index()) {
            best = a;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnObs {
    pub features: FeatureVector,
    pub departure: bool,
    pub available: Vec<ScalingAction>,
    pub mask: Vec<bool>,
}

pub struct DqnAgent {
    net: DenseNetwork,
    optimizer: Optimizer,
    memory: ReplayMemory,
    schedule: ExplorationSchedule,
    train: TrainConfig,
    rng: ChaCha8Rng,
    n_nodes: usize,
    events: u64,
    losses: Vec<f64>,
}

impl DqnAgent {
    /// `dims` is the full layer chain, input first.
    pub fn new(
        dims: &[usize],
        train: TrainConfig,
        schedule: ExplorationSchedule,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNetwork::init(dims, &mut rng);
        let n_nodes = dims.last().copied().expect("dims non-empty") - 2;
        Self {
            optimizer: Optimizer::new(train.optimizer, train.learning_rate, &net),
            memory: ReplayMemory::new(train.replay_capacity),
            net,
            schedule,
            train,
            rng,
            n_nodes,
            events: 0,
            losses: Vec::new(),
        }
    }

    pub fn network(&self) -> &DenseNetwork {
        &self.net
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.epsilon
    }

    /// Pre-step losses of every training round so far.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }
}

impl Policy for DqnAgent {
    type Obs = DqnObs;

    fn observe(&self, view: &StepView<'_>) -> DqnObs {
        DqnObs {
            features: encode_features(view.state, view.topo, view.event),
            departure: view.event.is_departure(),
            available: view.available.to_vec(),
            mask: action_mask(view.available, self.n_nodes),
        }
    }

    fn select(&mut self, obs: &DqnObs, _view: &StepView<'_>) -> ScalingAction {
        select_action_drl(
            &self.net,
            &obs.features,
            obs.departure,
            &obs.available,
            self.schedule.epsilon,
            &mut self.rng,
        )
    }

    fn learns(&self) -> bool {
        true
    }

    fn learn(&mut self, obs: &DqnObs, action: ScalingAction, reward: f64, next: &DqnObs) {
        self.memory.push(Transition {
            state: obs.features.0.clone(),
            action: action.output_index(),
            reward,
            next_state: next.features.0.clone(),
            next_mask: next.mask.clone(),
        });
    }

    fn begin_episode(&mut self, episode: usize, total_episodes: usize) {
        decay_epsilon(&mut self.schedule, episode, total_episodes);
    }

    fn end_event(&mut self) {
        self.events += 1;
        if self.events.is_multiple_of(self.train.update_every as u64) && !self.memory.is_empty() {
            let batch = self.memory.sample(self.train.batch_size, &mut self.rng);
            let loss = train_batch(&mut self.net, &mut self.optimizer, &batch, self.train.gamma);
            self.losses.push(loss);
        }
    }
}

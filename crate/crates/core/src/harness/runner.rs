use rayon::prelude::*;

use super::config::{ConfigError, Contender, ExperimentConfig, SweepAxis};
use crate::agents::{AgentKind, DqnAgent, MonitorAgent, Policy, QLearningAgent, QTable, StepView};
use crate::domain::{Request, ScalingAction, Topology};
use crate::environment::{
    reward, DelayRecord, EnqueueReward, Environment, PendingEnqueues, RewardParams, RewardSignal,
};
use crate::metrics::{EpisodeAccumulator, EpisodeSummary};
use crate::neural::DenseNetwork;
use crate::workload::{derive_seed, EventKind, PoissonWorkload, SimEvent, Stream, Workload};

/// Loop settings shared by every episode of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeParams {
    pub events: u64,
    pub reward: RewardParams,
    pub enqueue_reward: EnqueueReward,
}

/// One processed event as seen by the loop, for trace comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub event: SimEvent,
    pub action: ScalingAction,
    /// Rewards resolved during this step, in resolution order, keyed by the
    /// event index of the decision they belong to.
    pub rewards: Vec<(usize, f64)>,
    pub dispatched: Option<(u64, usize)>,
    pub completed: Option<DelayRecord>,
    pub total_replicas: u32,
    pub queue_lengths: Vec<usize>,
}

struct Decision<O> {
    index: usize,
    obs: O,
    action: ScalingAction,
    next: Option<O>,
}

/// Transitions waiting for their next observation or their reward.
struct Ledger<O> {
    slots: Vec<Option<Decision<O>>>,
    ready: Vec<(usize, f64)>,
}

impl<O: Clone> Ledger<O> {
    fn settle<P: Policy<Obs = O>>(
        &mut self,
        slot: usize,
        r: f64,
        policy: &mut P,
        acc: &mut EpisodeAccumulator,
    ) {
        let d = self.slots[slot].take().expect("decision settled once");
        acc.record_reward(r);
        if policy.learns() {
            let next = d.next.as_ref().expect("settled decisions have a successor");
            policy.learn(&d.obs, d.action, r, next);
        }
        self.ready.push((d.index, r));
    }
}

/// Runs one episode of `params.events` events (or until the workload runs
/// dry) and returns its summary. Learning state lives in `policy`.
///
/// A decision's experience is completed by the observation of the next
/// event. Its reward is known right away, except for deferred enqueues,
/// which are settled when the request is dispatched or can no longer make
/// its deadline. Decisions still open when the episode ends are dropped.
pub fn run_episode<P: Policy, W: Workload>(
    policy: &mut P,
    topo: Topology,
    workload: W,
    params: &EpisodeParams,
    episode: usize,
    total_episodes: usize,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> EpisodeSummary {
    policy.begin_episode(episode, total_episodes);
    let mut env = Environment::new(topo, workload);
    let mut acc = EpisodeAccumulator::new(0.0, 0);
    let mut pending: PendingEnqueues<usize> = PendingEnqueues::new(env.topology().n_classes());
    let mut ledger: Ledger<P::Obs> = Ledger {
        slots: Vec::new(),
        ready: Vec::new(),
    };
    // slot of the previous decision and its reward, if already known
    let mut previous: Option<(usize, Option<f64>)> = None;
    let score = |s: RewardSignal| reward(s.satisfied, s.psi, &params.reward);

    let mut index = 0;
    while (index as u64) < params.events {
        let Some(event) = env.next_event() else { break };
        let clock = env.clock();
        let available = env.available_actions(&event);
        let view = StepView {
            state: env.state(),
            topo: env.topology(),
            event: &event,
            available: &available,
            clock,
        };
        let obs = policy.observe(&view);

        if let Some((slot, r)) = previous.take() {
            if let Some(d) = ledger.slots[slot].as_mut() {
                d.next = Some(obs.clone());
            }
            if let Some(r) = r {
                ledger.settle(slot, r, policy, &mut acc);
            }
        }
        for (slot, signal) in pending.expire(env.topology(), clock) {
            ledger.settle(slot, score(signal), policy, &mut acc);
        }

        let action = policy.select(&obs, &view);
        let outcome = match env.step(&event, action) {
            Ok(o) => o,
            Err(e) => panic!("policy chose an unavailable action: {e}"),
        };

        let slot = ledger.slots.len();
        ledger.slots.push(Some(Decision {
            index,
            obs,
            action,
            next: None,
        }));
        if let Some(d) = &outcome.dispatched {
            if let Some((s, signal)) = pending.on_dispatch(d) {
                ledger.settle(s, score(signal), policy, &mut acc);
            }
        }
        let deferred = params.enqueue_reward == EnqueueReward::Deferred
            && event.kind == EventKind::Arrival
            && action == ScalingAction::Enqueue;
        if deferred {
            pending.push(
                Request::new(event.request_id, event.class, event.time),
                slot,
            );
            previous = Some((slot, None));
        } else {
            previous = Some((slot, Some(score(outcome.signal))));
        }

        if let Some(record) = &outcome.completed {
            acc.record_completion(record);
        }
        acc.sample_replicas(env.state().total_replicas(), clock);
        acc.record_event();
        policy.end_event();

        let rewards = std::mem::take(&mut ledger.ready);
        if let Some(t) = trace.as_deref_mut() {
            let state = env.state();
            t.push(TraceStep {
                event: event.clone(),
                action,
                rewards,
                dispatched: outcome.dispatched.as_ref().map(|d| (d.request_id, d.node)),
                completed: outcome.completed.clone(),
                total_replicas: state.total_replicas(),
                queue_lengths: (0..state.n_classes()).map(|k| state.queue_len(k)).collect(),
            });
        }
        index += 1;
    }
    acc.summarize(episode)
}

/// Learned model of a finished run.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    QTable(QTable),
    Network(DenseNetwork),
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeSummary>,
    pub model: Option<TrainedModel>,
}

impl ExperimentConfig {
    pub fn episode_params(&self) -> EpisodeParams {
        EpisodeParams {
            events: self.events_per_episode,
            reward: self.reward,
            enqueue_reward: self.enqueue_reward,
        }
    }
}

fn run_episodes<P: Policy>(
    policy: &mut P,
    cfg: &ExperimentConfig,
    topo: &Topology,
    seed: u64,
) -> Vec<EpisodeSummary> {
    let total = cfg.episodes();
    let params = cfg.episode_params();
    (1..=total)
        .map(|ep| {
            let workload = PoissonWorkload::new(
                cfg.classes.clone(),
                derive_seed(seed, ep as u64, Stream::Workload),
            );
            run_episode(policy, topo.clone(), workload, &params, ep, total, None)
        })
        .collect()
}

/// Every episode of the configured agent on one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, ConfigError> {
    cfg.validate()?;
    let topo = cfg.topology_for_seed(seed)?;
    let agent_seed = derive_seed(seed, 0, Stream::Agent);
    let (episodes, model) = match cfg.agent {
        AgentKind::Rl => {
            let mut agent =
                QLearningAgent::new(cfg.rl.learning, cfg.rl.exploration, cfg.q_max, agent_seed);
            let eps = run_episodes(&mut agent, cfg, &topo, seed);
            (eps, Some(TrainedModel::QTable(agent.table().clone())))
        }
        AgentKind::Drl => {
            let mut agent = DqnAgent::new(
                &cfg.network_dims(),
                cfg.drl.train,
                cfg.drl.exploration,
                agent_seed,
            );
            let eps = run_episodes(&mut agent, cfg, &topo, seed);
            (eps, Some(TrainedModel::Network(agent.network().clone())))
        }
        AgentKind::Mnt | AgentKind::MntConstraint => {
            let delay_aware = cfg.agent == AgentKind::MntConstraint;
            let mut agent = MonitorAgent::new(
                delay_aware,
                cfg.allocator,
                cfg.monitor.threshold,
                agent_seed,
            );
            (run_episodes(&mut agent, cfg, &topo, seed), None)
        }
    };
    Ok(SeedRun {
        seed,
        episodes,
        model,
    })
}

/// Independent runs for every configured seed, in seed-list order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>, ConfigError> {
    cfg.validate()?;
    cfg.seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect()
}

/// One cell of a sweep: final-episode metrics averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub contender: Contender,
    pub axis: SweepAxis,
    pub value: f64,
    pub summary: EpisodeSummary,
    /// Final-episode summary of each seed, in seed-list order.
    pub per_seed: Vec<EpisodeSummary>,
}

/// Field-wise mean of summaries; counts are rounded down.
pub fn mean_summary(summaries: &[EpisodeSummary]) -> EpisodeSummary {
    let n = summaries.len().max(1) as f64;
    let mean = |f: fn(&EpisodeSummary) -> f64| summaries.iter().map(f).sum::<f64>() / n;
    EpisodeSummary {
        episode: summaries.first().map_or(0, |s| s.episode),
        avg_delay_ms: mean(|s| s.avg_delay_ms),
        avg_replicas: mean(|s| s.avg_replicas),
        satisfaction_rate: mean(|s| s.satisfaction_rate),
        mean_reward: mean(|s| s.mean_reward),
        p99_delay_ms: mean(|s| s.p99_delay_ms),
        completed_requests: (summaries.iter().map(|s| s.completed_requests).sum::<u64>() as f64 / n)
            as u64,
        events_processed: (summaries.iter().map(|s| s.events_processed).sum::<u64>() as f64 / n)
            as u64,
    }
}

/// Runs every contender at every value of `axis`, fanning the independent
/// (contender, value, seed) runs out in parallel. Cells come back ordered by
/// value, then contender list order.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis) -> Result<Vec<SweepCell>, ConfigError> {
    cfg.validate()?;
    let values = match axis {
        SweepAxis::None => vec![f64::NAN],
        _ => cfg.sweep.values(axis).to_vec(),
    };
    let mut jobs = Vec::new();
    for &value in &values {
        for &contender in &cfg.sweep.contenders {
            let mut c = if axis == SweepAxis::None {
                cfg.clone()
            } else {
                cfg.with_sweep_value(axis, value)
            };
            c.agent = contender.agent;
            c.allocator = contender.allocator;
            c.validate()?;
            for &seed in &cfg.seeds {
                jobs.push((value, contender, c.clone(), seed));
            }
        }
    }
    let finals: Vec<EpisodeSummary> = jobs
        .par_iter()
        .map(|(_, _, c, seed)| {
            run_seed(c, *seed).map(|r| r.episodes.last().cloned().expect("at least one episode"))
        })
        .collect::<Result<_, _>>()?;
    let per_cell = cfg.seeds.len();
    Ok(jobs
        .chunks(per_cell)
        .zip(finals.chunks(per_cell))
        .map(|(job, fin)| SweepCell {
            contender: job[0].1,
            axis,
            value: job[0].0,
            summary: mean_summary(fin),
            per_seed: fin.to_vec(),
        })
        .collect())
}

//! Per-episode aggregation of delay, replica occupancy and satisfaction.

use serde::Serialize;

use crate::domain::Millis;
use crate::environment::DelayRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub avg_delay_ms: f64,
    /// Time-weighted mean of the total replica count.
    pub avg_replicas: f64,
    pub satisfaction_rate: f64,
    /// Mean of the per-action rewards handed to the agent.
    pub mean_reward: f64,
    pub p99_delay_ms: f64,
    pub completed_requests: u64,
    pub events_processed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeAccumulator {
    completed: u64,
    satisfied: u64,
    delay_sum: f64,
    delays: Vec<f64>,
    start: Millis,
    last_sample: Option<(Millis, u32)>,
    replica_area: f64,
    reward_sum: f64,
    rewards: u64,
    events: u64,
}

impl EpisodeAccumulator {
    /// Starts occupancy tracking at `start` with `replicas` deployed.
    pub fn new(start: Millis, replicas: u32) -> Self {
        Self {
            start,
            last_sample: Some((start, replicas)),
            ..Self::default()
        }
    }

    pub fn record_completion(&mut self, record: &DelayRecord) {
        self.completed += 1;
        self.delay_sum += record.total;
        self.delays.push(record.total);
        if record.satisfied {
            self.satisfied += 1;
        }
    }

    /// Closes the interval since the previous sample, weighting the count
    /// held over it by its length, and starts a new interval at `clock`.
    pub fn sample_replicas(&mut self, replicas: u32, clock: Millis) {
        match self.last_sample {
            Some((t, held)) => {
                self.replica_area += f64::from(held) * (clock - t);
            }
            None => self.start = clock,
        }
        self.last_sample = Some((clock, replicas));
    }

    pub fn record_reward(&mut self, reward: f64) {
        self.reward_sum += reward;
        self.rewards += 1;
    }

    pub fn record_event(&mut self) {
        self.events += 1;
    }

    pub fn summarize(&self, episode: usize) -> EpisodeSummary {
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let elapsed = self.last_sample.map_or(0.0, |(t, _)| t - self.start);
        EpisodeSummary {
            episode,
            avg_delay_ms: ratio(self.delay_sum, self.completed as f64),
            avg_replicas: ratio(self.replica_area, elapsed),
            satisfaction_rate: ratio(self.satisfied as f64, self.completed as f64),
            mean_reward: ratio(self.reward_sum, self.rewards as f64),
            p99_delay_ms: percentile(&self.delays, 0.99),
            completed_requests: self.completed,
            events_processed: self.events,
        }
    }
}

/// Nearest-rank percentile; 0 for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

//! Tabular Q-learning over the compact availability/queue state.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{pick_uniform, Policy, StepView};
use crate::domain::ScalingAction;
use crate::environment::{encode_tabular, TabularStateKey};

#[derive(Debug, Error)]
pub enum QTableError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse q-values keyed by state, then action code. Missing entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: HashMap<TabularStateKey, BTreeMap<i32, f64>>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, key: &TabularStateKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &TabularStateKey, action: ScalingAction) -> f64 {
        self.entries
            .get(key)
            .and_then(|row| row.get(&action.code()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, key: &TabularStateKey, action: ScalingAction, value: f64) {
        self.entries
            .entry(key.clone())
            .or_default()
            .insert(action.code(), value);
    }

    pub fn states(&self) -> usize {
        self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest value among `available` (unseen entries count as 0).
    pub fn max_over(&self, key: &TabularStateKey, available: &[ScalingAction]) -> f64 {
        let row = self.entries.get(key);
        available
            .iter()
            .map(|a| row.and_then(|r| r.get(&a.code())).copied().unwrap_or(0.0))
            .fold(None, |best: Option<f64>, v| {
                Some(best.map_or(v, |b| b.max(v)))
            })
            .unwrap_or(0.0)
    }

    /// Highest-valued action of `available`; ties go to the lowest code.
    pub fn greedy(&self, key: &TabularStateKey, available: &[ScalingAction]) -> ScalingAction {
        let mut best = available[0];
        let mut best_q = self.get(key, best);
        for &a in &available[1..] {
            let q = self.get(key, a);
            if q > best_q || (q == best_q && a.code() < best.code()) {
                best = a;
                best_q = q;
            }
        }
        best
    }

    /// Writes `state<TAB>action<TAB>q` rows sorted by state then action.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "state\taction\tq")?;
        let mut keys: Vec<&TabularStateKey> = self.entries.keys().collect();
        keys.sort();
        for key in keys {
            for (code, q) in &self.entries[key] {
                writeln!(out, "{key}\t{code}\t{q}")?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, QTableError> {
        let mut table = QTable::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() || (i == 0 && line.starts_with("state")) {
                continue;
            }
            let err = |reason: &str| QTableError::Parse {
                line: lineno,
                reason: reason.to_string(),
            };
            let mut cols = line.split('\t');
            let (Some(key), Some(code), Some(q), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(err("expected three tab-separated columns"));
            };
            let key: TabularStateKey = key.parse().map_err(|e| err(&format!("{e}")))?;
            let code: i32 = code.parse().map_err(|_| err("bad action code"))?;
            let q: f64 = q.parse().map_err(|_| err("bad q-value"))?;
            let action = ScalingAction::from_code(code, key.departure)
                .ok_or_else(|| err("action code not valid for the event kind"))?;
            table.set(&key, action, q);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSchedule {
    pub epsilon: f64,
    pub decay: f64,
    /// Decay starts once the episode index exceeds this fraction of all episodes.
    pub warmup_fraction: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            decay: 0.98,
            warmup_fraction: 0.1,
        }
    }
}

impl ExplorationSchedule {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.epsilon)
            && self.decay > 0.0
            && self.decay < 1.0
            && self.warmup_fraction >= 0.0
    }
}

/// Applies one episode's decay step; `episode` is 1-based.
pub fn decay_epsilon(schedule: &mut ExplorationSchedule, episode: usize, total_episodes: usize) {
    if episode as f64 > schedule.warmup_fraction * total_episodes as f64 {
        schedule.epsilon = (schedule.epsilon * schedule.decay).clamp(0.0, 1.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            gamma: 0.95,
        }
    }
}

impl LearningParams {
    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0 && self.alpha <= 1.0 && (0.0..1.0).contains(&self.gamma)
    }
}

/// Epsilon-greedy on arrivals (random for unseen states), uniform on departures.
pub fn select_action_rl<R: Rng + ?Sized>(
    table: &QTable,
    key: &TabularStateKey,
    available: &[ScalingAction],
    epsilon: f64,
    rng: &mut R,
) -> ScalingAction {
    assert!(!available.is_empty(), "no available actions");
    if key.departure || !table.contains(key) || rng.gen::<f64>() < epsilon {
        return pick_uniform(available, rng);
    }
    table.greedy(key, available)
}

/// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a'))`. Returns the new value.
pub fn q_update(
    table: &mut QTable,
    key: &TabularStateKey,
    action: ScalingAction,
    reward: f64,
    next_key: &TabularStateKey,
    next_available: &[ScalingAction],
    params: &LearningParams,
) -> f64 {
    let old = table.get(key, action);
    let next_best = table.max_over(next_key, next_available);
    let new = (1.0 - params.alpha) * old + params.alpha * (reward + params.gamma * next_best);
    table.set(key, action, new);
    new
}

/// Observation for the tabular agent: state key plus legal actions.
#[derive(Debug, Clone, PartialEq)]
pub struct RlObs {
    pub key: TabularStateKey,
    pub available: Vec<ScalingAction>,
}

/// One applied q-update, kept when update logging is on.
#[derive(Debug, Clone, PartialEq)]
pub struct QUpdate {
    pub key: TabularStateKey,
    pub action: ScalingAction,
    pub reward: f64,
    pub old: f64,
    pub new: f64,
}

pub struct QLearningAgent {
    table: QTable,
    params: LearningParams,
    schedule: ExplorationSchedule,
    q_max: u16,
    rng: ChaCha8Rng,
    log: Option<Vec<QUpdate>>,
}

impl QLearningAgent {
    pub fn new(
        params: LearningParams,
        schedule: ExplorationSchedule,
        q_max: u16,
        seed: u64,
    ) -> Self {
        Self {
            table: QTable::new(),
            params,
            schedule,
            q_max,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: None,
        }
    }

    pub fn with_table(mut self, table: QTable) -> Self {
        self.table = table;
        self
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.epsilon
    }

    pub fn enable_update_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn update_log(&self) -> &[QUpdate] {
        self.log.as_deref().unwrap_or(&[])
    }
}

impl Policy for QLearningAgent {
    type Obs = RlObs;

    fn observe(&self, view: &StepView<'_>) -> RlObs {
        RlObs {
            key: encode_tabular(view.state, view.topo, view.event, self.q_max),
            available: view.available.to_vec(),
        }
    }

    fn select(&mut self, obs: &RlObs, _view: &StepView<'_>) -> ScalingAction {
        select_action_rl(
            &self.table,
            &obs.key,
            &obs.available,
            self.schedule.epsilon,
            &mut self.rng,
        )
    }

    fn learns(&self) -> bool {
        true
    }

    fn learn(&mut self, obs: &RlObs, action: ScalingAction, reward: f64, next: &RlObs) {
        let old = self.table.get(&obs.key, action);
        let new = q_update(
            &mut self.table,
            &obs.key,
            action,
            reward,
            &next.key,
            &next.available,
            &self.params,
        );
        if let Some(log) = &mut self.log {
            log.push(QUpdate {
                key: obs.key.clone(),
                action,
                reward,
                old,
                new,
            });
        }
    }

    fn begin_episode(&mut self, episode: usize, total_episodes: usize) {
        decay_epsilon(&mut self.schedule, episode, total_episodes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(departure: bool) -> TabularStateKey {
        TabularStateKey {
            availability: vec![true],
            queue_lengths: vec![0],
            departure,
            class: 0,
        }
    }

    const ARRIVAL_ACTIONS: [ScalingAction; 4] = [
        ScalingAction::Enqueue,
        ScalingAction::Deploy(0),
        ScalingAction::Deploy(1),
        ScalingAction::Deploy(2),
    ];

    #[test]
    fn greedy_picks_highest_available() {
        let mut t = QTable::new();
        let k = key(false);
        t.set(&k, ScalingAction::Enqueue, 0.2);
        t.set(&k, ScalingAction::Deploy(2), 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_action_rl(
            &t,
            &k,
            &[ScalingAction::Enqueue, ScalingAction::Deploy(2)],
            0.0,
            &mut rng,
        );
        assert_eq!(a, ScalingAction::Deploy(2));
        assert_eq!(a.code(), 3);
    }

    #[test]
    fn greedy_ties_go_to_lowest_code() {
        let mut t = QTable::new();
        let k = key(false);
        t.set(&k, ScalingAction::Deploy(1), 0.5);
        t.set(&k, ScalingAction::Deploy(2), 0.5);
        assert_eq!(
            t.greedy(&k, &ARRIVAL_ACTIONS[1..]),
            ScalingAction::Deploy(1)
        );
        // unseen entries read as zero, so enqueue (code 0) wins an all-zero row
        assert_eq!(
            QTable::new().greedy(&k, &ARRIVAL_ACTIONS),
            ScalingAction::Enqueue
        );
    }

    #[test]
    fn unseen_state_is_explored_even_at_zero_epsilon() {
        let t = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [false; 4];
        for _ in 0..200 {
            let a = select_action_rl(&t, &key(false), &ARRIVAL_ACTIONS, 0.0, &mut rng);
            seen[a.output_index() - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn q_update_hand_values() {
        let p = LearningParams {
            alpha: 0.01,
            gamma: 0.95,
        };
        let (s, s2) = (key(false), key(true));
        let mut t = QTable::new();
        let v = q_update(
            &mut t,
            &s,
            ScalingAction::Deploy(0),
            1.0,
            &s2,
            &[ScalingAction::Remove],
            &p,
        );
        assert!((v - 0.01).abs() < 1e-15);

        let mut t = QTable::new();
        t.set(&s, ScalingAction::Enqueue, 0.5);
        t.set(&s2, ScalingAction::Keep, 2.0);
        let v = q_update(
            &mut t,
            &s,
            ScalingAction::Enqueue,
            1.0,
            &s2,
            &[ScalingAction::Remove, ScalingAction::Keep],
            &p,
        );
        assert!((v - 0.524).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_is_a_fixed_point() {
        let p = LearningParams {
            alpha: 0.0,
            gamma: 0.95,
        };
        let s = key(false);
        let mut t = QTable::new();
        t.set(&s, ScalingAction::Enqueue, 0.3);
        let v = q_update(
            &mut t,
            &s,
            ScalingAction::Enqueue,
            100.0,
            &s,
            &ARRIVAL_ACTIONS,
            &p,
        );
        assert_eq!(v, 0.3);
    }

    #[test]
    fn max_ignores_unavailable_actions() {
        let s = key(false);
        let mut t = QTable::new();
        t.set(&s, ScalingAction::Deploy(2), 10.0);
        t.set(&s, ScalingAction::Deploy(0), -1.0);
        assert_eq!(t.max_over(&s, &[ScalingAction::Deploy(0)]), -1.0);
        assert_eq!(
            t.max_over(&s, &[ScalingAction::Deploy(0), ScalingAction::Enqueue]),
            0.0
        );
        assert_eq!(t.max_over(&s, &[]), 0.0);
    }

    #[test]
    fn epsilon_warmup_and_decay() {
        let mut s = ExplorationSchedule::default();
        decay_epsilon(&mut s, 5, 100);
        assert_eq!(s.epsilon, 1.0);
        decay_epsilon(&mut s, 10, 100);
        assert_eq!(s.epsilon, 1.0);
        decay_epsilon(&mut s, 11, 100);
        assert_eq!(s.epsilon, 0.98);

        let mut s = ExplorationSchedule::default();
        for ep in 1..=100 {
            decay_epsilon(&mut s, ep, 100);
        }
        assert!((s.epsilon - 0.98f64.powi(90)).abs() < 1e-12);
        assert!((s.epsilon - 0.162).abs() < 1e-3);
    }

    #[test]
    fn tsv_round_trip_and_validation() {
        let mut t = QTable::new();
        t.set(&key(false), ScalingAction::Deploy(2), 0.25);
        t.set(&key(false), ScalingAction::Enqueue, -1.5);
        t.set(&key(true), ScalingAction::Remove, 3.0);
        let mut buf = Vec::new();
        t.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "state\taction\tq\n1|0|0|1\t0\t-1.5\n1|0|0|1\t3\t0.25\n1|0|1|1\t-1\t3\n"
        );
        assert_eq!(QTable::read_tsv(buf.as_slice()).unwrap(), t);

        assert!(QTable::read_tsv("1|0|1|1\t3\t0.5\n".as_bytes()).is_err());
        assert!(QTable::read_tsv("1|0|0|1\t-1\t0.5\n".as_bytes()).is_err());
        assert!(QTable::read_tsv("1|0|0|1\t0\n".as_bytes()).is_err());
    }
}

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use edgescale_core::agents::{ExplorationSchedule, LearningParams, QLearningAgent, QTable};
use edgescale_core::domain::{validate_topology, EdgeNode, FunctionClass, Topology};
use edgescale_core::environment::{EnqueueReward, RewardParams};
use edgescale_core::harness::{run_episode, EpisodeParams, TraceStep};
use edgescale_core::metrics::EpisodeSummary;
use edgescale_core::workload::ScriptedWorkload;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Two nodes (one slot each), one class, scripted arrivals and services.
pub fn toy_topology() -> Topology {
    validate_topology(
        vec![EdgeNode::new(1, 2.0), EdgeNode::new(1, 5.0)],
        vec![FunctionClass::new(1, 5.0, 12.0, 3.0)],
    )
    .unwrap()
}

pub const TOY_ARRIVALS: [f64; 9] = [0.0, 1.0, 2.0, 3.0, 4.5, 8.0, 8.5, 15.0, 16.0];
pub const TOY_SERVICES: [f64; 9] = [6.0, 6.5, 3.0, 4.0, 2.0, 5.0, 1.5, 2.5, 3.5];
pub const TOY_EVENTS: u64 = 20;
pub const TOY_AGENT_SEED: u64 = 11;

pub struct HandTrace {
    pub steps: Vec<TraceStep>,
    pub updates: Vec<edgescale_core::agents::QUpdate>,
    pub summary: EpisodeSummary,
}

pub fn run_hand_trace() -> HandTrace {
    let table = QTable::read_tsv(
        std::fs::read_to_string(fixture("hand_trace_qtable.tsv"))
            .unwrap()
            .as_bytes(),
    )
    .unwrap();
    let greedy = ExplorationSchedule {
        epsilon: 0.0,
        decay: 0.98,
        warmup_fraction: 1.0,
    };
    let mut agent = QLearningAgent::new(
        LearningParams {
            alpha: 0.5,
            gamma: 0.9,
        },
        greedy,
        10,
        TOY_AGENT_SEED,
    )
    .with_table(table);
    agent.enable_update_log();
    let workload = ScriptedWorkload::new(vec![TOY_ARRIVALS.to_vec()], vec![TOY_SERVICES.to_vec()]);
    let params = EpisodeParams {
        events: TOY_EVENTS,
        reward: RewardParams::default(),
        enqueue_reward: EnqueueReward::Deferred,
    };
    let mut steps = Vec::new();
    let summary = run_episode(
        &mut agent,
        toy_topology(),
        workload,
        &params,
        1,
        1,
        Some(&mut steps),
    );
    HandTrace {
        steps,
        updates: agent.update_log().to_vec(),
        summary,
    }
}

/// Line-oriented rendering shared with the golden file.
pub fn render_hand_trace(trace: &HandTrace) -> String {
    let mut out = String::new();
    let mut updates = trace.updates.iter();
    for (i, s) in trace.steps.iter().enumerate() {
        let kind = if s.event.is_departure() { "dep" } else { "arr" };
        write!(
            out,
            "ev {i} t={:.6} {kind} req={} action={}",
            s.event.time,
            s.event.request_id,
            s.action.code()
        )
        .unwrap();
        if let Some((req, node)) = s.dispatched {
            write!(out, " dispatch={req}@{}", node + 1).unwrap();
        }
        if let Some(r) = &s.completed {
            write!(
                out,
                " done={} delay={:.6} sat={}",
                r.request_id,
                r.total,
                u8::from(r.satisfied)
            )
            .unwrap();
        }
        writeln!(
            out,
            " replicas={} queue={}",
            s.total_replicas, s.queue_lengths[0]
        )
        .unwrap();
        for &(decision, reward) in &s.rewards {
            let u = updates.next().expect("one q-update per settled reward");
            writeln!(
                out,
                "  q decision={decision} key={} action={} reward={:.9} old={:.9} new={:.9}",
                u.key,
                u.action.code(),
                reward,
                u.old,
                u.new
            )
            .unwrap();
        }
    }
    let m = &trace.summary;
    writeln!(
        out,
        "summary completed={} avg_delay={:.9} satisfaction={:.9} mean_reward={:.9} avg_replicas={:.9}",
        m.completed_requests, m.avg_delay_ms, m.satisfaction_rate, m.mean_reward, m.avg_replicas
    )
    .unwrap();
    out
}

/// Token-wise comparison: numbers within `tol`, everything else exact.
pub fn compare_traces(actual: &str, expected: &str, tol: f64) -> Result<(), String> {
    let a: Vec<&str> = actual.lines().filter(|l| !l.starts_with('#')).collect();
    let e: Vec<&str> = expected
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .collect();
    if a.len() != e.len() {
        return Err(format!("{} lines, expected {}", a.len(), e.len()));
    }
    for (n, (la, le)) in a.iter().zip(&e).enumerate() {
        let ta: Vec<&str> = la.split_whitespace().collect();
        let te: Vec<&str> = le.split_whitespace().collect();
        let same = ta.len() == te.len()
            && ta.iter().zip(&te).all(|(x, y)| {
                let (kx, vx) = x.split_once('=').unwrap_or(("", x));
                let (ky, vy) = y.split_once('=').unwrap_or(("", y));
                kx == ky
                    && match (vx.parse::<f64>(), vy.parse::<f64>()) {
                        (Ok(p), Ok(q)) => (p - q).abs() <= tol,
                        _ => vx == vy,
                    }
            });
        if !same {
            return Err(format!("line {}:\n  got      {la}\n  expected {le}", n + 1));
        }
    }
    Ok(())
}

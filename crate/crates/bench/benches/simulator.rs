use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgescale_core::agents::{
    DqnAgent, ExplorationSchedule, LearningParams, MonitorAgent, QLearningAgent,
};
use edgescale_core::harness::{run_episode, EpisodeParams, ExperimentConfig};
use edgescale_core::neural::{train_batch, DenseNetwork, Optimizer, OptimizerKind, Transition};
use edgescale_core::workload::PoissonWorkload;
use edgescale_core::{AllocatorKind, Topology};

const EVENTS: u64 = 10_000;

fn setup() -> (ExperimentConfig, Topology, EpisodeParams) {
    let cfg = ExperimentConfig {
        events_per_episode: EVENTS,
        ..Default::default()
    };
    let topo = cfg.topology_for_seed(1).unwrap();
    let params = cfg.episode_params();
    (cfg, topo, params)
}

fn episodes(c: &mut Criterion) {
    let (cfg, topo, params) = setup();
    let mut g = c.benchmark_group("episode");
    g.throughput(Throughput::Elements(EVENTS));
    g.sample_size(20);
    let workload = || PoissonWorkload::new(cfg.classes.clone(), 7);
    g.bench_function("mnt_ff", |b| {
        b.iter(|| {
            let mut agent = MonitorAgent::new(false, AllocatorKind::Ff, cfg.monitor.threshold, 3);
            run_episode(&mut agent, topo.clone(), workload(), &params, 1, 1, None)
        })
    });
    g.bench_function("rl", |b| {
        b.iter(|| {
            let mut agent = QLearningAgent::new(
                LearningParams::default(),
                ExplorationSchedule::default(),
                cfg.q_max,
                3,
            );
            run_episode(&mut agent, topo.clone(), workload(), &params, 1, 1, None)
        })
    });
    g.bench_function("drl_no_training", |b| {
        let mut train = cfg.drl.train;
        train.update_every = usize::MAX;
        b.iter(|| {
            let mut agent = DqnAgent::new(
                &cfg.network_dims(),
                train,
                ExplorationSchedule::default(),
                3,
            );
            run_episode(&mut agent, topo.clone(), workload(), &params, 1, 1, None)
        })
    });
    g.finish();
}

fn training(c: &mut Criterion) {
    let (cfg, _, _) = setup();
    let dims = cfg.network_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = DenseNetwork::init(&dims, &mut rng);
    let batch: Vec<Transition> = (0..cfg.drl.train.batch_size)
        .map(|i| Transition {
            state: (0..dims[0])
                .map(|j| ((i * 31 + j) % 17) as f64 / 17.0)
                .collect(),
            action: i % dims[dims.len() - 1],
            reward: if i % 3 == 0 { -1.0 } else { 0.5 },
            next_state: (0..dims[0])
                .map(|j| ((i * 7 + j) % 13) as f64 / 13.0)
                .collect(),
            next_mask: vec![true; dims[dims.len() - 1]],
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let mut g = c.benchmark_group("train_batch");
    g.throughput(Throughput::Elements(refs.len() as u64));
    g.bench_function("adam_default_batch", |b| {
        b.iter_batched(
            || (net.clone(), Optimizer::new(OptimizerKind::Adam, 1e-3, &net)),
            |(mut n, mut opt)| train_batch(&mut n, &mut opt, &refs, 0.95),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, episodes, training);
criterion_main!(benches);

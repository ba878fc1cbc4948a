//! A small dense ReLU network for q-value estimation, trained in `f64`.
//!
//! Weights are stored row-major per layer (`out_dim` rows of `in_dim`
//! columns). Hidden layers use ReLU, the output layer is linear.
//!
//! # Snapshot format
//!
//! Plain UTF-8 text, whitespace separated, floats in shortest round-trip
//! scientific notation:
//!
//! ```text
//! dense v1
//! dims 61 32 16 12
//! activations relu relu linear
//! <layer 1: out_dim lines of in_dim weights, then one line of out_dim biases>
//! <layer 2: ...>
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("input has length {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layer dimensions do not chain")]
    BrokenChain,
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.in_dim).zip(&self.biases) {
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
            out.push(match self.activation {
                Activation::Relu => z.max(0.0),
                Activation::Linear => z,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Dense>,
}

/// Per-layer parameter gradients, same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

/// Per-layer activations of one forward pass; `activations[0]` is the input.
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

impl DenseNetwork {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NeuralError> {
        if layers.is_empty() || layers.windows(2).any(|w| w[0].out_dim != w[1].in_dim) {
            return Err(NeuralError::BrokenChain);
        }
        for l in &layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(NeuralError::BrokenChain);
            }
        }
        Ok(Self { layers })
    }

    /// All-zero network with ReLU hidden layers and a linear output.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Dense::zeros(
                    w[0],
                    w[1],
                    if i == last {
                        Activation::Linear
                    } else {
                        Activation::Relu
                    },
                )
            })
            .collect();
        Self { layers }
    }

    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for layer in &mut net.layers {
            let limit = init_limit(layer.in_dim);
            let dist = Uniform::new_inclusive(-limit, limit);
            layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        net
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Parameters in gradient-flatten order.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .copied()
            .collect()
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return &mut layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.trace(x)?.activations.pop().expect("output layer"))
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace, NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(activations.last().expect("input"), &mut out);
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    /// Accumulates into `grads` the parameter gradient for output gradient `d_out`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut Gradients) {
        let mut delta = d_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.activations[li + 1];
            if layer.activation == Activation::Relu {
                for (d, &a) in delta.iter_mut().zip(out) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.activations[li];
            let gw = &mut grads.weights[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.biases[li][o] += d;
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn to_snapshot(&self) -> String {
        let mut s = String::from("dense v1\ndims");
        for d in self.dims() {
            let _ = write!(s, " {d}");
        }
        s.push_str("\nactivations");
        for l in &self.layers {
            let _ = write!(s, " {}", l.activation.name());
        }
        s.push('\n');
        let push_row = |s: &mut String, row: &[f64]| {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        };
        for l in &self.layers {
            for row in l.weights.chunks_exact(l.in_dim) {
                push_row(&mut s, row);
            }
            push_row(&mut s, &l.biases);
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self, NeuralError> {
        let bad = |m: &str| NeuralError::Snapshot(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("dense v1") {
            return Err(bad("missing header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims"))
            .ok_or_else(|| bad("missing dims"))?
            .split_whitespace()
            .map(|d| d.parse().map_err(|_| bad("bad dim")))
            .collect::<Result<_, _>>()?;
        let acts: Vec<Activation> = lines
            .next()
            .and_then(|l| l.strip_prefix("activations"))
            .ok_or_else(|| bad("missing activations"))?
            .split_whitespace()
            .map(|a| match a {
                "relu" => Ok(Activation::Relu),
                "linear" => Ok(Activation::Linear),
                _ => Err(bad("unknown activation")),
            })
            .collect::<Result<_, _>>()?;
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(bad("dims and activations disagree"));
        }
        let mut parse_row = |want: usize| -> Result<Vec<f64>, NeuralError> {
            let row: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad number")))
                .collect::<Result<_, _>>()?;
            if row.len() != want {
                return Err(bad("row length"));
            }
            Ok(row)
        };
        let mut layers = Vec::new();
        for (w, &activation) in dims.windows(2).zip(&acts) {
            let mut weights = Vec::with_capacity(w[0] * w[1]);
            for _ in 0..w[1] {
                weights.extend(parse_row(w[0])?);
            }
            let biases = parse_row(w[1])?;
            layers.push(Dense {
                in_dim: w[0],
                out_dim: w[1],
                weights,
                biases,
                activation,
            });
        }
        Self::from_layers(layers)
    }
}

pub fn init_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Full-vector mean squared error and its parameter gradient.
pub fn mse_loss_and_grad(net: &DenseNetwork, x: &[f64], target: &[f64]) -> (f64, Gradients) {
    let trace = net.trace(x).expect("input matches network");
    let out = trace.output();
    let n = out.len() as f64;
    let loss = out
        .iter()
        .zip(target)
        .map(|(q, t)| (q - t).powi(2))
        .sum::<f64>()
        / n;
    let d_out: Vec<f64> = out
        .iter()
        .zip(target)
        .map(|(q, t)| 2.0 * (q - t) / n)
        .collect();
    let mut grads = Gradients::zeros_like(net);
    net.backward(&trace, &d_out, &mut grads);
    (loss, grads)
}

fn mse_loss(net: &DenseNetwork, x: &[f64], target: &[f64]) -> f64 {
    let out = net.forward(x).expect("input matches network");
    out.iter()
        .zip(target)
        .map(|(q, t)| (q - t).powi(2))
        .sum::<f64>()
        / out.len() as f64
}

pub const FINITE_DIFF_STEP: f64 = 1e-5;

/// Largest relative gap between back-propagated and central finite-difference
/// gradients of the MSE loss.
pub fn gradient_check(net: &DenseNetwork, x: &[f64], target: &[f64]) -> f64 {
    gradient_check_with(net, x, target, |n, x, t| mse_loss_and_grad(n, x, t).1)
}

/// [`gradient_check`] against an arbitrary analytic gradient routine.
pub fn gradient_check_with<F>(net: &DenseNetwork, x: &[f64], target: &[f64], analytic: F) -> f64
where
    F: Fn(&DenseNetwork, &[f64], &[f64]) -> Gradients,
{
    let analytic = analytic(net, x, target).flatten();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + FINITE_DIFF_STEP;
        let plus = mse_loss(&probe, x, target);
        *probe.param_mut(i) = orig - FINITE_DIFF_STEP;
        let minus = mse_loss(&probe, x, target);
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * FINITE_DIFF_STEP);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, net: &DenseNetwork) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, net.param_count())),
        }
    }

    pub fn step(&mut self, net: &mut DenseNetwork, grads: &Gradients) {
        let flat = grads.flatten();
        match self {
            Optimizer::Sgd { lr } => {
                for (i, g) in flat.iter().enumerate() {
                    *net.param_mut(i) -= *lr * g;
                }
            }
            Optimizer::Adam(adam) => {
                adam.step += 1;
                let bc1 = 1.0 - adam.beta1.powi(adam.step);
                let bc2 = 1.0 - adam.beta2.powi(adam.step);
                let mut i = 0;
                for layer in net.layers_mut() {
                    for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                        let g = flat[i];
                        adam.m[i] = adam.beta1 * adam.m[i] + (1.0 - adam.beta1) * g;
                        adam.v[i] = adam.beta2 * adam.v[i] + (1.0 - adam.beta2) * g * g;
                        let m_hat = adam.m[i] / bc1;
                        let v_hat = adam.v[i] / bc2;
                        *p -= adam.lr * m_hat / (v_hat.sqrt() + adam.eps);
                        i += 1;
                    }
                }
            }
        }
    }
}

/// One stored experience for replay training.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Index into the network output.
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Output indices legal in the next state.
    pub next_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub update_every: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub replay_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1280,
            update_every: 2500,
            gamma: 0.95,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            replay_capacity: 50_000,
        }
    }
}

impl TrainConfig {
    pub fn is_valid(&self) -> bool {
        self.batch_size >= 1
            && self.batch_size <= self.replay_capacity
            && self.update_every >= 1
            && (0.0..1.0).contains(&self.gamma)
            && self.learning_rate >= 0.0
    }
}

fn masked_max(q: &[f64], mask: &[bool]) -> f64 {
    q.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bootstrapped target `r + gamma * max_legal q(s')` under the current network.
pub fn td_target(net: &DenseNetwork, t: &Transition, gamma: f64) -> f64 {
    let next = net
        .forward(&t.next_state)
        .expect("next state matches network");
    let best = masked_max(&next, &t.next_mask);
    t.reward + gamma * if best.is_finite() { best } else { 0.0 }
}

/// One optimizer step on the squared error of the taken action's q-value.
/// Returns the loss before the step.
pub fn train_batch(
    net: &mut DenseNetwork,
    opt: &mut Optimizer,
    batch: &[&Transition],
    gamma: f64,
) -> f64 {
    assert!(!batch.is_empty(), "empty training batch");
    let n = batch.len() as f64;
    let targets: Vec<f64> = batch.iter().map(|t| td_target(net, t, gamma)).collect();
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    let mut d_out = vec![0.0; net.output_dim()];
    for (t, y) in batch.iter().zip(targets) {
        let trace = net.trace(&t.state).expect("state matches network");
        let diff = trace.output()[t.action] - y;
        loss += diff * diff;
        d_out.iter_mut().for_each(|d| *d = 0.0);
        d_out[t.action] = 2.0 * diff / n;
        net.backward(&trace, &d_out, &mut grads);
    }
    opt.step(net, &grads);
    loss / n
}

/// Bounded FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Uniform sample without replacement, or with replacement when the
    /// memory holds fewer than `batch_size` entries.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<&Transition> {
        let len = self.buffer.len();
        if len == 0 || batch_size == 0 {
            return Vec::new();
        }
        if len >= batch_size {
            index::sample(rng, len, batch_size)
                .into_iter()
                .map(|i| &self.buffer[i])
                .collect()
        } else {
            (0..batch_size)
                .map(|_| &self.buffer[rng.gen_range(0..len)])
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 2-2-1 net with hand-set weights.
    fn toy() -> DenseNetwork {
        DenseNetwork::from_layers(vec![
            Dense {
                in_dim: 2,
                out_dim: 2,
                weights: vec![1.0, 0.0, -1.0, 2.0],
                biases: vec![0.5, 0.0],
                activation: Activation::Relu,
            },
            Dense {
                in_dim: 2,
                out_dim: 1,
                weights: vec![2.0, 3.0],
                biases: vec![-1.0],
                activation: Activation::Linear,
            },
        ])
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DenseNetwork::zeros(&[61, 32, 16, 12]);
        let out = net.forward(&[1.0; 61]).unwrap();
        assert_eq!(out, vec![0.0; 12]);
    }

    #[test]
    fn hand_computed_forward() {
        // hidden = relu([1*1 + 0*0 + .5, -1*1 + 2*0]) = [1.5, 0]; out = 2*1.5 + 0 - 1 = 2
        assert_eq!(toy().forward(&[1.0, 0.0]).unwrap(), vec![2.0]);
        // hidden = relu([.5, 2]) = [.5, 2]; out = 1 + 6 - 1 = 6
        assert_eq!(toy().forward(&[0.0, 1.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        assert_eq!(
            toy().forward(&[1.0]),
            Err(NeuralError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn broken_chain_rejected() {
        let layers = vec![
            Dense::zeros(3, 4, Activation::Relu),
            Dense::zeros(5, 1, Activation::Linear),
        ];
        assert_eq!(
            DenseNetwork::from_layers(layers),
            Err(NeuralError::BrokenChain)
        );
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let dims = [61, 32, 16, 12];
        let a = DenseNetwork::init(&dims, &mut ChaCha8Rng::seed_from_u64(1));
        let b = DenseNetwork::init(&dims, &mut ChaCha8Rng::seed_from_u64(1));
        let c = DenseNetwork::init(&dims, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
        for l in a.layers() {
            let lim = init_limit(l.in_dim);
            assert!(l.weights.iter().all(|w| w.abs() <= lim));
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.output_dim(), 12);
    }

    #[test]
    fn gradient_check_zero_network() {
        let net = DenseNetwork::zeros(&[3, 4, 2]);
        assert_eq!(gradient_check(&net, &[0.0; 3], &[0.0; 2]), 0.0);
    }

    #[test]
    fn gradient_check_random_small_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = DenseNetwork::init(&[6, 4, 3], &mut rng);
        for l in net.layers_mut() {
            l.biases
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(gradient_check(&net, &x, &t) < 1e-4);
    }

    fn transition(state: Vec<f64>, action: usize, reward: f64) -> Transition {
        Transition {
            next_state: state.clone(),
            state,
            action,
            reward,
            next_mask: vec![true],
        }
    }

    #[test]
    fn single_transition_loss_matches_hand_mse() {
        // q(s) = 2 at s=[1,0]; q(s') = 6 at s'=[0,1]; target = 1 + 0.5 * 6 = 4
        let mut net = toy();
        let t = Transition {
            state: vec![1.0, 0.0],
            action: 0,
            reward: 1.0,
            next_state: vec![0.0, 1.0],
            next_mask: vec![true],
        };
        let mut opt = Optimizer::Sgd { lr: 0.0 };
        let loss = train_batch(&mut net, &mut opt, &[&t], 0.5);
        assert!((loss - 4.0).abs() < 1e-12);
        assert_eq!(net, toy());
    }

    #[test]
    fn zero_error_batch_leaves_parameters() {
        // q(s) = 2 for s=[1,0]; reward 2 and gamma 0 makes target == prediction
        let mut net = toy();
        let t = Transition {
            reward: 2.0,
            ..transition(vec![1.0, 0.0], 0, 0.0)
        };
        let mut opt = Optimizer::Sgd { lr: 0.1 };
        assert_eq!(train_batch(&mut net, &mut opt, &[&t], 0.0), 0.0);
        assert_eq!(net, toy());
    }

    #[test]
    fn repeated_training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = DenseNetwork::init(&[4, 8, 3], &mut rng);
        let batch: Vec<Transition> = (0..16)
            .map(|i| Transition {
                state: (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                action: i % 3,
                reward: rng.gen_range(-1.0..1.0),
                next_state: vec![0.0; 4],
                next_mask: vec![true, true, true],
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1e-2, &net);
        let mut last = f64::INFINITY;
        // gamma 0 keeps targets fixed so the objective is stationary
        for _ in 0..100 {
            let loss = train_batch(&mut net, &mut opt, &refs, 0.0);
            assert!(loss <= last + 1e-12, "{loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_a_no_op() {
        let mut net = toy();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3, &net);
        let grads = Gradients::zeros_like(&net);
        opt.step(&mut net, &grads);
        assert_eq!(net, toy());
    }

    #[test]
    fn replay_evicts_oldest() {
        let mut m = ReplayMemory::new(3);
        for i in 0..4 {
            m.push(transition(vec![i as f64], 0, 0.0));
        }
        assert_eq!(m.len(), 3);
        let firsts: Vec<f64> = m.iter().map(|t| t.state[0]).collect();
        assert_eq!(firsts, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let mut m = ReplayMemory::new(10);
        for i in 0..10 {
            m.push(transition(vec![i as f64], 0, 0.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut got: Vec<f64> = m.sample(10, &mut rng).iter().map(|t| t.state[0]).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, (0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(m.sample(25, &mut rng).len(), 25);
    }

    #[test]
    fn snapshot_round_trip() {
        let net = DenseNetwork::init(&[5, 3, 2], &mut ChaCha8Rng::seed_from_u64(4));
        let text = net.to_snapshot();
        assert!(text.starts_with("dense v1\ndims 5 3 2\nactivations relu linear\n"));
        assert_eq!(DenseNetwork::from_snapshot(&text).unwrap(), net);
        assert!(
            DenseNetwork::from_snapshot("dense v1\ndims 2 1\nactivations linear\n1e0\n").is_err()
        );
    }
}

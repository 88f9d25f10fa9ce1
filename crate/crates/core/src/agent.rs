//! Actor-critic hyperparameter agent: observation encoding, the refresh
//! schedule, the two fully connected networks with Adam, the replay
//! buffer, and rollout collection over instance batches.

use crate::es::{run_learning, EsConfig, LearnEnv, LearnOutcome, PolicySource};
use crate::es::Action;
use crate::qsim::{haar_random_state, HeaSpec, QuantumState};
use crate::seed::subseed_rng;
use crate::Result;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Map a success count into [0, 1] on a log scale:
/// log10(1 + count) / log10(1 + c_target).
pub fn encode_observation(count: u64, c_target: u64) -> f64 {
    ((1 + count) as f64).log10() / ((1 + c_target) as f64).log10()
}

/// Action-refresh schedule: the interval shrinks linearly in the episode
/// index from `t_upper` down to `t_lower`, reaching the floor at episode
/// `t_threshold` and staying there.
pub fn ars_schedule(t_lower: u64, t_upper: u64, t_threshold: u64, episode: u64) -> u64 {
    let span = (t_upper - t_lower) as f64;
    let frac = episode as f64 / t_threshold as f64;
    let raw = (t_upper as f64 - frac * span).ceil();
    (raw as i64).max(t_lower as i64) as u64
}

/// Monte-Carlo return of the step-count reward from step `t` of a run
/// that halted at `t_h`, scaled by `t_max`: (t − t_h) / t_max.
pub fn empirical_value(t: u64, t_h: u64, t_max: u64) -> f64 {
    debug_assert!(1 <= t && t <= t_h && t_h <= t_max);
    (t as f64 - t_h as f64) / t_max as f64
}

/// Value regression target for a stored transition. Runs that never
/// halted are scored as if they halted at 2·t_max, strictly worse than
/// any halting run, so truncation is never mistaken for success.
pub fn value_target(tr: &Transition, t_max: u64) -> f64 {
    if tr.halted {
        empirical_value(tr.t, tr.t_h, t_max)
    } else {
        (tr.t as f64 - 2.0 * t_max as f64) / t_max as f64
    }
}

/// One environment step as stored in the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: f64,
    pub action_index: usize,
    pub reward: f64,
    pub next_obs: f64,
    pub done: bool,
    /// Step index within the run, starting at 1.
    pub t: u64,
    /// The run's halting step (the final step when it never halted).
    pub t_h: u64,
    /// Whether the run this transition belongs to halted.
    pub halted: bool,
}

/// The discrete (σ, η) menu the actor chooses from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub sigmas: Vec<f64>,
    pub etas: Vec<f64>,
}

impl ActionGrid {
    /// Four decades per axis: {1, 0.1, 0.01, 0.001}², 16 actions.
    pub fn table1_16() -> Self {
        let decades = vec![1.0, 0.1, 0.01, 0.001];
        Self { sigmas: decades.clone(), etas: decades }
    }

    /// Half-decade steps from 1 down to 1e-6 per axis: 13² = 169 actions.
    pub fn extended_169() -> Self {
        let values: Vec<f64> = (0..13).map(|i| 10f64.powf(-0.5 * i as f64)).collect();
        Self { sigmas: values.clone(), etas: values }
    }

    pub fn len(&self) -> usize {
        self.sigmas.len() * self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major lookup: index = i_sigma · n_eta + i_eta.
    pub fn action(&self, index: usize) -> Action {
        let n_eta = self.etas.len();
        Action {
            sigma: self.sigmas[index / n_eta],
            eta: self.etas[index % n_eta],
            grid_index: index,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Draw an index from a probability vector by inverse transform.
pub fn sample_action_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Fully connected network with ReLU hidden layers, a linear output
/// layer, and built-in Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    /// Per layer, row-major [out × in] flattened.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    adam_t: u64,
}

/// Post-activation values per layer, input included.
pub type Activations = Vec<Vec<f64>>;

/// Parameter gradients matching an [`Mlp`]'s weight and bias shapes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= factor;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= factor;
            }
        }
    }
}

impl Mlp {
    /// Initialize with weights and biases drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "network needs input and output dims");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let fan_in = dims[l];
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> =
                (0..dims[l + 1] * fan_in).map(|_| rng.gen_range(-bound..bound)).collect();
            // A scalar input lives in [0, 1]; pairing each first-layer bias
            // with its weight as b = -u*w spreads the ReLU activation
            // thresholds uniformly over the input range, so every unit
            // responds somewhere in-domain instead of a quarter of them
            // starting (and staying) dead.
            let b: Vec<f64> = if l == 0 && fan_in == 1 {
                w.iter().map(|wi| -rng.gen_range(0.0..1.0) * wi).collect()
            } else {
                (0..dims[l + 1]).map(|_| rng.gen_range(-bound..bound)).collect()
            };
            weights.push(w);
            biases.push(b);
        }
        let m_w = weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let v_w = weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let m_b = biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let v_b = biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Self { dims: dims.to_vec(), weights, biases, m_w, v_w, m_b, v_b, adam_t: 0 }
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Forward pass returning the output and every layer's activations
    /// for a later backward pass.
    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, Activations) {
        assert_eq!(input.len(), self.dims[0]);
        let mut acts: Activations = Vec::with_capacity(self.n_layers() + 1);
        acts.push(input.to_vec());
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            let n_in = self.dims[l];
            let n_out = self.dims[l + 1];
            let w = &self.weights[l];
            let mut y = self.biases[l].clone();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(&x) {
                    acc += wi * xi;
                }
                y[o] += acc;
            }
            if l + 1 < self.n_layers() {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            }
            acts.push(y.clone());
            x = y;
        }
        (x, acts)
    }

    /// Activation buffers shaped for this network, for reuse across
    /// many forward passes.
    pub fn activation_buffer(&self) -> Activations {
        self.dims.iter().map(|d| vec![0.0; *d]).collect()
    }

    /// Forward pass writing every layer's activations into a reusable
    /// buffer from [`Mlp::activation_buffer`]. The output is the last row.
    pub fn forward_into(&self, input: &[f64], acts: &mut Activations) {
        assert_eq!(input.len(), self.dims[0]);
        assert_eq!(acts.len(), self.n_layers() + 1);
        acts[0].copy_from_slice(input);
        for l in 0..self.n_layers() {
            let n_in = self.dims[l];
            let n_out = self.dims[l + 1];
            let w = &self.weights[l];
            let last_hidden = l + 1 < self.n_layers();
            let (lo, hi) = acts.split_at_mut(l + 1);
            let x = &lo[l];
            let y = &mut hi[0];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                let v = self.biases[l][o] + acc;
                y[o] = if last_hidden { v.max(0.0) } else { v };
            }
        }
    }

    /// Backpropagate an output gradient through cached activations,
    /// adding parameter gradients into `grads`. `delta` and `next` are
    /// scratch vectors reused across calls. Matches [`Mlp::backward`]
    /// followed by [`Gradients::accumulate`] exactly.
    pub fn backward_accumulate(
        &self,
        acts: &Activations,
        dout: &[f64],
        grads: &mut Gradients,
        delta: &mut Vec<f64>,
        next: &mut Vec<f64>,
    ) {
        assert_eq!(acts.len(), self.n_layers() + 1);
        assert_eq!(dout.len(), *self.dims.last().unwrap());
        delta.clear();
        delta.extend_from_slice(dout);
        for l in (0..self.n_layers()).rev() {
            let n_in = self.dims[l];
            let n_out = self.dims[l + 1];
            if l + 1 < self.n_layers() {
                for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &acts[l];
            let gw = &mut grads.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.biases[l][o] += d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                next.clear();
                next.resize(n_in, 0.0);
                let w = &self.weights[l];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (nx, wi) in next.iter_mut().zip(row) {
                        *nx += d * wi;
                    }
                }
                std::mem::swap(delta, next);
            }
        }
    }

    /// Backpropagate an output gradient through cached activations.
    pub fn backward(&self, acts: &Activations, dout: &[f64]) -> Gradients {
        assert_eq!(acts.len(), self.n_layers() + 1);
        assert_eq!(dout.len(), *self.dims.last().unwrap());
        let mut grads = Gradients::zeros_like(self);
        let mut delta = dout.to_vec();
        for l in (0..self.n_layers()).rev() {
            let n_in = self.dims[l];
            let n_out = self.dims[l + 1];
            if l + 1 < self.n_layers() {
                // ReLU: the cached post-activation is zero exactly where
                // the unit was clamped.
                for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &acts[l];
            let gw = &mut grads.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.biases[l][o] = d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g = d * xi;
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (n, wi) in next.iter_mut().zip(row) {
                        *n += d * wi;
                    }
                }
                delta = next;
            }
        }
        grads
    }

    /// One Adam descent step (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.adam_t += 1;
        let t = self.adam_t as f64;
        let c1 = 1.0 - B1.powf(t);
        let c2 = 1.0 - B2.powf(t);
        for l in 0..self.n_layers() {
            for (((w, g), m), v) in self.weights[l]
                .iter_mut()
                .zip(&grads.weights[l])
                .zip(self.m_w[l].iter_mut())
                .zip(self.v_w[l].iter_mut())
            {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
            for (((b, g), m), v) in self.biases[l]
                .iter_mut()
                .zip(&grads.biases[l])
                .zip(self.m_b[l].iter_mut())
                .zip(self.v_b[l].iter_mut())
            {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *b -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
        }
    }
}

/// Action probabilities for an encoded observation.
pub fn policy_forward(actor: &Mlp, obs: f64) -> Vec<f64> {
    let (logits, _) = actor.forward(&[obs]);
    softmax(&logits)
}

/// State-value estimate for an encoded observation.
pub fn critic_forward(critic: &Mlp, obs: f64) -> f64 {
    let (out, _) = critic.forward(&[obs]);
    out[0]
}

/// Which way the policy gradient is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageSign {
    /// Ascend (target − value) · ∇ log π.
    #[default]
    Standard,
    /// Ascend (value − target) · ∇ log π.
    Literal,
}

/// Fixed-capacity FIFO store of transitions with uniform sampling.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, tr: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(tr);
    }

    pub fn extend<I: IntoIterator<Item = Transition>>(&mut self, iter: I) {
        for tr in iter {
            self.push(tr);
        }
    }

    /// Uniform sample without replacement; returns the whole buffer when
    /// it holds fewer than `amount` items.
    pub fn sample<R: Rng>(&self, amount: usize, rng: &mut R) -> Vec<Transition> {
        let n = self.items.len().min(amount);
        if n == 0 {
            return Vec::new();
        }
        rand::seq::index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| self.items[i])
            .collect()
    }
}

/// Diagnostics from one actor-critic update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub mean_advantage: f64,
}

/// One joint update from a sampled batch: the critic descends the mean
/// squared error ½(Q − Q̃)², the actor ascends advantage-weighted log
/// probability, both through their own Adam state. Advantages use the
/// critic as it stood before this update.
pub fn actor_critic_update(
    actor: &mut Mlp,
    critic: &mut Mlp,
    batch: &[Transition],
    lr: f64,
    t_max: u64,
    sign: AdvantageSign,
) -> UpdateStats {
    if batch.is_empty() {
        return UpdateStats::default();
    }
    let n = batch.len() as f64;
    let mut actor_grads = Gradients::zeros_like(actor);
    let mut critic_grads = Gradients::zeros_like(critic);
    let mut c_acts = critic.activation_buffer();
    let mut a_acts = actor.activation_buffer();
    let mut delta = Vec::new();
    let mut next = Vec::new();
    let mut dlogits = vec![0.0; *actor.dims.last().unwrap()];
    let mut loss = 0.0;
    let mut adv_sum = 0.0;
    for tr in batch {
        let target = value_target(tr, t_max);
        critic.forward_into(&[tr.obs], &mut c_acts);
        let q = c_acts[critic.n_layers()][0];
        loss += 0.5 * (q - target) * (q - target);
        critic.backward_accumulate(
            &c_acts,
            &[(q - target) / n],
            &mut critic_grads,
            &mut delta,
            &mut next,
        );

        let adv = match sign {
            AdvantageSign::Standard => target - q,
            AdvantageSign::Literal => q - target,
        };
        adv_sum += adv;
        actor.forward_into(&[tr.obs], &mut a_acts);
        let probs = softmax(&a_acts[actor.n_layers()]);
        for (dl, p) in dlogits.iter_mut().zip(&probs) {
            *dl = adv * p / n;
        }
        dlogits[tr.action_index] -= adv / n;
        actor.backward_accumulate(&a_acts, &dlogits, &mut actor_grads, &mut delta, &mut next);
    }
    critic.adam_step(&critic_grads, lr);
    actor.adam_step(&actor_grads, lr);
    UpdateStats { critic_loss: loss / n, mean_advantage: adv_sum / n }
}

/// Run one episode's batch of independent learning instances in
/// parallel, each on a fresh target state, each seeded from the episode
/// seed by instance index. Outcomes come back in instance order.
pub fn collect_rollouts(
    actor: &Mlp,
    grid: &ActionGrid,
    spec: &HeaSpec,
    config: &EsConfig,
    n_instances: usize,
    episode_seed: u64,
    greedy: bool,
) -> Result<Vec<LearnOutcome>> {
    (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = subseed_rng(episode_seed, i as u64, "rollout");
            let target = QuantumState::Pure(haar_random_state(spec.n_qubits, &mut rng));
            let env = LearnEnv::new(&target, spec);
            let policy = PolicySource::Agent { actor, grid, greedy };
            run_learning(&env, &policy, config, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::es::UpdateRule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn observation_encoding_endpoints_and_monotonicity() {
        assert_eq!(encode_observation(0, 10_000), 0.0);
        assert!((encode_observation(10_000, 10_000) - 1.0).abs() < 1e-15);
        let mut last = -1.0;
        for c in [0u64, 1, 5, 50, 500, 5_000, 10_000] {
            let e = encode_observation(c, 10_000);
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn refresh_schedule_exact_values() {
        assert_eq!(ars_schedule(1, 50, 100, 0), 50);
        assert_eq!(ars_schedule(1, 50, 100, 50), 26);
        assert_eq!(ars_schedule(1, 50, 100, 100), 1);
        assert_eq!(ars_schedule(1, 50, 100, 250), 1);
    }

    #[test]
    fn refresh_schedule_is_nonincreasing_and_floored() {
        let mut last = u64::MAX;
        for t in 0..300 {
            let r = ars_schedule(1, 50, 100, t);
            assert!(r <= last);
            assert!(r >= 1);
            last = r;
        }
    }

    #[test]
    fn empirical_value_endpoints() {
        assert_eq!(empirical_value(7, 7, 100), 0.0);
        assert!((empirical_value(1, 100, 100) + 0.99).abs() < 1e-15);
    }

    #[test]
    fn truncated_runs_score_below_every_halting_run() {
        let halted = Transition {
            obs: 0.5,
            action_index: 0,
            reward: -1.0,
            next_obs: 0.5,
            done: false,
            t: 1,
            t_h: 3_000,
            halted: true,
        };
        let truncated = Transition { halted: false, ..halted };
        let worst_halt = value_target(&halted, 3_000);
        let trunc = value_target(&truncated, 3_000);
        assert!(trunc < worst_halt);
        assert!((trunc - (1.0 - 6_000.0) / 3_000.0).abs() < 1e-12);
    }

    #[test]
    fn action_grid_16_layout() {
        let grid = ActionGrid::table1_16();
        assert_eq!(grid.len(), 16);
        let a0 = grid.action(0);
        assert_eq!((a0.sigma, a0.eta), (1.0, 1.0));
        let a5 = grid.action(5);
        assert_eq!((a5.sigma, a5.eta), (0.1, 0.1));
        let a15 = grid.action(15);
        assert_eq!((a15.sigma, a15.eta), (0.001, 0.001));
        for i in 0..16 {
            assert_eq!(grid.action(i).grid_index, i);
        }
    }

    #[test]
    fn action_grid_169_layout() {
        let grid = ActionGrid::extended_169();
        assert_eq!(grid.len(), 169);
        assert_eq!(grid.sigmas.len(), 13);
        assert!((grid.sigmas[1] - 10f64.powf(-0.5)).abs() < 1e-15);
        assert!((grid.action(168).eta - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let p = softmax(&[1_000.0, 1_000.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite() && *x > 0.0));
        assert!((p[0] - p[1]).abs() < 1e-12);
        assert!(p[2] < p[0]);
    }

    #[test]
    fn sampling_respects_degenerate_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_action_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }

    #[test]
    fn sampling_matches_probabilities_roughly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = [0.2, 0.5, 0.3];
        let mut hits = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            hits[sample_action_index(&probs, &mut rng)] += 1;
        }
        for (h, p) in hits.iter().zip(&probs) {
            let freq = *h as f64 / n as f64;
            assert!((freq - p).abs() < 0.01, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn network_shapes_and_param_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = Mlp::new(&[1, 50, 50, 50, 16], &mut rng);
        assert_eq!(
            actor.param_count(),
            (1 * 50 + 50) + (50 * 50 + 50) + (50 * 50 + 50) + (50 * 16 + 16)
        );
        let critic = Mlp::new(&[1, 100, 100, 100, 1], &mut rng);
        assert_eq!(
            critic.param_count(),
            (1 * 100 + 100) + (100 * 100 + 100) + (100 * 100 + 100) + (100 * 1 + 1)
        );
        let (out, acts) = actor.forward(&[0.3]);
        assert_eq!(out.len(), 16);
        assert_eq!(acts.len(), 5);
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[2, 7, 5, 3], &mut rng);
        let input = [0.4, -0.9];
        // Scalar loss: weighted sum of outputs, so dout is the weights.
        let dout = [0.7, -1.3, 0.4];
        let loss = |n: &Mlp| -> f64 {
            let (o, _) = n.forward(&input);
            o.iter().zip(&dout).map(|(a, b)| a * b).sum()
        };
        let (_, acts) = net.forward(&input);
        let grads = net.backward(&acts, &dout);
        let h = 1e-6;
        let mut checked = 0;
        for l in 0..net.n_layers() {
            for idx in 0..net.weights[l].len() {
                let orig = net.weights[l][idx];
                net.weights[l][idx] = orig + h;
                let up = loss(&net);
                net.weights[l][idx] = orig - h;
                let down = loss(&net);
                net.weights[l][idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let bp = grads.weights[l][idx];
                assert!(
                    (fd - bp).abs() <= 1e-4 * (1.0 + fd.abs().max(bp.abs())),
                    "layer {l} weight {idx}: fd {fd} vs bp {bp}"
                );
                checked += 1;
            }
            for idx in 0..net.biases[l].len() {
                let orig = net.biases[l][idx];
                net.biases[l][idx] = orig + h;
                let up = loss(&net);
                net.biases[l][idx] = orig - h;
                let down = loss(&net);
                net.biases[l][idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let bp = grads.biases[l][idx];
                assert!(
                    (fd - bp).abs() <= 1e-4 * (1.0 + fd.abs().max(bp.abs())),
                    "layer {l} bias {idx}: fd {fd} vs bp {bp}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, net.param_count());
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize (w·x − 1)² in a 1-parameter linear net.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::new(&[1, 1], &mut rng);
        let input = [1.0];
        for _ in 0..5_000 {
            let (out, acts) = net.forward(&input);
            let err = out[0] - 1.0;
            let grads = net.backward(&acts, &[2.0 * err]);
            net.adam_step(&grads, 1e-2);
        }
        let (out, _) = net.forward(&input);
        assert!((out[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn replay_buffer_evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for t in 1..=5u64 {
            buf.push(Transition {
                obs: t as f64,
                action_index: 0,
                reward: -1.0,
                next_obs: 0.0,
                done: false,
                t,
                t_h: 10,
                halted: true,
            });
        }
        assert_eq!(buf.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let all = buf.sample(10, &mut rng);
        let mut ts: Vec<u64> = all.iter().map(|tr| tr.t).collect();
        ts.sort();
        assert_eq!(ts, vec![3, 4, 5]);
    }

    #[test]
    fn replay_sampling_is_without_replacement() {
        let mut buf = ReplayBuffer::new(100);
        for t in 1..=100u64 {
            buf.push(Transition {
                obs: t as f64,
                action_index: 0,
                reward: -1.0,
                next_obs: 0.0,
                done: false,
                t,
                t_h: 100,
                halted: true,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = buf.sample(64, &mut rng);
        assert_eq!(batch.len(), 64);
        let mut ts: Vec<u64> = batch.iter().map(|tr| tr.t).collect();
        ts.sort();
        ts.dedup();
        assert_eq!(ts.len(), 64);
    }

    fn constant_batch(obs: f64, action: usize, t_h: u64) -> Vec<Transition> {
        (0..32)
            .map(|_| Transition {
                obs,
                action_index: action,
                reward: -1.0,
                next_obs: obs,
                done: false,
                t: 1,
                t_h,
                halted: true,
            })
            .collect()
    }

    #[test]
    fn scratch_buffer_paths_match_the_allocating_paths_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = Mlp::new(&[1, 9, 7, 4], &mut rng);
        let mut acts_buf = net.activation_buffer();
        let mut delta = Vec::new();
        let mut next = Vec::new();
        for trial in 0..20 {
            let x = [trial as f64 / 20.0 - 0.4];
            let (out, acts) = net.forward(&x);
            net.forward_into(&x, &mut acts_buf);
            assert_eq!(acts, acts_buf);
            assert_eq!(&out, acts_buf.last().unwrap());

            let dout: Vec<f64> = (0..4).map(|i| (trial * 4 + i) as f64 * 0.03 - 0.2).collect();
            let reference = net.backward(&acts, &dout);
            let mut accumulated = Gradients::zeros_like(&net);
            net.backward_accumulate(&acts_buf, &dout, &mut accumulated, &mut delta, &mut next);
            assert_eq!(reference.weights, accumulated.weights);
            assert_eq!(reference.biases, accumulated.biases);
        }
    }

    #[test]
    fn critic_regresses_to_the_empirical_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut actor = Mlp::new(&[1, 16, 16], &mut rng);
        let mut critic = Mlp::new(&[1, 16, 1], &mut rng);
        let batch = constant_batch(0.5, 3, 400);
        let target = value_target(&batch[0], 1_000);
        for _ in 0..4_000 {
            actor_critic_update(
                &mut actor,
                &mut critic,
                &batch,
                1e-3,
                1_000,
                AdvantageSign::Standard,
            );
        }
        let q = critic_forward(&critic, 0.5);
        assert!((q - target).abs() < 0.02, "critic {q} vs target {target}");
    }

    #[test]
    fn actor_shifts_toward_the_advantaged_action() {
        // Action 2 halts fast (t_h = 10), action 5 slow (t_h = 900), seen
        // equally often: the policy at this observation must tilt to 2.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut actor = Mlp::new(&[1, 16, 8], &mut rng);
        let mut critic = Mlp::new(&[1, 16, 1], &mut rng);
        let mut batch = constant_batch(0.3, 2, 10);
        batch.extend(constant_batch(0.3, 5, 900));
        let before = policy_forward(&actor, 0.3);
        for _ in 0..2_000 {
            actor_critic_update(
                &mut actor,
                &mut critic,
                &batch,
                1e-3,
                1_000,
                AdvantageSign::Standard,
            );
        }
        let after = policy_forward(&actor, 0.3);
        assert!(after[2] > before[2]);
        assert!(after[2] > 0.5, "p(fast action) = {}", after[2]);
        assert!(after[5] < before[5]);
    }

    #[test]
    fn rollout_collection_is_deterministic_in_the_episode_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let actor = Mlp::new(&[1, 8, 16], &mut rng);
        let grid = ActionGrid::table1_16();
        let spec = HeaSpec::single_qubit();
        let config = EsConfig {
            k: 5,
            c_target: 100,
            t_max: 200,
            t_rep: 50,
            update_rule: UpdateRule::CenteredStandardized,
        };
        let a = collect_rollouts(&actor, &grid, &spec, &config, 6, 1234, false).unwrap();
        let b = collect_rollouts(&actor, &grid, &spec, &config, 6, 1234, false).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.c_total, y.c_total);
            assert_eq!(x.t_h, y.t_h);
            assert_eq!(x.halted, y.halted);
        }
        let c = collect_rollouts(&actor, &grid, &spec, &config, 6, 99, false).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.c_total != y.c_total));
    }
}

//! Outer meta-learning loop: episode curriculum, rollout collection,
//! replay updates, training-curve metrics, checkpoints, and trained-agent
//! evaluation.

use crate::agent::{
    actor_critic_update, ars_schedule, collect_rollouts, ActionGrid, AdvantageSign, Mlp,
    ReplayBuffer,
};
use crate::es::{EsConfig, LearnOutcome, UpdateRule};
use crate::qsim::HeaSpec;
use crate::seed::{derive_subseed, subseed_rng};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Episodes averaged when scoring a training window.
pub const ROLLING_WINDOW: usize = 10;

/// Parameters of the action-repetition curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArsTriple {
    pub t_lower: u64,
    pub t_upper: u64,
    pub t_threshold: u64,
}

/// Which (σ, η) menu the agent picks from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Table16,
    Extended169,
    /// The shifted four-decade menu used from three qubits up:
    /// σ ∈ {0.1, 0.01, 0.001, 0.0001}, η ∈ {1.0, 0.33, 0.01, 0.033}.
    Deep16,
}

impl GridKind {
    pub fn build(self) -> ActionGrid {
        match self {
            GridKind::Table16 => ActionGrid::table1_16(),
            GridKind::Extended169 => ActionGrid::extended_169(),
            GridKind::Deep16 => ActionGrid {
                sigmas: vec![0.1, 0.01, 0.001, 0.0001],
                etas: vec![1.0, 0.33, 0.01, 0.033],
            },
        }
    }
}

/// Full configuration of one meta-training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_qubits: usize,
    pub layers: usize,
    pub k: usize,
    pub c_target: u64,
    pub t_max: u64,
    pub grid: GridKind,
    pub ars: ArsTriple,
    pub instances_per_episode: usize,
    pub episodes: u64,
    pub seed: u64,
    pub advantage_sign: AdvantageSign,
    pub update_rule: UpdateRule,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub updates_per_episode: usize,
}

impl TrainingConfig {
    /// Single-qubit settings row: U₃ ansatz, k = 5, four-decade grids,
    /// curriculum (1, 50, 100). Instance count and horizon are the
    /// desk-scale defaults.
    pub fn table1_1q(seed: u64) -> Self {
        Self {
            n_qubits: 1,
            layers: 0,
            k: 5,
            c_target: 10_000,
            t_max: 3_000,
            grid: GridKind::Table16,
            ars: ArsTriple { t_lower: 1, t_upper: 50, t_threshold: 100 },
            instances_per_episode: 100,
            episodes: 300,
            seed,
            advantage_sign: AdvantageSign::Standard,
            update_rule: UpdateRule::CenteredStandardized,
            learning_rate: 1e-4,
            replay_capacity: 1_000_000,
            batch_size: 256,
            updates_per_episode: 300,
        }
    }

    /// Two-qubit settings row: one entangling layer, k = 10,
    /// curriculum (80, 800, 100).
    pub fn table1_2q(seed: u64) -> Self {
        Self {
            n_qubits: 2,
            layers: 1,
            k: 10,
            ars: ArsTriple { t_lower: 80, t_upper: 800, t_threshold: 100 },
            t_max: 30_000,
            ..Self::table1_1q(seed)
        }
    }

    /// Three-qubit settings row: five layers, k = 30, shifted grids,
    /// curriculum (300, 2000, 500).
    pub fn table1_3q(seed: u64) -> Self {
        Self {
            n_qubits: 3,
            layers: 5,
            k: 30,
            grid: GridKind::Deep16,
            ars: ArsTriple { t_lower: 300, t_upper: 2_000, t_threshold: 500 },
            t_max: 100_000,
            ..Self::table1_1q(seed)
        }
    }

    pub fn spec(&self) -> Result<HeaSpec> {
        HeaSpec::standard(self.n_qubits, self.layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances_per_episode < 1 {
            return Err(Error::Config("instances_per_episode must be >= 1".into()));
        }
        if self.batch_size < 1 || self.replay_capacity < 1 {
            return Err(Error::Config("batch_size and replay_capacity must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.ars.t_lower < 1 || self.ars.t_upper < self.ars.t_lower {
            return Err(Error::Config("curriculum needs 1 <= t_lower <= t_upper".into()));
        }
        if self.ars.t_threshold < 1 {
            return Err(Error::Config("t_threshold must be >= 1".into()));
        }
        self.spec()?;
        Ok(())
    }

    fn es_config(&self, t_rep: u64) -> EsConfig {
        EsConfig {
            k: self.k,
            c_target: self.c_target,
            t_max: self.t_max,
            t_rep,
            update_rule: self.update_rule,
        }
    }
}

/// Aggregates of one episode's instance batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub t_rep: u64,
    pub mean_c_total: f64,
    pub mean_infidelity: f64,
    pub mean_t_h: f64,
    pub halted_fraction: f64,
}

fn episode_metrics(episode: u64, t_rep: u64, outcomes: &[LearnOutcome]) -> EpisodeMetrics {
    let n = outcomes.len() as f64;
    EpisodeMetrics {
        episode,
        t_rep,
        mean_c_total: outcomes.iter().map(|o| o.c_total as f64).sum::<f64>() / n,
        mean_infidelity: outcomes.iter().map(|o| o.infidelity).sum::<f64>() / n,
        mean_t_h: outcomes.iter().map(|o| o.t_h as f64).sum::<f64>() / n,
        halted_fraction: outcomes.iter().filter(|o| o.halted).count() as f64 / n,
    }
}

/// Trained networks plus enough context to evaluate or resume them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Episodes completed when this snapshot was taken.
    pub episode: u64,
    pub n_qubits: usize,
    pub layers: usize,
    pub grid: GridKind,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("checkpoint parse: {e}")))
    }
}

/// Minimum rolling halt fraction for a window to compete for the best
/// checkpoint. Mean measurement cost is only comparable between policies
/// that actually finish their runs; a policy that rarely halts truncates
/// at the horizon and records misleadingly small counts.
pub const HALT_QUALIFIED: f64 = 0.9;

/// Everything returned by a finished training run.
#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub metrics: Vec<EpisodeMetrics>,
    pub final_checkpoint: Checkpoint,
    /// Snapshot at the end of the best qualified rolling window.
    pub best_checkpoint: Checkpoint,
    /// Mean cost over the best rolling window whose halt fraction is at
    /// least [`HALT_QUALIFIED`]; infinite when no window qualified.
    pub best_rolling_c_total: f64,
    /// Last episode of the best qualified rolling window.
    pub best_episode: u64,
}

const ACTOR_HIDDEN: [usize; 3] = [50, 50, 50];
const CRITIC_HIDDEN: [usize; 3] = [100, 100, 100];

fn fresh_networks(config: &TrainingConfig, n_actions: usize) -> (Mlp, Mlp) {
    let mut rng = subseed_rng(config.seed, 0, "net-init");
    let mut actor_dims = vec![1];
    actor_dims.extend_from_slice(&ACTOR_HIDDEN);
    actor_dims.push(n_actions);
    let actor = Mlp::new(&actor_dims, &mut rng);
    let mut critic_dims = vec![1];
    critic_dims.extend_from_slice(&CRITIC_HIDDEN);
    critic_dims.push(1);
    let critic = Mlp::new(&critic_dims, &mut rng);
    (actor, critic)
}

/// Run the meta-training loop. Each episode draws fresh target states,
/// rolls the current policy over them, pushes every transition into the
/// replay buffer, and applies the configured number of batch updates.
/// `on_episode` receives each episode's metrics and raw outcomes as they
/// complete. Passing a checkpoint resumes after its episode with the
/// stored networks and an empty replay buffer.
pub fn run_training<F>(
    config: &TrainingConfig,
    resume: Option<Checkpoint>,
    mut on_episode: F,
) -> Result<TrainingResult>
where
    F: FnMut(&EpisodeMetrics, &[LearnOutcome]),
{
    config.validate()?;
    let spec = config.spec()?;
    let grid = config.grid.build();
    let start_episode;
    let (mut actor, mut critic) = match resume {
        Some(cp) => {
            if cp.grid != config.grid || cp.n_qubits != config.n_qubits
                || cp.layers != config.layers
            {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint is {}q/{}L/{:?}, config wants {}q/{}L/{:?}",
                    cp.n_qubits, cp.layers, cp.grid, config.n_qubits, config.layers,
                    config.grid
                )));
            }
            start_episode = cp.episode;
            (cp.actor, cp.critic)
        }
        None => {
            start_episode = 0;
            fresh_networks(config, grid.len())
        }
    };
    if *actor.dims.last().unwrap() != grid.len() {
        return Err(Error::CheckpointMismatch(format!(
            "actor outputs {} actions, grid has {}",
            actor.dims.last().unwrap(),
            grid.len()
        )));
    }

    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let mut metrics: Vec<EpisodeMetrics> = Vec::new();
    let mut rolling: Vec<f64> = Vec::new();
    let mut rolling_halt: Vec<f64> = Vec::new();
    let mut best_rolling = f64::INFINITY;
    let mut best_episode = start_episode;
    let mut best_checkpoint = Checkpoint {
        episode: start_episode,
        n_qubits: config.n_qubits,
        layers: config.layers,
        grid: config.grid,
        actor: actor.clone(),
        critic: critic.clone(),
    };

    for episode in start_episode..config.episodes {
        let t_rep =
            ars_schedule(config.ars.t_lower, config.ars.t_upper, config.ars.t_threshold, episode);
        let es_cfg = config.es_config(t_rep);
        let episode_seed = derive_subseed(config.seed, episode, "episode");
        let outcomes = collect_rollouts(
            &actor,
            &grid,
            &spec,
            &es_cfg,
            config.instances_per_episode,
            episode_seed,
            false,
        )?;
        for outcome in &outcomes {
            buffer.extend(outcome.transitions.iter().copied());
        }
        let mut update_rng = subseed_rng(config.seed, episode, "update");
        for _ in 0..config.updates_per_episode {
            let batch = buffer.sample(config.batch_size, &mut update_rng);
            actor_critic_update(
                &mut actor,
                &mut critic,
                &batch,
                config.learning_rate,
                config.t_max,
                config.advantage_sign,
            );
        }

        let m = episode_metrics(episode, t_rep, &outcomes);
        on_episode(&m, &outcomes);
        rolling.push(m.mean_c_total);
        rolling_halt.push(m.halted_fraction);
        if rolling.len() > ROLLING_WINDOW {
            rolling.remove(0);
            rolling_halt.remove(0);
        }
        if rolling.len() == ROLLING_WINDOW {
            let avg = rolling.iter().sum::<f64>() / rolling.len() as f64;
            let avg_halt = rolling_halt.iter().sum::<f64>() / rolling_halt.len() as f64;
            if avg_halt >= HALT_QUALIFIED && avg < best_rolling {
                best_rolling = avg;
                best_episode = episode;
                best_checkpoint = Checkpoint {
                    episode: episode + 1,
                    n_qubits: config.n_qubits,
                    layers: config.layers,
                    grid: config.grid,
                    actor: actor.clone(),
                    critic: critic.clone(),
                };
            }
        }
        metrics.push(m);
    }

    let final_checkpoint = Checkpoint {
        episode: config.episodes.max(start_episode),
        n_qubits: config.n_qubits,
        layers: config.layers,
        grid: config.grid,
        actor,
        critic,
    };
    if metrics.len() < ROLLING_WINDOW {
        best_checkpoint = final_checkpoint.clone();
        best_episode = final_checkpoint.episode;
        best_rolling = metrics
            .iter()
            .map(|m| m.mean_c_total)
            .sum::<f64>()
            / metrics.len().max(1) as f64;
    } else if best_rolling.is_infinite() {
        best_checkpoint = final_checkpoint.clone();
        best_episode = final_checkpoint.episode;
    }
    Ok(TrainingResult {
        metrics,
        final_checkpoint,
        best_checkpoint,
        best_rolling_c_total: best_rolling,
        best_episode,
    })
}

/// Settings for evaluating a trained checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_qubits: usize,
    pub layers: usize,
    pub k: usize,
    pub t_max: u64,
    pub t_rep: u64,
    pub c_targets: Vec<u64>,
    pub n_states: usize,
    pub seed: u64,
    /// Argmax action selection instead of sampling from π.
    pub greedy: bool,
    pub update_rule: UpdateRule,
}

/// One evaluation table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub c_target: u64,
    pub mean_c_total: f64,
    pub mean_infidelity: f64,
    pub mean_t_h: f64,
    pub halted_fraction: f64,
    pub n: usize,
}

/// Evaluate a checkpoint's actor over fresh Haar instances at each
/// requested target count. The ansatz may differ from the training
/// dimensions (cross-dimension generalization); the action grid may not.
pub fn evaluate_agent(
    checkpoint: &Checkpoint,
    config: &EvalConfig,
) -> Result<Vec<(EvalRow, Vec<LearnOutcome>)>> {
    let grid = checkpoint.grid.build();
    if *checkpoint.actor.dims.last().unwrap() != grid.len() {
        return Err(Error::CheckpointMismatch(format!(
            "actor outputs {} actions, grid has {}",
            checkpoint.actor.dims.last().unwrap(),
            grid.len()
        )));
    }
    if config.n_states < 1 || config.c_targets.is_empty() {
        return Err(Error::Config("evaluation needs states and target counts".into()));
    }
    let spec = HeaSpec::standard(config.n_qubits, config.layers)?;
    let mut table = Vec::with_capacity(config.c_targets.len());
    for (row_index, &c_target) in config.c_targets.iter().enumerate() {
        let es_cfg = EsConfig {
            k: config.k,
            c_target,
            t_max: config.t_max,
            t_rep: config.t_rep,
            update_rule: config.update_rule,
        };
        let eval_seed = derive_subseed(config.seed, row_index as u64, "evaluate");
        let outcomes = collect_rollouts(
            &checkpoint.actor,
            &grid,
            &spec,
            &es_cfg,
            config.n_states,
            eval_seed,
            config.greedy,
        )?;
        let n = outcomes.len();
        let row = EvalRow {
            c_target,
            mean_c_total: outcomes.iter().map(|o| o.c_total as f64).sum::<f64>() / n as f64,
            mean_infidelity: outcomes.iter().map(|o| o.infidelity).sum::<f64>() / n as f64,
            mean_t_h: outcomes.iter().map(|o| o.t_h as f64).sum::<f64>() / n as f64,
            halted_fraction: outcomes.iter().filter(|o| o.halted).count() as f64 / n as f64,
            n,
        };
        table.push((row, outcomes));
    }
    Ok(table)
}

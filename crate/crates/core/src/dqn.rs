//! Per-edge deep Q-learning over agnostic states and actions: replay buffer,
//! fixed-target network, masked epsilon-greedy selection, and the slot loop
//! each edge runs between federation rounds.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agnostic::{
    action_from_flat, encode_state, feasible_mask, grid_combo_count, translate_action,
    AgnosticState, PartitionSpec,
};
use crate::env::{env_reset, env_step, EdgeState, TaskSpec};
use crate::error::{Error, Result};
use crate::metrics::InvariantStats;
use crate::nn::{loss_and_gradient, LossItem, PolicyParams};
use crate::rng::{self, domain};
use crate::tasks::EdgeConfig;

/// DQN hyperparameters; identical for every edge of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_interval: u64,
    pub target_update_interval: u64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the total slots over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Cap on the L2 norm of each SGD step's gradient; `inf` disables the cap.
    /// Bounds the transients caused by heavy-tailed rewards without adding
    /// optimizer state.
    #[serde(default = "default_grad_norm")]
    pub max_grad_norm: f64,
}

fn default_grad_norm() -> f64 {
    f64::INFINITY
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden_layers: vec![300, 300, 300],
            learning_rate: 1e-5,
            batch_size: 32,
            train_interval: 50,
            target_update_interval: 100,
            gamma: 0.95,
            replay_capacity: 10_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.4,
            max_grad_norm: f64::INFINITY,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::Config("dqn: hidden layers must be non-empty".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "dqn: gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        if self.batch_size == 0 || self.train_interval == 0 || self.target_update_interval == 0 {
            return Err(Error::Config(
                "dqn: intervals and batch size must be >= 1".into(),
            ));
        }
        if self.replay_capacity == 0 {
            return Err(Error::Config("dqn: replay capacity must be >= 1".into()));
        }
        for eps in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config("dqn: epsilon outside [0, 1]".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return Err(Error::Config(
                "dqn: epsilon decay fraction outside [0, 1]".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("dqn: learning rate must be positive".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("dqn: max_grad_norm must be positive".into()));
        }
        Ok(())
    }

    /// Exploration rate at a global slot: linear decay from start to end over
    /// the first `epsilon_decay_fraction` of the run, then constant.
    pub fn epsilon_at(&self, global_slot: u64, total_slots: u64) -> f64 {
        let decay_slots = (self.epsilon_decay_fraction * total_slots as f64).max(1.0);
        let progress = (global_slot as f64 / decay_slots).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }
}

/// One agnostic experience sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: AgnosticState,
    pub action_index: usize,
    pub reward: f64,
    pub next_state: AgnosticState,
}

/// Bounded FIFO of experiences with a per-round contribution counter.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
    round_count: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            round_count: 0,
        }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
        self.round_count += 1;
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&Experience>> {
        if self.items.is_empty() {
            return Err(Error::Contract(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        Ok((0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Experiences contributed since the last round boundary.
    pub fn round_count(&self) -> u64 {
        self.round_count
    }

    pub fn reset_round_count(&mut self) {
        self.round_count = 0;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }
}

/// Masked epsilon-greedy: explore uniformly over feasible actions with
/// probability `epsilon`, otherwise the feasible argmax (ties to the lowest
/// action index).
pub fn select_action(
    q: &[f64],
    feasible: &[bool],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    debug_assert_eq!(q.len(), feasible.len());
    let feasible_count = feasible.iter().filter(|&&f| f).count();
    if feasible_count == 0 {
        return Err(Error::Contract("action mask has no feasible action".into()));
    }
    if rng.random::<f64>() < epsilon {
        let pick = rng.random_range(0..feasible_count);
        let idx = feasible
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .nth(pick)
            .expect("pick within feasible count");
        return Ok(idx);
    }
    let mut best = None;
    for (i, (&value, &ok)) in q.iter().zip(feasible).enumerate() {
        if !ok {
            continue;
        }
        match best {
            None => best = Some((i, value)),
            Some((_, b)) if value > b => best = Some((i, value)),
            _ => {}
        }
    }
    Ok(best.expect("at least one feasible action").0)
}

/// One stochastic-gradient step on the mean squared TD error.
///
/// Targets bootstrap through the fixed target network over the actions
/// feasible in each sample's next state; returns the updated parameters and
/// the pre-update loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    params: &PolicyParams,
    target_params: &PolicyParams,
    batch: &[&Experience],
    grid_combos: usize,
    gamma: f64,
    learning_rate: f64,
    max_grad_norm: f64,
    slot: u64,
) -> Result<(PolicyParams, f64)> {
    if batch.is_empty() {
        return Err(Error::Contract("train step over an empty batch".into()));
    }
    let items: Vec<LossItem> = batch
        .iter()
        .map(|exp| {
            let next_q = target_params.forward(&exp.next_state.as_input());
            let mut best = f64::NEG_INFINITY;
            for cell in exp.next_state.occupied_cells() {
                for j in 0..grid_combos {
                    best = best.max(next_q[cell * grid_combos + j]);
                }
            }
            debug_assert!(best.is_finite(), "next state must have a feasible action");
            LossItem {
                input: exp.state.as_input(),
                action_index: exp.action_index,
                target: exp.reward + gamma * best,
            }
        })
        .collect();
    let (loss, grad) = loss_and_gradient(params, &items);
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { loss, slot });
    }
    let mut scale = learning_rate;
    if max_grad_norm.is_finite() {
        let norm = grad.l2_norm();
        if norm > max_grad_norm {
            scale *= max_grad_norm / norm;
        }
    }
    let mut updated = params.clone();
    updated.axpy(-scale, &grad);
    Ok((updated, loss))
}

/// Global clock context for a batch of slots.
#[derive(Debug, Clone, Copy)]
pub struct SlotClock {
    /// Global index of the first slot about to run.
    pub global_slot: u64,
    /// Total slots in the whole run (drives the epsilon schedule).
    pub total_slots: u64,
}

/// One edge: its environment, its learner state, and its local policy.
#[derive(Debug, Clone)]
pub struct EdgeLearner {
    pub id: u64,
    pub task_index: usize,
    pub cfg: EdgeConfig,
    pub spec: TaskSpec,
    pub partition: PartitionSpec,
    pub state: EdgeState,
    env_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    /// Local parameters currently trained by the DQN.
    pub params: PolicyParams,
    /// Fixed target network.
    pub target: PolicyParams,
    /// Local parameters at the start of the round (delta reference point).
    pub round_start: PolicyParams,
    pub buffer: ReplayBuffer,
    /// Lifetime slot counter; drives train/target-sync cadence.
    pub slots_run: u64,
    pub stats: InvariantStats,
}

impl EdgeLearner {
    /// Network layer dims for a task: flattened occupancy in, one Q per action out.
    pub fn network_dims(
        partition: &PartitionSpec,
        grids: &[Vec<f64>],
        hidden: &[usize],
    ) -> Vec<usize> {
        let mut dims = vec![partition.cell_count()];
        dims.extend_from_slice(hidden);
        dims.push(partition.cell_count() * grid_combo_count(grids));
        dims
    }

    pub fn new(
        id: u64,
        task_index: usize,
        cfg: EdgeConfig,
        partition: PartitionSpec,
        initial_params: PolicyParams,
        master_seed: u64,
        replay_capacity: usize,
    ) -> Result<Self> {
        let spec = cfg.task_spec();
        let expected = Self::network_dims(&partition, &spec.decision_grids, &[]);
        if initial_params.input_dim() != expected[0]
            || initial_params.output_dim() != expected[expected.len() - 1]
        {
            return Err(Error::Contract(format!(
                "policy shape {:?} does not fit task (input {}, output {})",
                initial_params.dims(),
                expected[0],
                expected[expected.len() - 1]
            )));
        }
        let state = env_reset(&cfg, rng::derive_seed(master_seed, domain::ENV_RESET, id))?;
        Ok(EdgeLearner {
            id,
            task_index,
            cfg,
            spec,
            partition,
            state,
            env_rng: rng::stream(master_seed, domain::ENV_STEP, id),
            policy_rng: rng::stream(master_seed, domain::POLICY, id),
            target: initial_params.clone(),
            round_start: initial_params.clone(),
            params: initial_params,
            buffer: ReplayBuffer::new(replay_capacity),
            slots_run: 0,
            stats: InvariantStats::default(),
        })
    }

    pub fn scenario(&self) -> &str {
        &self.cfg.scenario_id
    }

    /// Replaces the local policy with the broadcast central parameters and
    /// re-anchors the round-start snapshot. Replay experiences are kept.
    pub fn adopt_central(&mut self, central: &PolicyParams) {
        self.params = central.clone();
        self.target = central.clone();
        self.round_start = central.clone();
    }

    /// Snapshots the current parameters as the next round's delta reference.
    pub fn snapshot_round_start(&mut self) {
        self.round_start = self.params.clone();
    }

    /// Runs `slots` environment slots with learning; returns the per-slot raw
    /// rewards. Pausing between calls changes nothing: all state lives here.
    pub fn run_local_slots(
        &mut self,
        slots: u64,
        clock: SlotClock,
        dqn: &DqnConfig,
    ) -> Result<Vec<f64>> {
        let grid_combos = grid_combo_count(&self.spec.decision_grids);
        let mut rewards = Vec::with_capacity(slots as usize);
        let mut agn = encode_state(&self.state, &self.partition)?;
        for i in 0..slots {
            let mask = feasible_mask(&agn, &self.spec.decision_grids);
            let q = self.params.forward(&agn.as_input());
            let epsilon = dqn.epsilon_at(clock.global_slot + i, clock.total_slots);
            let action_index = select_action(&q, &mask, epsilon, &mut self.policy_rng)?;
            if !mask[action_index] {
                self.stats.infeasible_actions += 1;
            }
            let agn_action =
                action_from_flat(action_index, &self.partition, &self.spec.decision_grids);
            let action = translate_action(
                &agn_action,
                &self.state,
                &self.partition,
                &mut self.policy_rng,
            )?;
            let transition = env_step(&self.cfg, &self.state, &action, &mut self.env_rng)?;
            self.stats
                .check_transition(&self.cfg, &transition.next_state, transition.reward);
            let next_agn = encode_state(&transition.next_state, &self.partition)?;
            self.buffer.push(Experience {
                state: agn,
                action_index,
                reward: transition.reward,
                next_state: next_agn.clone(),
            });
            rewards.push(transition.reward);
            self.state = transition.next_state;
            agn = next_agn;
            self.slots_run += 1;

            if self.slots_run.is_multiple_of(dqn.train_interval) {
                let batch = self.buffer.sample(dqn.batch_size, &mut self.policy_rng)?;
                let (updated, _loss) = train_step(
                    &self.params,
                    &self.target,
                    &batch,
                    grid_combos,
                    dqn.gamma,
                    dqn.learning_rate,
                    dqn.max_grad_norm,
                    self.slots_run,
                )?;
                self.params = updated;
            }
            if self.slots_run.is_multiple_of(dqn.target_update_interval) {
                self.target = self.params.clone();
            }
        }
        Ok(rewards)
    }
}

//! Generic dynamic scheduling MDP contract shared by every task.
//!
//! States are value types; stepping never mutates its inputs, so edges can be
//! simulated concurrently as long as each call owns its random stream.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::{EdgeConfig, ScenarioParams, TaskKind};

/// Shape of a task's states and decisions, identical for every edge of the task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task: TaskKind,
    /// Number of state-information entries per device.
    pub state_info_count: usize,
    /// One finite ordered value set per scheduling decision.
    pub decision_grids: Vec<Vec<f64>>,
}

impl TaskSpec {
    pub fn decision_count(&self) -> usize {
        self.decision_grids.len()
    }
}

/// One state-information vector per IoT device.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    per_device: Vec<Vec<f64>>,
}

impl EdgeState {
    pub fn new(per_device: Vec<Vec<f64>>) -> Result<Self> {
        if per_device.is_empty() {
            return Err(Error::Contract(
                "edge state needs at least one device".into(),
            ));
        }
        let width = per_device[0].len();
        if width == 0 {
            return Err(Error::Contract(
                "state information vectors must be non-empty".into(),
            ));
        }
        for row in &per_device {
            if row.len() != width {
                return Err(Error::Contract(
                    "all devices must carry the same state information layout".into(),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("state information must be finite".into()));
            }
        }
        Ok(EdgeState { per_device })
    }

    pub fn device_count(&self) -> usize {
        self.per_device.len()
    }

    pub fn info_count(&self) -> usize {
        self.per_device[0].len()
    }

    pub fn device(&self, m: usize) -> &[f64] {
        &self.per_device[m]
    }

    pub fn devices(&self) -> impl Iterator<Item = &[f64]> {
        self.per_device.iter().map(|row| row.as_slice())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.per_device
    }
}

/// Schedule one device plus task-specific decision values.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAction {
    pub device_index: usize,
    pub decisions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: EdgeState,
    pub reward: f64,
}

/// Deterministic initial state for `(config, seed)`.
pub fn env_reset(cfg: &EdgeConfig, seed: u64) -> Result<EdgeState> {
    cfg.params.validate()?;
    let mut rng = crate::rng::stream(seed, crate::rng::domain::ENV_RESET, 0);
    match &cfg.params {
        ScenarioParams::WirelessPower(p) => crate::tasks::wpt::reset(p, &mut rng),
        ScenarioParams::DataGathering(p) => crate::tasks::gather::reset(p, &mut rng),
        ScenarioParams::RadioScheduling(p) => crate::tasks::radio::reset(p, &mut rng),
    }
}

/// Advances one slot; dispatches to the task dynamics after validating the action.
pub fn env_step(
    cfg: &EdgeConfig,
    state: &EdgeState,
    action: &EdgeAction,
    rng: &mut ChaCha8Rng,
) -> Result<Transition> {
    let spec = cfg.task_spec();
    if state.info_count() != spec.state_info_count {
        return Err(Error::Contract(format!(
            "state carries {} entries per device, task expects {}",
            state.info_count(),
            spec.state_info_count
        )));
    }
    if action.device_index >= state.device_count() {
        return Err(Error::Contract(format!(
            "device index {} out of range for {} devices",
            action.device_index,
            state.device_count()
        )));
    }
    if action.decisions.len() != spec.decision_count() {
        return Err(Error::Contract(format!(
            "action carries {} decisions, task expects {}",
            action.decisions.len(),
            spec.decision_count()
        )));
    }
    for (value, grid) in action.decisions.iter().zip(&spec.decision_grids) {
        if !grid.iter().any(|g| g == value) {
            return Err(Error::Contract(format!(
                "decision value {value} not in its grid"
            )));
        }
    }
    let transition = match &cfg.params {
        ScenarioParams::WirelessPower(p) => crate::tasks::wpt::step(p, state, action, rng)?,
        ScenarioParams::DataGathering(p) => crate::tasks::gather::step(p, state, action, rng)?,
        ScenarioParams::RadioScheduling(p) => crate::tasks::radio::step(p, state, action, rng)?,
    };
    debug_assert!(transition.reward.is_finite());
    Ok(transition)
}

/// Discounted return `sum_t gamma^t r_t` for a finite reward sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!(
            "discount factor {gamma} outside [0, 1)"
        )));
    }
    let mut total = 0.0;
    let mut weight = 1.0;
    for &r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    Ok(total)
}

//! The three concrete dynamic scheduling environments and their scenario catalog.
//!
//! Each task implements the generic MDP surface of [`crate::env`]: a state is
//! one vector of state information per IoT device, an action schedules exactly
//! one device per slot (plus task-specific decisions), and a step returns the
//! next state and the slot reward in task-native units.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::TaskSpec;
use crate::error::{Error, Result};

pub mod gather;
pub mod radio;
pub mod wpt;

pub use gather::GatherParams;
pub use radio::RadioParams;
pub use wpt::WptParams;

/// The three task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Wireless power transfer: keep device batteries out of the low/outage region.
    WirelessPower,
    /// Data gathering: maximize gathered samples minus buffer-overflow drops.
    DataGathering,
    /// Radio resource scheduling: serve data-rate backlogs at low transmit power.
    RadioScheduling,
}

impl TaskKind {
    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::WirelessPower => "wireless-power",
            TaskKind::DataGathering => "data-gathering",
            TaskKind::RadioScheduling => "radio-scheduling",
        }
    }
}

/// Per-task scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioParams {
    WirelessPower(WptParams),
    DataGathering(GatherParams),
    RadioScheduling(RadioParams),
}

impl ScenarioParams {
    pub fn kind(&self) -> TaskKind {
        match self {
            ScenarioParams::WirelessPower(_) => TaskKind::WirelessPower,
            ScenarioParams::DataGathering(_) => TaskKind::DataGathering,
            ScenarioParams::RadioScheduling(_) => TaskKind::RadioScheduling,
        }
    }

    pub fn device_count(&self) -> usize {
        match self {
            ScenarioParams::WirelessPower(p) => p.device_count,
            ScenarioParams::DataGathering(p) => p.mean_capacities.len(),
            ScenarioParams::RadioScheduling(p) => p.distances_m.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioParams::WirelessPower(p) => p.validate(),
            ScenarioParams::DataGathering(p) => p.validate(),
            ScenarioParams::RadioScheduling(p) => p.validate(),
        }
    }
}

/// A concrete edge instance: one task, one scenario's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConfig {
    pub scenario_id: String,
    pub params: ScenarioParams,
}

impl EdgeConfig {
    pub fn kind(&self) -> TaskKind {
        self.params.kind()
    }

    pub fn device_count(&self) -> usize {
        self.params.device_count()
    }

    /// State/decision layout shared by every edge of the task.
    pub fn task_spec(&self) -> TaskSpec {
        match &self.params {
            ScenarioParams::WirelessPower(_) => TaskSpec {
                task: TaskKind::WirelessPower,
                state_info_count: wpt::STATE_INFO_COUNT,
                decision_grids: Vec::new(),
            },
            ScenarioParams::DataGathering(_) => TaskSpec {
                task: TaskKind::DataGathering,
                state_info_count: gather::STATE_INFO_COUNT,
                decision_grids: Vec::new(),
            },
            ScenarioParams::RadioScheduling(p) => TaskSpec {
                task: TaskKind::RadioScheduling,
                state_info_count: radio::STATE_INFO_COUNT,
                decision_grids: vec![p.power_grid_w.clone()],
            },
        }
    }
}

/// Built-in scenario ids.
pub const BUILTIN_SCENARIOS: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Returns the built-in scenario `scenario_id` of `kind`.
///
/// The catalog covers scenarios A through E for each task; unseen scenarios
/// can be added through the experiment config file.
pub fn load_scenario(kind: TaskKind, scenario_id: &str) -> Result<EdgeConfig> {
    let params = match kind {
        TaskKind::WirelessPower => {
            let (device_count, initial_battery_mj) = match scenario_id {
                "A" => (7, 20.0),
                "B" => (8, 30.0),
                "C" => (9, 40.0),
                "D" => (8, 30.0),
                "E" => (8, 40.0),
                other => return Err(unknown_scenario(kind, other)),
            };
            ScenarioParams::WirelessPower(WptParams {
                device_count,
                initial_battery_mj,
                ..WptParams::default()
            })
        }
        TaskKind::DataGathering => {
            // (devices at mean capacity 30, at 50, at 70), arrival rate per device.
            let (g30, g50, g70, arrival_rate) = match scenario_id {
                "A" => (1, 2, 1, 15.0),
                "B" => (3, 2, 2, 10.0),
                "C" => (3, 4, 3, 5.0),
                "D" => (2, 2, 2, 10.0),
                "E" => (3, 3, 3, 5.0),
                other => return Err(unknown_scenario(kind, other)),
            };
            let mut mean_capacities = Vec::new();
            mean_capacities.extend(std::iter::repeat_n(30.0, g30));
            mean_capacities.extend(std::iter::repeat_n(50.0, g50));
            mean_capacities.extend(std::iter::repeat_n(70.0, g70));
            ScenarioParams::DataGathering(GatherParams {
                mean_capacities,
                arrival_rate,
                ..GatherParams::default()
            })
        }
        TaskKind::RadioScheduling => {
            // (devices at 20 m, at 50 m, at 80 m), rate requirement in Mbps.
            let (d20, d50, d80, rate_requirement_mbps) = match scenario_id {
                "A" => (1, 2, 1, 1.0),
                "B" => (3, 3, 3, 0.5),
                "C" => (5, 10, 5, 0.2),
                "D" => (2, 2, 2, 0.4),
                "E" => (4, 4, 4, 0.3),
                other => return Err(unknown_scenario(kind, other)),
            };
            let mut distances_m = Vec::new();
            distances_m.extend(std::iter::repeat_n(20.0, d20));
            distances_m.extend(std::iter::repeat_n(50.0, d50));
            distances_m.extend(std::iter::repeat_n(80.0, d80));
            ScenarioParams::RadioScheduling(RadioParams {
                distances_m,
                rate_requirement_mbps,
                ..RadioParams::default()
            })
        }
    };
    let cfg = EdgeConfig {
        scenario_id: scenario_id.to_string(),
        params,
    };
    cfg.params.validate()?;
    Ok(cfg)
}

fn unknown_scenario(kind: TaskKind, id: &str) -> Error {
    Error::Config(format!("unknown scenario '{id}' for task {}", kind.label()))
}

/// Two-state activity chain with flip probability 0.5 in both directions.
pub fn sample_active(prev: bool, rng: &mut ChaCha8Rng) -> bool {
    if rng.random_bool(0.5) {
        !prev
    } else {
        prev
    }
}

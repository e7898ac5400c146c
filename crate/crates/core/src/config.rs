//! Experiment configuration: TOML file format, presets, and validation.
//!
//! The config file mirrors [`ExperimentConfig`] exactly; unknown keys are
//! rejected. Custom scenarios defined in the file extend the built-in catalog
//! so unseen setups can arrive mid-run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agnostic::PartitionSpec;
use crate::dqn::DqnConfig;
use crate::error::{Error, Result};
use crate::selection::{CloudCapacity, SelectionPolicy, TaskDemand, UtilityKind};
use crate::tasks::{load_scenario, EdgeConfig, ScenarioParams, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeGroup {
    pub scenario: String,
    pub count: usize,
}

/// A scheduled arrival of new edges at a given global slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalEvent {
    pub slot: u64,
    pub task: String,
    pub scenario: String,
    pub count: usize,
}

/// A catalog entry for a scenario not covered by the built-in table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub id: String,
    pub params: ScenarioParams,
}

/// One task in the experiment: selection parameters plus its edge population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub kind: TaskKind,
    /// Per-round probability that an edge of this task can participate.
    pub arrival_rate: f64,
    /// Per-participant cloud resource demand.
    pub demand: TaskDemand,
    /// Required minimum average participants (X_l).
    pub min_participants: f64,
    #[serde(default = "default_weight")]
    pub utility_weight: f64,
    /// Frozen reward-normalization bounds (from a calibration run).
    pub normalize_lo: f64,
    pub normalize_hi: f64,
    /// Partition override; defaults to the task's built-in partition.
    #[serde(default)]
    pub partitions: Option<PartitionSpec>,
    pub edges: Vec<EdgeGroup>,
}

fn default_weight() -> f64 {
    1.0
}

impl TaskEntry {
    pub fn base_edge_count(&self) -> usize {
        self.edges.iter().map(|g| g.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub rounds: u64,
    pub slots_per_round: u64,
    pub policy: SelectionPolicy,
    /// Where the CSV outputs go; in-memory only when absent.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for the per-round edge loop: 1 = single-threaded,
    /// 0 = one per core. Results are identical either way.
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Append a central-parameter checksum column to participants.csv.
    #[serde(default)]
    pub log_central_checksums: bool,
    /// Dump the final central parameters as text snapshots next to the CSVs.
    #[serde(default)]
    pub dump_params: bool,
    /// Subgradient step size of the selection controller.
    pub step_size: f64,
    #[serde(default = "default_utility")]
    pub utility: UtilityKind,
    pub cloud: CloudCapacity,
    pub dqn: DqnConfig,
    #[serde(default)]
    pub scenarios: Vec<CustomScenario>,
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub arrivals: Vec<ArrivalEvent>,
}

fn default_threads() -> usize {
    1
}

fn default_utility() -> UtilityKind {
    UtilityKind::Logarithmic
}

impl ExperimentConfig {
    pub fn total_slots(&self) -> u64 {
        self.rounds * self.slots_per_round
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    /// Scenario lookup: custom catalog entries shadow the built-in table.
    pub fn resolve_scenario(&self, kind: TaskKind, id: &str) -> Result<EdgeConfig> {
        for custom in &self.scenarios {
            if custom.id == id && custom.params.kind() == kind {
                let cfg = EdgeConfig {
                    scenario_id: id.to_string(),
                    params: custom.params.clone(),
                };
                cfg.params.validate()?;
                return Ok(cfg);
            }
        }
        load_scenario(kind, id)
    }

    /// The partition used by every edge of task `index`.
    pub fn partition_for(&self, index: usize) -> PartitionSpec {
        let task = &self.tasks[index];
        task.partitions
            .clone()
            .unwrap_or_else(|| PartitionSpec::default_for(task.kind))
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots_per_round == 0 {
            return Err(Error::Config("slots_per_round must be >= 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        self.cloud.validate()?;
        self.dqn.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::Config("at least one task is required".into()));
        }
        for custom in &self.scenarios {
            if custom.id.is_empty() {
                return Err(Error::Config(
                    "custom scenario ids must be non-empty".into(),
                ));
            }
            custom.params.validate()?;
        }
        let mut names = std::collections::HashSet::new();
        for (index, task) in self.tasks.iter().enumerate() {
            if task.name.is_empty() || task.name.contains(',') {
                return Err(Error::Config(format!("invalid task name '{}'", task.name)));
            }
            if !names.insert(task.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate task name '{}'",
                    task.name
                )));
            }
            if !(0.0..=1.0).contains(&task.arrival_rate) {
                return Err(Error::Config(format!(
                    "task '{}': arrival rate outside [0, 1]",
                    task.name
                )));
            }
            task.demand.validate()?;
            if task.min_participants < 0.0 || task.utility_weight < 0.0 {
                return Err(Error::Config(format!(
                    "task '{}': negative min_participants or utility weight",
                    task.name
                )));
            }
            if !(task.normalize_hi > task.normalize_lo) {
                return Err(Error::Config(format!(
                    "task '{}': normalization bounds require hi > lo",
                    task.name
                )));
            }
            let partition = self.partition_for(index);
            partition.validate()?;
            for group in &task.edges {
                let cfg = self.resolve_scenario(task.kind, &group.scenario)?;
                if partition.dims.len() != cfg.task_spec().state_info_count {
                    return Err(Error::Config(format!(
                        "task '{}': partition covers {} dimensions, task has {}",
                        task.name,
                        partition.dims.len(),
                        cfg.task_spec().state_info_count
                    )));
                }
            }
        }
        for event in &self.arrivals {
            let Some(index) = self.task_index(&event.task) else {
                return Err(Error::Config(format!(
                    "arrival references unknown task '{}'",
                    event.task
                )));
            };
            self.resolve_scenario(self.tasks[index].kind, &event.scenario)?;
            if event.count == 0 {
                return Err(Error::Config(
                    "arrival events must add at least one edge".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Desk-scale preset: 3 tasks x 9 edges, 80 rounds x 100 slots, small
    /// networks; the full acceptance suite runs in minutes.
    pub fn desk_preset() -> Self {
        let edges = vec![
            EdgeGroup {
                scenario: "A".into(),
                count: 3,
            },
            EdgeGroup {
                scenario: "B".into(),
                count: 3,
            },
            EdgeGroup {
                scenario: "C".into(),
                count: 3,
            },
        ];
        ExperimentConfig {
            master_seed: 7,
            rounds: 80,
            slots_per_round: 100,
            policy: SelectionPolicy::FlPf,
            out_dir: None,
            threads: 0,
            log_central_checksums: false,
            dump_params: false,
            step_size: 0.05,
            utility: UtilityKind::Logarithmic,
            // 60% of the 27 unit per-edge demands.
            cloud: CloudCapacity {
                bandwidth: 16.2,
                memory: 16.2,
                compute: 16.2,
            },
            dqn: DqnConfig {
                hidden_layers: vec![64, 64],
                learning_rate: 4e-4,
                batch_size: 4,
                train_interval: 8,
                target_update_interval: 100,
                gamma: 0.8,
                replay_capacity: 10_000,
                epsilon_start: 1.0,
                epsilon_end: 0.05,
                epsilon_decay_fraction: 0.4,
                max_grad_norm: 50.0,
            },
            scenarios: Vec::new(),
            tasks: vec![
                TaskEntry {
                    name: "A".into(),
                    kind: TaskKind::WirelessPower,
                    arrival_rate: 1.0,
                    demand: TaskDemand::unit(),
                    min_participants: 2.0,
                    utility_weight: 1.0,
                    normalize_lo: NORMALIZE_BOUNDS[0].0,
                    normalize_hi: NORMALIZE_BOUNDS[0].1,
                    partitions: None,
                    edges: edges.clone(),
                },
                TaskEntry {
                    name: "B".into(),
                    kind: TaskKind::DataGathering,
                    arrival_rate: 1.0,
                    demand: TaskDemand::unit(),
                    min_participants: 2.0,
                    utility_weight: 1.0,
                    normalize_lo: NORMALIZE_BOUNDS[1].0,
                    normalize_hi: NORMALIZE_BOUNDS[1].1,
                    partitions: None,
                    edges: edges.clone(),
                },
                TaskEntry {
                    name: "C".into(),
                    kind: TaskKind::RadioScheduling,
                    arrival_rate: 1.0,
                    demand: TaskDemand::unit(),
                    min_participants: 2.0,
                    utility_weight: 1.0,
                    normalize_lo: NORMALIZE_BOUNDS[2].0,
                    normalize_hi: NORMALIZE_BOUNDS[2].1,
                    partitions: None,
                    edges,
                },
            ],
            arrivals: Vec::new(),
        }
    }

    /// Full-scale preset: 20 edges per task, 200 rounds x 250 slots, three
    /// 300-unit hidden layers.
    pub fn paper_preset() -> Self {
        let edges = vec![
            EdgeGroup {
                scenario: "A".into(),
                count: 7,
            },
            EdgeGroup {
                scenario: "B".into(),
                count: 7,
            },
            EdgeGroup {
                scenario: "C".into(),
                count: 6,
            },
        ];
        let mut cfg = Self::desk_preset();
        cfg.rounds = 200;
        cfg.slots_per_round = 250;
        cfg.cloud = CloudCapacity {
            bandwidth: 21.0,
            memory: 21.0,
            compute: 21.0,
        };
        cfg.dqn = DqnConfig::default();
        let rates = [0.7, 0.4, 0.4];
        for ((task, min_participants), rate) in cfg.tasks.iter_mut().zip([5.0, 5.0, 5.0]).zip(rates)
        {
            task.min_participants = min_participants;
            task.arrival_rate = rate;
            task.edges = edges.clone();
        }
        cfg
    }
}

/// Reward-normalization bounds per preset task, frozen from the calibration
/// run in `orchestrator::calibrate_normalization` (seed 7, 2000 slots per
/// scenario over scenarios A-E).
pub const NORMALIZE_BOUNDS: [(f64, f64); 3] =
    [(-43.0, 0.0), (-53.0, 75.0), (-10.0, 770.8474726276328)];

//! Python bindings for the fedsched simulator.
//!
//! Exposes the per-task environments, the agnostic encoding, the exact
//! knapsack selector, and full simulation runs. Build with
//! `cargo build -p fedsched-py --release` and import the produced cdylib as
//! `fedsched_py` (see `python/smoke_test.py`).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fedsched::agnostic::{encode_state, PartitionSpec};
use fedsched::config::ExperimentConfig;
use fedsched::env::{env_reset, env_step, EdgeAction, EdgeState, TaskSpec};
use fedsched::orchestrator::{run_simulation_with_options, RunOptions};
use fedsched::selection::{solve_mdkp as mdkp, CloudCapacity, SelectionPolicy};
use fedsched::tasks::{EdgeConfig, TaskKind};

fn to_py_err(err: fedsched::Error) -> PyErr {
    match &err {
        fedsched::Error::Io(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_task_kind(name: &str) -> PyResult<TaskKind> {
    match name {
        "wireless-power" | "A" | "a" => Ok(TaskKind::WirelessPower),
        "data-gathering" | "B" | "b" => Ok(TaskKind::DataGathering),
        "radio-scheduling" | "C" | "c" => Ok(TaskKind::RadioScheduling),
        other => Err(PyValueError::new_err(format!(
            "unknown task '{other}' (expected wireless-power, data-gathering, or radio-scheduling)"
        ))),
    }
}

fn parse_policy(name: &str) -> PyResult<SelectionPolicy> {
    match name {
        "fl-pf" => Ok(SelectionPolicy::FlPf),
        "fl-greedy" => Ok(SelectionPolicy::FlGreedy),
        "fl-rr" => Ok(SelectionPolicy::FlRr),
        "bench" => Ok(SelectionPolicy::Bench),
        "no-fl" => Ok(SelectionPolicy::NoFl),
        other => Err(PyValueError::new_err(format!("unknown policy '{other}'"))),
    }
}

/// One scheduling environment: a task, a scenario, and a seeded random stream.
#[pyclass]
struct EdgeEnv {
    cfg: EdgeConfig,
    spec: TaskSpec,
    partition: PartitionSpec,
    state: EdgeState,
    rng: rand_chacha::ChaCha8Rng,
    seed: u64,
}

#[pymethods]
impl EdgeEnv {
    #[new]
    fn new(task: &str, scenario: &str, seed: u64) -> PyResult<Self> {
        let kind = parse_task_kind(task)?;
        let cfg = fedsched::tasks::load_scenario(kind, scenario).map_err(to_py_err)?;
        let spec = cfg.task_spec();
        let partition = PartitionSpec::default_for(kind);
        let state = env_reset(&cfg, seed).map_err(to_py_err)?;
        let rng = fedsched::rng::stream(seed, fedsched::rng::domain::ENV_STEP, 0);
        Ok(EdgeEnv {
            cfg,
            spec,
            partition,
            state,
            rng,
            seed,
        })
    }

    /// Resets to the scenario's initial state; same seed, same state.
    fn reset(&mut self) -> PyResult<Vec<Vec<f64>>> {
        self.state = env_reset(&self.cfg, self.seed).map_err(to_py_err)?;
        self.rng = fedsched::rng::stream(self.seed, fedsched::rng::domain::ENV_STEP, 0);
        Ok(self.state.rows().to_vec())
    }

    /// Advances one slot; returns `(next_state, reward)`.
    #[pyo3(signature = (device_index, decisions=None))]
    fn step(
        &mut self,
        device_index: usize,
        decisions: Option<Vec<f64>>,
    ) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let action = EdgeAction {
            device_index,
            decisions: decisions.unwrap_or_default(),
        };
        let transition =
            env_step(&self.cfg, &self.state, &action, &mut self.rng).map_err(to_py_err)?;
        self.state = transition.next_state;
        Ok((self.state.rows().to_vec(), transition.reward))
    }

    /// Current per-device state information.
    fn state(&self) -> Vec<Vec<f64>> {
        self.state.rows().to_vec()
    }

    /// Agnostic encoding of the current state: `(dim_sizes, flat 0/1 occupancy)`.
    fn encode(&self) -> PyResult<(Vec<usize>, Vec<u8>)> {
        let agn = encode_state(&self.state, &self.partition).map_err(to_py_err)?;
        let occupancy = agn.as_input().iter().map(|&v| v as u8).collect();
        Ok((agn.dim_sizes().to_vec(), occupancy))
    }

    #[getter]
    fn device_count(&self) -> usize {
        self.state.device_count()
    }

    #[getter]
    fn decision_grids(&self) -> Vec<Vec<f64>> {
        self.spec.decision_grids.clone()
    }

    #[getter]
    fn scenario(&self) -> String {
        self.cfg.scenario_id.clone()
    }
}

/// Exact multidimensional knapsack over tasks: maximizes the value sum of the
/// selected tasks subject to three per-dimension capacities.
#[pyfunction]
fn solve_mdkp(
    values: Vec<f64>,
    demands: Vec<(f64, f64, f64)>,
    caps: (f64, f64, f64),
) -> PyResult<Vec<bool>> {
    if values.len() != demands.len() {
        return Err(PyValueError::new_err("values and demands must align"));
    }
    let demands: Vec<[f64; 3]> = demands.iter().map(|&(b, o, c)| [b, o, c]).collect();
    let caps = CloudCapacity {
        bandwidth: caps.0,
        memory: caps.1,
        compute: caps.2,
    };
    Ok(mdkp(&values, &demands, &caps))
}

#[pyfunction]
fn discounted_return(rewards: Vec<f64>, gamma: f64) -> PyResult<f64> {
    fedsched::env::discounted_return(&rewards, gamma).map_err(to_py_err)
}

#[pyfunction]
fn moving_average(series: Vec<f64>, window: usize) -> PyResult<Vec<f64>> {
    fedsched::metrics::moving_average(&series, window).map_err(to_py_err)
}

/// The desk-scale experiment config as TOML.
#[pyfunction]
fn desk_config_toml() -> String {
    ExperimentConfig::desk_preset().to_toml_string()
}

/// The full-scale experiment config as TOML.
#[pyfunction]
fn paper_config_toml() -> String {
    ExperimentConfig::paper_preset().to_toml_string()
}

/// Runs a full simulation from a TOML config string.
///
/// Returns a dict with per-task summary rows and invariant counters; writes
/// the CSV outputs when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir=None, seed=None, policy=None, rounds=None))]
fn run_simulation(
    py: Python<'_>,
    config_toml: &str,
    out_dir: Option<String>,
    seed: Option<u64>,
    policy: Option<String>,
    rounds: Option<u64>,
) -> PyResult<Py<PyDict>> {
    let mut cfg = ExperimentConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(policy) = policy {
        cfg.policy = parse_policy(&policy)?;
    }
    if let Some(rounds) = rounds {
        cfg.rounds = rounds;
    }
    if let Some(dir) = out_dir {
        cfg.out_dir = Some(dir.into());
    }
    cfg.validate().map_err(to_py_err)?;
    let log = py
        .detach(|| run_simulation_with_options(&cfg, &RunOptions::default()))
        .map_err(to_py_err)?;

    let out = PyDict::new(py);
    let summary: Vec<Py<PyDict>> = log
        .summary
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("policy", &row.policy)?;
            d.set_item("task", &row.task)?;
            d.set_item("avg_participants", row.avg_participants)?;
            d.set_item("avg_normalized_reward", row.avg_normalized_reward)?;
            d.set_item("learning_speed", row.learning_speed)?;
            Ok(d.unbind())
        })
        .collect::<PyResult<_>>()?;
    out.set_item("summary", summary)?;
    out.set_item("rounds", cfg.rounds)?;
    out.set_item("transitions", log.invariants.env.transitions)?;
    out.set_item("invariant_violations", log.invariants.violations())?;
    out.set_item("round_sum_reward", log.round_sum_reward())?;
    Ok(out.unbind())
}

#[pymodule]
fn fedsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EdgeEnv>()?;
    m.add_function(wrap_pyfunction!(solve_mdkp, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_return, m)?)?;
    m.add_function(wrap_pyfunction!(moving_average, m)?)?;
    m.add_function(wrap_pyfunction!(desk_config_toml, m)?)?;
    m.add_function(wrap_pyfunction!(paper_config_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    Ok(())
}

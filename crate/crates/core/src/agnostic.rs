//! Edge-agnostic state/action encoding.
//!
//! Device conditions are bucketed into a per-task partition of the state
//! information space. The agnostic state is the binary occupancy tensor over
//! condition cells, independent of how many devices an edge has; the agnostic
//! action names a condition cell (plus decision values) and is translated back
//! to a concrete device at execution time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EdgeAction, EdgeState};
use crate::error::{Error, Result};
use crate::tasks::TaskKind;

/// Partition of one state-information dimension into half-open intervals.
///
/// `boundaries` are the interior cut points; the covered range is `[lo, hi]`
/// with every interval `[a, b)` except the last, which is closed above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionPartition {
    pub lo: f64,
    pub hi: f64,
    pub boundaries: Vec<f64>,
}

impl DimensionPartition {
    pub fn new(lo: f64, hi: f64, boundaries: Vec<f64>) -> Result<Self> {
        let dim = DimensionPartition { lo, hi, boundaries };
        dim.validate()?;
        Ok(dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(Error::Config(format!(
                "partition range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        let mut prev = self.lo;
        for &b in &self.boundaries {
            if !(b > prev) {
                return Err(Error::Config(
                    "partition boundaries must be strictly increasing inside the range".into(),
                ));
            }
            prev = b;
        }
        if prev >= self.hi {
            return Err(Error::Config(
                "partition boundaries must stay below the range top".into(),
            ));
        }
        Ok(())
    }

    pub fn interval_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Interval index of `value` (0-based).
    pub fn index_of(&self, value: f64) -> Result<usize> {
        if !value.is_finite() || value < self.lo || value > self.hi {
            return Err(Error::Domain(format!(
                "value {value} outside partition range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self.boundaries.partition_point(|&b| b <= value))
    }
}

/// Returns the interval index of `value` within `partition`.
pub fn partition_index(value: f64, partition: &DimensionPartition) -> Result<usize> {
    partition.index_of(value)
}

/// Full per-task partition: one [`DimensionPartition`] per state-information entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub dims: Vec<DimensionPartition>,
}

impl PartitionSpec {
    pub fn new(dims: Vec<DimensionPartition>) -> Result<Self> {
        let spec = PartitionSpec { dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config(
                "partition needs at least one dimension".into(),
            ));
        }
        for dim in &self.dims {
            dim.validate()?;
        }
        Ok(())
    }

    /// Default partitions per task; coarse enough that conditions recur across edges.
    pub fn default_for(kind: TaskKind) -> Self {
        let dims = match kind {
            // battery [0, 100] at {10, 40, 70}; active {0} / {1}; charge [0, 5] at {3}.
            TaskKind::WirelessPower => vec![
                DimensionPartition {
                    lo: 0.0,
                    hi: 100.0,
                    boundaries: vec![10.0, 40.0, 70.0],
                },
                DimensionPartition {
                    lo: 0.0,
                    hi: 1.0,
                    boundaries: vec![0.5],
                },
                DimensionPartition {
                    lo: 0.0,
                    hi: 5.0,
                    boundaries: vec![3.0],
                },
            ],
            // remaining buffer [0, 90] at {30, 60}; capacity at {40, 60}.
            TaskKind::DataGathering => vec![
                DimensionPartition {
                    lo: 0.0,
                    hi: 90.0,
                    boundaries: vec![30.0, 60.0],
                },
                DimensionPartition {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    boundaries: vec![40.0, 60.0],
                },
            ],
            // channel gain, log-spaced cuts; backlog at {0.5, 3}.
            TaskKind::RadioScheduling => vec![
                DimensionPartition {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    boundaries: vec![1e-10, 1e-9],
                },
                DimensionPartition {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    boundaries: vec![0.5, 3.0],
                },
            ],
        };
        PartitionSpec { dims }
    }

    pub fn dim_sizes(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.interval_count()).collect()
    }

    /// Number of condition cells, `prod_k H_k`.
    pub fn cell_count(&self) -> usize {
        self.dims.iter().map(|d| d.interval_count()).product()
    }

    /// Row-major flat index of a condition tuple (last dimension fastest).
    pub fn flatten(&self, condition: &[usize]) -> usize {
        debug_assert_eq!(condition.len(), self.dims.len());
        let mut idx = 0;
        for (h, dim) in condition.iter().zip(&self.dims) {
            debug_assert!(*h < dim.interval_count());
            idx = idx * dim.interval_count() + h;
        }
        idx
    }

    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut condition = vec![0; self.dims.len()];
        for (slot, dim) in condition.iter_mut().zip(&self.dims).rev() {
            let size = dim.interval_count();
            *slot = idx % size;
            idx /= size;
        }
        condition
    }

    /// Condition tuple of one device's state-information vector.
    pub fn condition_of(&self, info: &[f64]) -> Result<Vec<usize>> {
        if info.len() != self.dims.len() {
            return Err(Error::Contract(format!(
                "state information has {} entries, partition covers {}",
                info.len(),
                self.dims.len()
            )));
        }
        info.iter()
            .zip(&self.dims)
            .map(|(&v, dim)| dim.index_of(v))
            .collect()
    }
}

/// Binary occupancy tensor over condition cells, flattened row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgnosticState {
    dim_sizes: Vec<usize>,
    occupancy: Vec<bool>,
}

impl AgnosticState {
    /// Builds a tensor directly from its flat occupancy entries.
    pub fn from_parts(dim_sizes: Vec<usize>, occupancy: Vec<bool>) -> Result<Self> {
        let cells: usize = dim_sizes.iter().product();
        if dim_sizes.is_empty() || occupancy.len() != cells {
            return Err(Error::Contract(format!(
                "occupancy of {} entries does not fill a {:?} tensor",
                occupancy.len(),
                dim_sizes
            )));
        }
        Ok(AgnosticState {
            dim_sizes,
            occupancy,
        })
    }

    pub fn dim_sizes(&self) -> &[usize] {
        &self.dim_sizes
    }

    pub fn cell_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn occupied(&self, flat_cell: usize) -> bool {
        self.occupancy[flat_cell]
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| o.then_some(i))
    }

    /// Network input: the tensor as 0/1 values in flat order.
    pub fn as_input(&self) -> Vec<f64> {
        self.occupancy.iter().map(|&o| o as u8 as f64).collect()
    }
}

/// Encodes an edge state into its occupancy tensor.
///
/// The result depends only on which conditions are occupied: it is invariant
/// under device permutations and under the device count.
pub fn encode_state(state: &EdgeState, spec: &PartitionSpec) -> Result<AgnosticState> {
    let mut occupancy = vec![false; spec.cell_count()];
    for row in state.devices() {
        let condition = spec.condition_of(row)?;
        occupancy[spec.flatten(&condition)] = true;
    }
    Ok(AgnosticState {
        dim_sizes: spec.dim_sizes(),
        occupancy,
    })
}

/// Condition cell plus decision values drawn from the task's grids.
#[derive(Debug, Clone, PartialEq)]
pub struct AgnosticAction {
    pub condition: Vec<usize>,
    pub decisions: Vec<f64>,
}

/// Number of combinations of decision values.
pub fn grid_combo_count(grids: &[Vec<f64>]) -> usize {
    grids.iter().map(|g| g.len()).product()
}

/// Size of the full (unmasked) agnostic action space.
pub fn action_space_size(spec: &PartitionSpec, grids: &[Vec<f64>]) -> usize {
    spec.cell_count() * grid_combo_count(grids)
}

/// Flat action index: condition cells are the slow axis, decision combinations
/// the fast axis (row-major over the grids).
pub fn action_flat_index(
    action: &AgnosticAction,
    spec: &PartitionSpec,
    grids: &[Vec<f64>],
) -> Result<usize> {
    let cell = spec.flatten(&action.condition);
    let mut combo = 0;
    if action.decisions.len() != grids.len() {
        return Err(Error::Contract(
            "decision count does not match the task grids".into(),
        ));
    }
    for (value, grid) in action.decisions.iter().zip(grids) {
        let pos = grid
            .iter()
            .position(|g| g == value)
            .ok_or_else(|| Error::Contract(format!("decision value {value} not in its grid")))?;
        combo = combo * grid.len() + pos;
    }
    Ok(cell * grid_combo_count(grids) + combo)
}

pub fn action_from_flat(flat: usize, spec: &PartitionSpec, grids: &[Vec<f64>]) -> AgnosticAction {
    let combos = grid_combo_count(grids);
    let cell = flat / combos;
    let mut combo = flat % combos;
    let mut decisions = vec![0.0; grids.len()];
    for (slot, grid) in decisions.iter_mut().zip(grids).rev() {
        *slot = grid[combo % grid.len()];
        combo /= grid.len();
    }
    AgnosticAction {
        condition: spec.unflatten(cell),
        decisions,
    }
}

/// Feasibility mask over the flat action space: an action is feasible iff its
/// condition cell is occupied.
pub fn feasible_mask(agn: &AgnosticState, grids: &[Vec<f64>]) -> Vec<bool> {
    let combos = grid_combo_count(grids);
    let mut mask = vec![false; agn.cell_count() * combos];
    for cell in agn.occupied_cells() {
        for slot in &mut mask[cell * combos..(cell + 1) * combos] {
            *slot = true;
        }
    }
    mask
}

/// Enumerates exactly the feasible agnostic actions of `agn`.
pub fn feasible_actions(
    agn: &AgnosticState,
    spec: &PartitionSpec,
    grids: &[Vec<f64>],
) -> Result<Vec<AgnosticAction>> {
    if agn.occupied_cells().next().is_none() {
        return Err(Error::Contract(
            "all-zero occupancy has no feasible actions".into(),
        ));
    }
    let combos = grid_combo_count(grids);
    let mut actions = Vec::new();
    for cell in agn.occupied_cells() {
        for combo in 0..combos {
            actions.push(action_from_flat(cell * combos + combo, spec, grids));
        }
    }
    Ok(actions)
}

/// Resolves an agnostic action to a concrete device, uniformly at random among
/// the devices matching the action's condition.
pub fn translate_action(
    action: &AgnosticAction,
    state: &EdgeState,
    spec: &PartitionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<EdgeAction> {
    let mut matches = Vec::new();
    for (m, row) in state.devices().enumerate() {
        if spec.condition_of(row)? == action.condition {
            matches.push(m);
        }
    }
    if matches.is_empty() {
        return Err(Error::StaleEncoding(format!(
            "no device currently matches condition {:?}",
            action.condition
        )));
    }
    let pick = matches[rng.random_range(0..matches.len())];
    Ok(EdgeAction {
        device_index: pick,
        decisions: action.decisions.clone(),
    })
}

//! Round-level task selection under cloud resource capacities.
//!
//! Availability is sampled per edge per round; the proportional-fair policy
//! runs a stochastic-subgradient controller whose per-round subproblem is an
//! exact multidimensional knapsack over the tasks, and the comparison policies
//! (greedy, round-robin, capacity-ignoring benchmark, no federation) share the
//! same surface.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// Cloud resource capacities available for federation per round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudCapacity {
    pub bandwidth: f64,
    pub memory: f64,
    pub compute: f64,
}

impl CloudCapacity {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth < 0.0 || self.memory < 0.0 || self.compute < 0.0 {
            return Err(Error::Config(
                "cloud capacities must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.bandwidth, self.memory, self.compute]
    }
}

/// Per-participant resource demand of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDemand {
    pub bandwidth: f64,
    pub memory: f64,
    pub compute: f64,
}

impl TaskDemand {
    pub fn unit() -> Self {
        TaskDemand {
            bandwidth: 1.0,
            memory: 1.0,
            compute: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth < 0.0 || self.memory < 0.0 || self.compute < 0.0 {
            return Err(Error::Config("task demands must be non-negative".into()));
        }
        Ok(())
    }

    fn scaled(&self, participants: f64) -> [f64; 3] {
        [
            participants * self.bandwidth,
            participants * self.memory,
            participants * self.compute,
        ]
    }
}

/// Realized availability of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityVector {
    pub per_edge: Vec<bool>,
    /// Available-edge counts per task.
    pub per_task: Vec<u32>,
}

/// Samples each edge's availability as an independent Bernoulli draw with its
/// task's arrival rate.
pub fn sample_availability(
    task_of_edge: &[usize],
    rates_per_task: &[f64],
    rng: &mut ChaCha8Rng,
) -> AvailabilityVector {
    let mut per_task = vec![0u32; rates_per_task.len()];
    let per_edge: Vec<bool> = task_of_edge
        .iter()
        .map(|&task| {
            let up = rng.random_bool(rates_per_task[task]);
            if up {
                per_task[task] += 1;
            }
            up
        })
        .collect();
    AvailabilityVector { per_edge, per_task }
}

/// Candidate ordering for the knapsack: objective first, then larger selected
/// set, then lexicographically smallest index set.
fn better(obj_a: f64, set_a: &[usize], obj_b: f64, set_b: &[usize]) -> bool {
    if obj_a != obj_b {
        return obj_a > obj_b;
    }
    if set_a.len() != set_b.len() {
        return set_a.len() > set_b.len();
    }
    set_a < set_b
}

fn enumerate_exact(values: &[f64], demands: &[[f64; 3]], caps: &[f64; 3]) -> Vec<usize> {
    let n = values.len();
    let mut best_set: Vec<usize> = Vec::new();
    let mut best_obj = 0.0;
    for mask in 0u32..(1u32 << n) {
        let mut used = [0.0; 3];
        let mut obj = 0.0;
        let mut set = Vec::new();
        let mut ok = true;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                for d in 0..3 {
                    used[d] += demands[i][d];
                }
                obj += values[i];
                set.push(i);
            }
        }
        for d in 0..3 {
            if used[d] > caps[d] {
                ok = false;
                break;
            }
        }
        if ok && better(obj, &set, best_obj, &best_set) {
            best_obj = obj;
            best_set = set;
        }
    }
    best_set
}

fn branch_and_bound(values: &[f64], demands: &[[f64; 3]], caps: &[f64; 3]) -> Vec<usize> {
    // Suffix sums of the remaining values bound the attainable objective.
    let n = values.len();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + values[i].max(0.0);
    }
    let mut best_set: Vec<usize> = Vec::new();
    let mut best_obj = 0.0;

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        i: usize,
        obj: f64,
        used: [f64; 3],
        chosen: &mut Vec<usize>,
        values: &[f64],
        demands: &[[f64; 3]],
        caps: &[f64; 3],
        suffix: &[f64],
        best_obj: &mut f64,
        best_set: &mut Vec<usize>,
    ) {
        // Prune only strictly worse bounds so exact ties keep exploring and
        // the cardinality/lexicographic tie-break stays exact.
        if obj + suffix[i] < *best_obj {
            return;
        }
        if i == values.len() {
            if better(obj, chosen, *best_obj, best_set) {
                *best_obj = obj;
                *best_set = chosen.clone();
            }
            return;
        }
        let mut next = used;
        let mut fits = true;
        for d in 0..3 {
            next[d] += demands[i][d];
            if next[d] > caps[d] {
                fits = false;
            }
        }
        if fits {
            chosen.push(i);
            dfs(
                i + 1,
                obj + values[i],
                next,
                chosen,
                values,
                demands,
                caps,
                suffix,
                best_obj,
                best_set,
            );
            chosen.pop();
        }
        dfs(
            i + 1,
            obj,
            used,
            chosen,
            values,
            demands,
            caps,
            suffix,
            best_obj,
            best_set,
        );
    }
    dfs(
        0,
        0.0,
        [0.0; 3],
        &mut Vec::new(),
        values,
        demands,
        caps,
        &suffix,
        &mut best_obj,
        &mut best_set,
    );
    best_set
}

/// Exact multidimensional knapsack over tasks.
///
/// Maximizes `sum w_l q_l` under the three capacity constraints. Among optima
/// it prefers the larger selected set, then the lexicographically smallest
/// index set. Exhaustive enumeration up to 20 tasks, branch and bound above.
pub fn solve_mdkp(values: &[f64], demands: &[[f64; 3]], caps: &CloudCapacity) -> Vec<bool> {
    assert_eq!(values.len(), demands.len());
    let caps = caps.as_array();
    let set = if values.len() <= 20 {
        enumerate_exact(values, demands, &caps)
    } else {
        branch_and_bound(values, demands, &caps)
    };
    let mut q = vec![false; values.len()];
    for i in set {
        q[i] = true;
    }
    q
}

/// Dual state of the proportional-fair controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl MultiplierState {
    /// Strictly positive start so early rounds select tasks.
    pub fn new(task_count: usize) -> Self {
        MultiplierState {
            lambda: vec![1.0; task_count],
            mu: vec![1.0; task_count],
        }
    }

    pub fn min(&self) -> f64 {
        self.lambda
            .iter()
            .chain(&self.mu)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Task utility shapes for the auxiliary subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    /// `V(y) = w * ln(y)`: weighted proportional fairness.
    Logarithmic,
}

/// Auxiliary target `y = argmax_y { V(y) - lambda * y }`, capped at `y_max`.
pub fn auxiliary_target(kind: UtilityKind, weight: f64, lambda: f64, y_max: f64) -> Result<f64> {
    if !(y_max > 0.0) {
        return Err(Error::Domain(format!(
            "auxiliary cap {y_max} must be positive"
        )));
    }
    match kind {
        UtilityKind::Logarithmic => {
            if lambda <= 0.0 {
                Ok(y_max)
            } else {
                Ok((weight / lambda).min(y_max))
            }
        }
    }
}

/// Projected subgradient update of both multipliers.
pub fn update_multipliers(
    mult: &MultiplierState,
    selected: &[bool],
    per_task_available: &[u32],
    targets: &[f64],
    min_participants: &[f64],
    step_size: f64,
) -> MultiplierState {
    let participants = |l: usize| {
        if selected[l] {
            per_task_available[l] as f64
        } else {
            0.0
        }
    };
    let lambda = mult
        .lambda
        .iter()
        .enumerate()
        .map(|(l, &v)| (v - step_size * (participants(l) - targets[l])).max(0.0))
        .collect();
    let mu = mult
        .mu
        .iter()
        .enumerate()
        .map(|(l, &v)| (v - step_size * (participants(l) - min_participants[l])).max(0.0))
        .collect();
    MultiplierState { lambda, mu }
}

/// Knapsack weights `(lambda + mu) * x_l`; zero-availability tasks are
/// excluded by convention.
pub fn select_tasks(
    mult: &MultiplierState,
    per_task_available: &[u32],
    demands: &[TaskDemand],
    caps: &CloudCapacity,
) -> Vec<bool> {
    let l_count = per_task_available.len();
    let mut index_map = Vec::new();
    let mut values = Vec::new();
    let mut scaled = Vec::new();
    for l in 0..l_count {
        let x = per_task_available[l];
        if x == 0 {
            continue;
        }
        index_map.push(l);
        values.push((mult.lambda[l] + mult.mu[l]) * x as f64);
        scaled.push(demands[l].scaled(x as f64));
    }
    let sub = solve_mdkp(&values, &scaled, caps);
    let mut q = vec![false; l_count];
    for (pos, &l) in index_map.iter().enumerate() {
        q[l] = sub[pos];
    }
    q
}

/// The five selection policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Proportional-fair dual controller over the exact knapsack.
    FlPf,
    /// Most available edges first, while capacities hold.
    FlGreedy,
    /// Rotating task order, while capacities hold.
    FlRr,
    /// Capacity-ignoring upper bound: every task with an available edge.
    Bench,
    /// No federation at all.
    NoFl,
}

impl SelectionPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            SelectionPolicy::FlPf => "fl-pf",
            SelectionPolicy::FlGreedy => "fl-greedy",
            SelectionPolicy::FlRr => "fl-rr",
            SelectionPolicy::Bench => "bench",
            SelectionPolicy::NoFl => "no-fl",
        }
    }
}

/// Greedy fill in a given trial order: add each task whose scaled demand still
/// fits; zero-availability tasks are skipped.
fn fill_in_order(
    order: &[usize],
    per_task_available: &[u32],
    demands: &[TaskDemand],
    caps: &CloudCapacity,
) -> Vec<bool> {
    let caps = caps.as_array();
    let mut used = [0.0; 3];
    let mut q = vec![false; per_task_available.len()];
    for &l in order {
        let x = per_task_available[l];
        if x == 0 {
            continue;
        }
        let demand = demands[l].scaled(x as f64);
        let fits = (0..3).all(|d| used[d] + demand[d] <= caps[d]);
        if fits {
            for d in 0..3 {
                used[d] += demand[d];
            }
            q[l] = true;
        }
    }
    q
}

/// Round-level selection state: multipliers plus the round-robin pointer.
#[derive(Debug, Clone)]
pub struct SelectionController {
    pub policy: SelectionPolicy,
    pub mult: MultiplierState,
    pub utility: UtilityKind,
    pub utility_weights: Vec<f64>,
    rr_pointer: usize,
}

impl SelectionController {
    pub fn new(policy: SelectionPolicy, task_count: usize, utility_weights: Vec<f64>) -> Self {
        SelectionController {
            policy,
            mult: MultiplierState::new(task_count),
            utility: UtilityKind::Logarithmic,
            utility_weights,
            rr_pointer: 0,
        }
    }

    /// Decides the round's selection. Advances the round-robin pointer; does
    /// not touch the multipliers (see [`SelectionController::end_round`]).
    pub fn decide(
        &mut self,
        per_task_available: &[u32],
        demands: &[TaskDemand],
        caps: &CloudCapacity,
    ) -> Vec<bool> {
        let l_count = per_task_available.len();
        match self.policy {
            SelectionPolicy::FlPf => select_tasks(&self.mult, per_task_available, demands, caps),
            SelectionPolicy::FlGreedy => {
                let mut order: Vec<usize> = (0..l_count).collect();
                // Descending availability, ties to the lower index.
                order.sort_by(|&a, &b| {
                    per_task_available[b]
                        .cmp(&per_task_available[a])
                        .then(a.cmp(&b))
                });
                fill_in_order(&order, per_task_available, demands, caps)
            }
            SelectionPolicy::FlRr => {
                let order: Vec<usize> = (0..l_count)
                    .map(|i| (self.rr_pointer + i) % l_count)
                    .collect();
                self.rr_pointer = (self.rr_pointer + 1) % l_count.max(1);
                fill_in_order(&order, per_task_available, demands, caps)
            }
            SelectionPolicy::Bench => per_task_available.iter().map(|&x| x >= 1).collect(),
            SelectionPolicy::NoFl => vec![false; l_count],
        }
    }

    /// Multiplier update at the end of the round (proportional-fair only).
    pub fn end_round(
        &mut self,
        selected: &[bool],
        per_task_available: &[u32],
        min_participants: &[f64],
        y_caps: &[f64],
        step_size: f64,
    ) -> Result<()> {
        if self.policy != SelectionPolicy::FlPf {
            return Ok(());
        }
        let targets: Vec<f64> = (0..selected.len())
            .map(|l| {
                auxiliary_target(
                    self.utility,
                    self.utility_weights[l],
                    self.mult.lambda[l],
                    y_caps[l],
                )
            })
            .collect::<Result<_>>()?;
        self.mult = update_multipliers(
            &self.mult,
            selected,
            per_task_available,
            &targets,
            min_participants,
            step_size,
        );
        Ok(())
    }
}

/// Per-round record of a selection-only run.
#[derive(Debug, Clone)]
pub struct SelectionRound {
    pub available: Vec<u32>,
    pub selected: Vec<bool>,
}

impl SelectionRound {
    pub fn participants(&self, task: usize) -> u32 {
        if self.selected[task] {
            self.available[task]
        } else {
            0
        }
    }
}

/// Runs the selection loop alone (no learning): availability, policy decision,
/// multiplier update, repeated for `rounds` rounds.
#[allow(clippy::too_many_arguments)]
pub fn run_selection_only(
    policy: SelectionPolicy,
    edges_per_task: &[usize],
    rates_per_task: &[f64],
    demands: &[TaskDemand],
    caps: &CloudCapacity,
    min_participants: &[f64],
    step_size: f64,
    rounds: u64,
    master_seed: u64,
) -> Result<Vec<SelectionRound>> {
    let l_count = edges_per_task.len();
    let task_of_edge: Vec<usize> = edges_per_task
        .iter()
        .enumerate()
        .flat_map(|(l, &n)| std::iter::repeat_n(l, n))
        .collect();
    let y_caps: Vec<f64> = edges_per_task
        .iter()
        .map(|&n| (n as f64).max(1.0))
        .collect();
    let mut controller = SelectionController::new(policy, l_count, vec![1.0; l_count]);
    let mut avail_rng = rng::stream(master_seed, domain::AVAILABILITY, 0);
    let mut trace = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        let avail = sample_availability(&task_of_edge, rates_per_task, &mut avail_rng);
        let selected = controller.decide(&avail.per_task, demands, caps);
        controller.end_round(
            &selected,
            &avail.per_task,
            min_participants,
            &y_caps,
            step_size,
        )?;
        trace.push(SelectionRound {
            available: avail.per_task,
            selected,
        });
    }
    Ok(trace)
}

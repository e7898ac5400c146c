//! Run metrics: per-slot rewards, per-round participation, selection traces,
//! derived summaries, and the invariant counters checked by the test suite.
//!
//! CSV output is bit-stable for a fixed config and seed: rows are emitted in a
//! canonical order and floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::env::EdgeState;
use crate::error::{Error, Result};
use crate::tasks::{EdgeConfig, ScenarioParams};

/// Moving average with an expanding head: element `i` is the mean of the last
/// `min(i + 1, window)` values.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Domain("moving average window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / window.min(i + 1) as f64);
    }
    Ok(out)
}

/// Rounds until the smoothed series first reaches 90% of its final smoothed
/// value (1-based count; censored at the series length if never reached).
pub fn learning_speed(series: &[f64]) -> Result<u64> {
    if series.is_empty() {
        return Err(Error::Domain("learning speed of an empty series".into()));
    }
    let window = (series.len() / 10).max(1);
    let smoothed = moving_average(series, window)?;
    let threshold = 0.9 * smoothed[smoothed.len() - 1];
    for (i, &v) in smoothed.iter().enumerate() {
        if v >= threshold {
            return Ok(i as u64 + 1);
        }
    }
    Ok(series.len() as u64)
}

/// Violation counters accumulated over every environment transition.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantStats {
    pub transitions: u64,
    pub battery_violations: u64,
    pub buffer_violations: u64,
    pub backlog_violations: u64,
    pub infeasible_actions: u64,
    pub nonfinite_rewards: u64,
}

impl InvariantStats {
    pub fn check_transition(&mut self, cfg: &EdgeConfig, state: &EdgeState, reward: f64) {
        self.transitions += 1;
        if !reward.is_finite() {
            self.nonfinite_rewards += 1;
        }
        match &cfg.params {
            ScenarioParams::WirelessPower(p) => {
                for row in state.devices() {
                    if !(0.0..=p.max_battery_mj).contains(&row[0]) {
                        self.battery_violations += 1;
                    }
                }
            }
            ScenarioParams::DataGathering(p) => {
                for row in state.devices() {
                    if !(0.0..=p.max_buffer).contains(&row[0]) {
                        self.buffer_violations += 1;
                    }
                }
            }
            ScenarioParams::RadioScheduling(_) => {
                for row in state.devices() {
                    if !(row[0] > 0.0) || row[1] < 0.0 {
                        self.backlog_violations += 1;
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: &InvariantStats) {
        self.transitions += other.transitions;
        self.battery_violations += other.battery_violations;
        self.buffer_violations += other.buffer_violations;
        self.backlog_violations += other.backlog_violations;
        self.infeasible_actions += other.infeasible_actions;
        self.nonfinite_rewards += other.nonfinite_rewards;
    }

    pub fn violations(&self) -> u64 {
        self.battery_violations
            + self.buffer_violations
            + self.backlog_violations
            + self.infeasible_actions
            + self.nonfinite_rewards
    }
}

/// Whole-run invariant report: environment counters plus controller checks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub env: InvariantStats,
    pub multiplier_violations: u64,
}

impl InvariantReport {
    pub fn violations(&self) -> u64 {
        self.env.violations() + self.multiplier_violations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardRow {
    pub slot: u64,
    pub edge_id: u64,
    pub task: String,
    pub scenario: String,
    pub raw_reward: f64,
    pub normalized_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRow {
    pub round: u64,
    pub task: String,
    pub available: u32,
    pub selected: bool,
    pub participants: u32,
    /// Central-parameter fingerprint after the round, for drift debugging.
    pub central_checksum: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub round: u64,
    pub task: String,
    pub lambda: f64,
    pub mu: f64,
    pub weight: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub task: String,
    pub avg_participants: f64,
    pub avg_normalized_reward: f64,
    pub learning_speed: u64,
}

/// Full log of one simulation run.
#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub rewards: Vec<RewardRow>,
    pub participants: Vec<ParticipantRow>,
    pub selection: Vec<SelectionRow>,
    pub summary: Vec<SummaryRow>,
    /// Per-task series of per-round mean normalized reward.
    pub round_task_reward: Vec<Vec<f64>>,
    /// Per-task series of per-round participant counts.
    pub round_task_participants: Vec<Vec<u32>>,
    pub invariants: InvariantReport,
}

impl MetricsLog {
    pub fn with_tasks(task_count: usize) -> Self {
        MetricsLog {
            round_task_reward: vec![Vec::new(); task_count],
            round_task_participants: vec![Vec::new(); task_count],
            ..MetricsLog::default()
        }
    }

    /// Per-round sum over tasks of the mean normalized reward.
    pub fn round_sum_reward(&self) -> Vec<f64> {
        let rounds = self.round_task_reward.first().map_or(0, |s| s.len());
        (0..rounds)
            .map(|r| self.round_task_reward.iter().map(|s| s[r]).sum())
            .collect()
    }

    pub fn rewards_csv(&self) -> String {
        let mut out = String::from("slot,edge_id,task,scenario,raw_reward,normalized_reward\n");
        for r in &self.rewards {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.slot, r.edge_id, r.task, r.scenario, r.raw_reward, r.normalized_reward
            );
        }
        out
    }

    pub fn participants_csv(&self, with_checksums: bool) -> String {
        let mut out = String::from("round,task,available,selected,participants");
        if with_checksums {
            out.push_str(",central_checksum");
        }
        out.push('\n');
        for r in &self.participants {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.round, r.task, r.available, r.selected as u8, r.participants
            );
            if with_checksums {
                let _ = write!(out, ",{:016x}", r.central_checksum.unwrap_or(0));
            }
            out.push('\n');
        }
        out
    }

    pub fn selection_csv(&self) -> String {
        let mut out = String::from("round,task,lambda,mu,weight,selected\n");
        for r in &self.selection {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.round, r.task, r.lambda, r.mu, r.weight, r.selected as u8
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("policy,task,avg_participants,avg_normalized_reward,learning_speed\n");
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.policy, r.task, r.avg_participants, r.avg_normalized_reward, r.learning_speed
            );
        }
        out
    }

    /// Writes the four CSV outputs into `dir`, creating it if needed.
    pub fn write_csvs(&self, dir: &Path, with_checksums: bool) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rewards.csv"), self.rewards_csv())?;
        fs::write(
            dir.join("participants.csv"),
            self.participants_csv(with_checksums),
        )?;
        fs::write(dir.join("selection.csv"), self.selection_csv())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_expands_head() {
        assert_eq!(
            moving_average(&[1.0, 3.0, 5.0], 2).unwrap(),
            vec![1.0, 2.0, 4.0]
        );
    }

    #[test]
    fn moving_average_window_one_is_identity() {
        let s = [4.0, 2.0, 7.0];
        assert_eq!(moving_average(&s, 1).unwrap(), s.to_vec());
    }

    #[test]
    fn moving_average_fixes_constants() {
        let s = [3.0; 10];
        assert_eq!(moving_average(&s, 4).unwrap(), s.to_vec());
        assert!(moving_average(&s, 0).is_err());
    }

    #[test]
    fn learning_speed_on_rising_series_matches_hand_scan() {
        // Linear rise over 40 rounds, then a plateau.
        let mut series: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        series.extend(std::iter::repeat_n(1.0, 60));

        let window = series.len() / 10;
        let smoothed = moving_average(&series, window).unwrap();
        let threshold = 0.9 * smoothed[smoothed.len() - 1];
        let mut expected = series.len() as u64;
        for (i, &v) in smoothed.iter().enumerate() {
            if v >= threshold {
                expected = i as u64 + 1;
                break;
            }
        }
        assert_eq!(learning_speed(&series).unwrap(), expected);
        // The crossing happens while the rise levels off, not at the end.
        assert!(expected > 30 && expected < 60, "crossing at {expected}");
    }

    #[test]
    fn learning_speed_of_constant_series_is_one() {
        assert_eq!(learning_speed(&[0.4; 25]).unwrap(), 1);
        assert_eq!(learning_speed(&[0.0; 25]).unwrap(), 1);
    }

    #[test]
    fn learning_speed_censors_unreached_threshold() {
        // Strictly increasing to the last round: the smoothed series only
        // reaches 90% of its final value near the end, never before a long
        // window catches up; a two-point series is censored at its length.
        let series = vec![0.0, 1.0];
        assert_eq!(learning_speed(&series).unwrap(), 2);
        assert!(learning_speed(&[]).is_err());
    }

    #[test]
    fn csv_headers_are_stable() {
        let log = MetricsLog::with_tasks(1);
        assert!(log.rewards_csv().starts_with("slot,edge_id,task,scenario"));
        assert!(log
            .participants_csv(false)
            .starts_with("round,task,available"));
        assert!(log.participants_csv(true).contains("central_checksum"));
        assert!(log.selection_csv().starts_with("round,task,lambda,mu"));
        assert!(log
            .summary_csv()
            .starts_with("policy,task,avg_participants"));
    }
}

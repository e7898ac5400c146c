//! Radio resource scheduling task.
//!
//! The access point serves one device per slot at a chosen transmit power.
//! The achieved Shannon rate drains the served device's rate backlog (degree
//! of dissatisfaction); every unserved device's backlog grows by its rate
//! requirement. The reward trades backlog-weighted rate against power cost.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EdgeAction, EdgeState, Transition};
use crate::error::{Error, Result};

/// State information per device: channel power gain, rate backlog (Mbps-slots).
pub const STATE_INFO_COUNT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Device distances from the access point; the length sets the device count.
    pub distances_m: Vec<f64>,
    pub rate_requirement_mbps: f64,
    /// Log-normal shadowing standard deviation, resampled i.i.d. per slot.
    pub shadowing_db: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    /// Path loss in dB: `path_loss_const_db + path_loss_slope_db * log10(d_m)`.
    pub path_loss_const_db: f64,
    pub path_loss_slope_db: f64,
    /// Transmit power levels in watts; the zero entry switches the radio off.
    pub power_grid_w: Vec<f64>,
    /// Reward cost per transmitted watt.
    pub power_cost_per_w: f64,
}

/// `{0} ∪ {5, 10, ..., 40 dBm}` expressed in watts.
pub fn default_power_grid_w() -> Vec<f64> {
    let mut grid = vec![0.0];
    for dbm in (5..=40).step_by(5) {
        grid.push(dbm_to_watts(dbm as f64));
    }
    grid
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            distances_m: vec![50.0],
            rate_requirement_mbps: 0.5,
            shadowing_db: 10.0,
            bandwidth_hz: 1.0e6,
            noise_dbm: -104.0,
            path_loss_const_db: 35.0,
            path_loss_slope_db: 35.0,
            power_grid_w: default_power_grid_w(),
            power_cost_per_w: 1.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if self.distances_m.is_empty() {
            return Err(Error::Config(
                "radio-scheduling: at least one device required".into(),
            ));
        }
        if self.distances_m.iter().any(|&d| d <= 0.0) {
            return Err(Error::Config(
                "radio-scheduling: distances must be positive".into(),
            ));
        }
        if self.power_grid_w.is_empty() || self.power_grid_w.iter().any(|&p| p < 0.0) {
            return Err(Error::Config("radio-scheduling: invalid power grid".into()));
        }
        if !(self.bandwidth_hz > 0.0) || self.rate_requirement_mbps < 0.0 {
            return Err(Error::Config(
                "radio-scheduling: invalid bandwidth or requirement".into(),
            ));
        }
        Ok(())
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    fn path_loss_db(&self, distance_m: f64) -> f64 {
        self.path_loss_const_db + self.path_loss_slope_db * distance_m.log10()
    }

    fn sample_gain(&self, distance_m: f64, rng: &mut ChaCha8Rng) -> f64 {
        let shadow = Normal::new(0.0, self.shadowing_db)
            .expect("valid normal")
            .sample(rng);
        10f64.powf((-self.path_loss_db(distance_m) + shadow) / 10.0)
    }

    /// Shannon rate in Mbps for transmit power `power_w` over channel gain `gain`.
    pub fn achieved_rate_mbps(&self, power_w: f64, gain: f64) -> f64 {
        let snr = power_w * gain / self.noise_w();
        self.bandwidth_hz / 1.0e6 * (1.0 + snr).log2()
    }
}

/// Initial state: sampled gains, zero backlog.
pub fn reset(params: &RadioParams, rng: &mut ChaCha8Rng) -> Result<EdgeState> {
    let rows = params
        .distances_m
        .iter()
        .map(|&d| vec![params.sample_gain(d, rng), 0.0])
        .collect();
    EdgeState::new(rows)
}

pub fn step(
    params: &RadioParams,
    state: &EdgeState,
    action: &EdgeAction,
    rng: &mut ChaCha8Rng,
) -> Result<Transition> {
    let power_w = action.decisions[0];
    let served = action.device_index;
    let served_gain = state.device(served)[0];
    let served_rate = params.achieved_rate_mbps(power_w, served_gain);

    // Backlog-weighted rate (only the served device has a nonzero rate) minus power cost.
    let reward = state.device(served)[1] * served_rate - params.power_cost_per_w * power_w;

    let rows = state
        .devices()
        .enumerate()
        .map(|(m, row)| {
            let rate = if m == served { served_rate } else { 0.0 };
            let dod = (row[1] + params.rate_requirement_mbps - rate).max(0.0);
            let gain = params.sample_gain(params.distances_m[m], rng);
            vec![gain, dod]
        })
        .collect();

    Ok(Transition {
        next_state: EdgeState::new(rows)?,
        reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn params(n: usize) -> RadioParams {
        RadioParams {
            distances_m: vec![50.0; n],
            ..RadioParams::default()
        }
    }

    fn state(rows: Vec<Vec<f64>>) -> EdgeState {
        EdgeState::new(rows).unwrap()
    }

    #[test]
    fn zero_power_means_zero_reward_and_growing_backlog() {
        let p = params(3);
        let s = state(vec![vec![1e-9, 2.0], vec![1e-10, 0.5], vec![1e-9, 0.0]]);
        let mut r = rng::stream(6, rng::domain::ENV_STEP, 0);
        let a = EdgeAction {
            device_index: 0,
            decisions: vec![0.0],
        };
        let t = step(&p, &s, &a, &mut r).unwrap();
        assert_eq!(t.reward, 0.0);
        for (m, row) in t.next_state.devices().enumerate() {
            assert_eq!(row[1], s.device(m)[1] + p.rate_requirement_mbps);
        }
    }

    #[test]
    fn unit_snr_gives_one_mbps_on_one_mhz() {
        let p = params(1);
        // Pick gain so that power * gain / noise == 1.
        let gain = p.noise_w() / 2.0;
        assert!((p.achieved_rate_mbps(2.0, gain) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_at_twenty_meters_matches_hand_calculation() {
        // Independent evaluation of the link budget at 20 m, median shadowing,
        // max grid power: PL = 35 + 35*log10(20) dB, noise at -104 dBm / 1 MHz.
        let p = params(1);
        let pl_db = 35.0 + 35.0 * 20f64.log10();
        let gain = 10f64.powf(-pl_db / 10.0);
        let power = *p.power_grid_w.last().unwrap();
        assert!((power - 10.0).abs() < 1e-9, "top grid level is 40 dBm");
        let noise = 10f64.powf((-104.0 - 30.0) / 10.0);
        let expected = (1.0 + power * gain / noise).log2();
        let got = p.achieved_rate_mbps(power, gain);
        assert!((got - expected).abs() < 1e-12);
        // The hand-computed value, frozen: ~21.08 Mbps.
        assert!((expected - 21.0823).abs() < 1e-3, "expected {expected}");
    }

    #[test]
    fn backlog_is_nonincreasing_in_rate() {
        let p = params(1);
        let dod = 3.0;
        let update = |rate: f64| (dod + p.rate_requirement_mbps - rate).max(0.0);
        let mut last = f64::INFINITY;
        for rate in [0.0, 0.5, 1.0, 5.0, 100.0] {
            let next = update(rate);
            assert!(next >= 0.0);
            assert!(next <= last);
            last = next;
        }
    }

    #[test]
    fn served_backlog_drains_by_achieved_rate() {
        let p = params(2);
        let s = state(vec![vec![1e-8, 4.0], vec![1e-9, 1.0]]);
        let power = p.power_grid_w[5];
        let rate = p.achieved_rate_mbps(power, 1e-8);
        let mut r = rng::stream(7, rng::domain::ENV_STEP, 0);
        let a = EdgeAction {
            device_index: 0,
            decisions: vec![power],
        };
        let t = step(&p, &s, &a, &mut r).unwrap();
        let expected_dod = (4.0 + p.rate_requirement_mbps - rate).max(0.0);
        assert_eq!(t.next_state.device(0)[1], expected_dod);
        assert_eq!(t.reward, 4.0 * rate - p.power_cost_per_w * power);
    }

    #[test]
    fn gains_stay_positive() {
        let p = params(4);
        let mut r = rng::stream(8, rng::domain::ENV_STEP, 0);
        for _ in 0..10_000 {
            for &d in &p.distances_m {
                assert!(p.sample_gain(d, &mut r) > 0.0);
            }
        }
    }
}

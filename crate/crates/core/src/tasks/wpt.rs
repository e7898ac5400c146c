//! Wireless power transfer task.
//!
//! An access point charges one device per slot. Active devices discharge at a
//! fixed rate; per-device charging rates follow a discrete fading state. The
//! slot cost counts devices in the low-battery region plus a surcharge for
//! empty batteries, and the reward is the negative cost.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EdgeAction, EdgeState, Transition};
use crate::error::{Error, Result};
use crate::tasks::sample_active;

/// State information per device: battery (mJ), active flag, charging rate (mW).
pub const STATE_INFO_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WptParams {
    pub device_count: usize,
    pub initial_battery_mj: f64,
    /// Peak charging rate; the realized per-slot rate is uniform over
    /// `{1, ..., charge_rate_mw}` to model the device's channel condition.
    pub charge_rate_mw: f64,
    pub discharge_rate_mw: f64,
    pub max_battery_mj: f64,
    /// Threshold of the low-battery region.
    pub low_battery_mj: f64,
    /// Extra cost charged per device with an empty battery.
    pub outage_cost: f64,
}

impl Default for WptParams {
    fn default() -> Self {
        WptParams {
            device_count: 1,
            initial_battery_mj: 20.0,
            charge_rate_mw: 5.0,
            discharge_rate_mw: 1.0,
            max_battery_mj: 100.0,
            low_battery_mj: 10.0,
            outage_cost: 5.0,
        }
    }
}

impl WptParams {
    pub fn validate(&self) -> Result<()> {
        if self.device_count == 0 {
            return Err(Error::Config(
                "wireless-power: device_count must be >= 1".into(),
            ));
        }
        if !(self.max_battery_mj > 0.0) {
            return Err(Error::Config(
                "wireless-power: max_battery_mj must be > 0".into(),
            ));
        }
        if self.initial_battery_mj < 0.0 || self.initial_battery_mj > self.max_battery_mj {
            return Err(Error::Config(
                "wireless-power: initial battery outside [0, max_battery_mj]".into(),
            ));
        }
        if self.charge_rate_mw < 1.0 || self.discharge_rate_mw < 0.0 || self.outage_cost < 0.0 {
            return Err(Error::Config(
                "wireless-power: rates/costs out of range".into(),
            ));
        }
        Ok(())
    }

    fn charge_levels(&self) -> u64 {
        self.charge_rate_mw.round().max(1.0) as u64
    }
}

fn sample_charge_rate(params: &WptParams, rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1..=params.charge_levels()) as f64
}

/// Initial state: table batteries, stationary activity, sampled charge rates.
pub fn reset(params: &WptParams, rng: &mut ChaCha8Rng) -> Result<EdgeState> {
    let rows = (0..params.device_count)
        .map(|_| {
            let active = rng.random_bool(0.5);
            let charge = sample_charge_rate(params, rng);
            vec![params.initial_battery_mj, active as u8 as f64, charge]
        })
        .collect();
    EdgeState::new(rows)
}

pub fn step(
    params: &WptParams,
    state: &EdgeState,
    action: &EdgeAction,
    rng: &mut ChaCha8Rng,
) -> Result<Transition> {
    let m_count = state.device_count();
    let mut batteries = Vec::with_capacity(m_count);
    for (m, row) in state.devices().enumerate() {
        let battery = row[0];
        let active = row[1] != 0.0;
        let charge = row[2];
        let scheduled = m == action.device_index;
        let drained = battery
            - if active {
                params.discharge_rate_mw
            } else {
                0.0
            };
        let charged = drained + if scheduled { charge } else { 0.0 };
        batteries.push(charged.max(0.0).min(params.max_battery_mj));
    }

    // Cost uses post-update batteries: low-battery indicator plus outage surcharge.
    let mut cost = 0.0;
    for &b in &batteries {
        if b <= params.low_battery_mj {
            cost += 1.0;
        }
        if b == 0.0 {
            cost += params.outage_cost;
        }
    }

    let rows = batteries
        .into_iter()
        .enumerate()
        .map(|(m, battery)| {
            let was_active = state.device(m)[1] != 0.0;
            let active = sample_active(was_active, rng);
            let charge = sample_charge_rate(params, rng);
            vec![battery, active as u8 as f64, charge]
        })
        .collect();

    Ok(Transition {
        next_state: EdgeState::new(rows)?,
        reward: -cost,
    })
}

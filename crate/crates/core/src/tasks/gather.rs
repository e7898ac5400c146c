//! Data gathering task.
//!
//! One device per slot uploads buffered samples to the access point. Samples
//! arrive as a Poisson process, transmission capacities are truncated Gaussian
//! draws, and buffer overflow drops the excess. The reward is gathered samples
//! minus dropped samples.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{EdgeAction, EdgeState, Transition};
use crate::error::{Error, Result};

/// State information per device: remaining buffer (samples), capacity (samples).
pub const STATE_INFO_COUNT: usize = 2;

/// Standard deviation of the per-slot capacity draw (variance 9).
const CAPACITY_STD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatherParams {
    /// Mean transmission capacity per device; the length sets the device count.
    pub mean_capacities: Vec<f64>,
    /// Poisson arrival rate per device (samples per slot).
    pub arrival_rate: f64,
    pub max_buffer: f64,
}

impl Default for GatherParams {
    fn default() -> Self {
        GatherParams {
            mean_capacities: vec![50.0],
            arrival_rate: 10.0,
            max_buffer: 90.0,
        }
    }
}

impl GatherParams {
    pub fn validate(&self) -> Result<()> {
        if self.mean_capacities.is_empty() {
            return Err(Error::Config(
                "data-gathering: at least one device required".into(),
            ));
        }
        if !(self.max_buffer > 0.0) {
            return Err(Error::Config(
                "data-gathering: max_buffer must be > 0".into(),
            ));
        }
        if self.arrival_rate < 0.0 || self.mean_capacities.iter().any(|&c| c < 0.0) {
            return Err(Error::Config(
                "data-gathering: negative rate or capacity".into(),
            ));
        }
        Ok(())
    }
}

fn sample_capacity(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    // Gaussian, floored to an integer, clamped at zero: capacities count samples.
    let normal = Normal::new(mean, CAPACITY_STD).expect("valid normal");
    normal.sample(rng).floor().max(0.0)
}

fn sample_arrivals(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate == 0.0 {
        return 0.0;
    }
    let poisson = Poisson::new(rate).expect("valid poisson");
    poisson.sample(rng)
}

/// Initial state: empty buffers, sampled capacities.
pub fn reset(params: &GatherParams, rng: &mut ChaCha8Rng) -> Result<EdgeState> {
    let rows = params
        .mean_capacities
        .iter()
        .map(|&mean| vec![params.max_buffer, sample_capacity(mean, rng)])
        .collect();
    EdgeState::new(rows)
}

pub fn step(
    params: &GatherParams,
    state: &EdgeState,
    action: &EdgeAction,
    rng: &mut ChaCha8Rng,
) -> Result<Transition> {
    let b_max = params.max_buffer;
    let arrivals: Vec<f64> = (0..state.device_count())
        .map(|_| sample_arrivals(params.arrival_rate, rng))
        .collect();

    let mut reward = 0.0;
    let mut buffers = Vec::with_capacity(state.device_count());
    for (m, (row, &arrived)) in state.devices().zip(&arrivals).enumerate() {
        let buffer = b_max - row[0];
        let capacity = row[1];
        let scheduled = m == action.device_index;
        let inflow = buffer + arrived;
        let gathered = if scheduled { capacity.min(inflow) } else { 0.0 };
        let kept = inflow - gathered;
        let dropped = (kept - b_max).max(0.0);
        reward += gathered - dropped;
        buffers.push(kept.min(b_max));
    }

    let rows = buffers
        .into_iter()
        .zip(&params.mean_capacities)
        .map(|(buffer, &mean)| vec![b_max - buffer, sample_capacity(mean, rng)])
        .collect();

    Ok(Transition {
        next_state: EdgeState::new(rows)?,
        reward,
    })
}

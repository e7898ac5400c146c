//! Central-parameter bookkeeping and the per-task federation round.
//!
//! Each round's federation step gathers, from the available edges of a
//! selected task, the parameter deltas accumulated since their round-start
//! snapshots, folds them into the central parameters with contribution
//! weights scaled by availability, and broadcasts the result to every edge of
//! the task (available or not; stale local parameters are abandoned).

use crate::dqn::EdgeLearner;
use crate::error::{Error, Result};
use crate::nn::PolicyParams;

/// Central parameters of one task's policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralPolicy {
    pub task_index: usize,
    pub params: PolicyParams,
    pub round_index: u64,
}

/// One edge's uploaded contribution for a round.
#[derive(Debug, Clone)]
pub struct LocalDelta {
    pub edge_id: u64,
    pub delta: PolicyParams,
    pub experience_count: u64,
}

/// Contribution weights `c_n = K_n / sum K`, normalized over the task's edges.
pub fn central_weight(experience_counts: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = experience_counts.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateRound(
            "no experiences were contributed this round".into(),
        ));
    }
    Ok(experience_counts
        .iter()
        .map(|&k| k as f64 / total as f64)
        .collect())
}

/// Delta from the round-start parameters to the currently trained ones.
pub fn local_gradient(round_start: &PolicyParams, current: &PolicyParams) -> Result<PolicyParams> {
    if !round_start.same_shape(current) {
        return Err(Error::Contract(
            "local gradient over mismatched shapes".into(),
        ));
    }
    let mut delta = round_start.clone();
    delta.axpy(-1.0, current);
    Ok(delta)
}

/// Availability-weighted central update.
///
/// With `c_n` from [`central_weight`] over all `n_edges` edges of the task and
/// `x` the availability indicators, the update applies coefficient
/// `n_edges * c_n / sum(x)` to each available delta and subtracts the weighted
/// sum from the central parameters. Under full availability this reduces to
/// the weighted average of the edges' trained parameters.
pub fn aggregate(
    central: &CentralPolicy,
    deltas: &[Option<PolicyParams>],
    weights: &[f64],
    available: &[bool],
) -> Result<CentralPolicy> {
    let n_edges = weights.len();
    if deltas.len() != n_edges || available.len() != n_edges {
        return Err(Error::Contract(
            "aggregate inputs must align per edge".into(),
        ));
    }
    let available_count = available.iter().filter(|&&x| x).count();
    if available_count == 0 {
        return Err(Error::Contract(
            "federation round invoked with zero available edges".into(),
        ));
    }
    let mut params = central.params.clone();
    for ((delta, &weight), &avail) in deltas.iter().zip(weights).zip(available) {
        match (avail, delta) {
            (true, Some(d)) => {
                if !d.same_shape(&params) {
                    return Err(Error::Contract("delta shape differs from central".into()));
                }
                let coefficient = n_edges as f64 * weight / available_count as f64;
                params.axpy(-coefficient, d);
            }
            (false, None) => {}
            _ => {
                return Err(Error::Contract(
                    "deltas must be provided exactly for available edges".into(),
                ))
            }
        }
    }
    Ok(CentralPolicy {
        task_index: central.task_index,
        params,
        round_index: central.round_index + 1,
    })
}

/// Full federation round for one selected task.
///
/// Available edges upload their deltas; the central parameters are updated and
/// broadcast to all edges of the task, which re-anchor their round-start
/// snapshots at the broadcast value.
pub fn fed_ds_round(
    central: &mut CentralPolicy,
    edges: &mut [&mut EdgeLearner],
    available: &[bool],
) -> Result<()> {
    if edges.len() != available.len() {
        return Err(Error::Contract(
            "availability must align with the task's edges".into(),
        ));
    }
    if !available.iter().any(|&x| x) {
        return Err(Error::Contract(
            "federation round requires at least one available edge".into(),
        ));
    }
    let counts: Vec<u64> = edges.iter().map(|e| e.buffer.round_count()).collect();
    let weights = central_weight(&counts)?;
    let deltas: Vec<Option<PolicyParams>> = edges
        .iter()
        .zip(available)
        .map(|(edge, &avail)| {
            if avail {
                local_gradient(&edge.round_start, &edge.params).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    *central = aggregate(central, &deltas, &weights, available)?;
    for edge in edges.iter_mut() {
        edge.adopt_central(&central.params);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, domain};

    fn random_params(seed: u64, dims: &[usize]) -> PolicyParams {
        let mut r = rng::stream(seed, domain::EDGE_INIT, 900);
        PolicyParams::init(dims, &mut r)
    }

    fn central(params: PolicyParams) -> CentralPolicy {
        CentralPolicy {
            task_index: 0,
            params,
            round_index: 0,
        }
    }

    #[test]
    fn weights_normalize_experience_counts() {
        assert_eq!(central_weight(&[10, 30]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(central_weight(&[17]).unwrap(), vec![1.0]);
        assert_eq!(central_weight(&[5, 5, 5, 5]).unwrap(), vec![0.25; 4]);
        assert!(matches!(
            central_weight(&[0, 0]),
            Err(Error::DegenerateRound(_))
        ));
    }

    #[test]
    fn local_gradient_is_start_minus_current() {
        let start = random_params(1, &[3, 4, 2]);
        let mut current = start.clone();
        // No training: zero delta.
        let zero = local_gradient(&start, &current).unwrap();
        assert_eq!(zero.max_abs_diff(&start.zeros_like()), 0.0);

        let step = random_params(2, &[3, 4, 2]);
        current.axpy(-1.0, &step);
        let delta = local_gradient(&start, &current).unwrap();
        assert!(delta.max_abs_diff(&step) < 1e-12);
    }

    #[test]
    fn one_sgd_step_shows_up_as_the_delta() {
        use crate::nn::{loss_and_gradient, LossItem};
        let start = random_params(3, &[2, 4, 2]);
        let items = [LossItem {
            input: vec![1.0, 0.0],
            action_index: 1,
            target: 0.7,
        }];
        let (_, grad) = loss_and_gradient(&start, &items);
        let lr = 1e-2;
        let mut after = start.clone();
        after.axpy(-lr, &grad);
        let delta = local_gradient(&start, &after).unwrap();
        // delta = start - (start - lr*grad) = lr*grad.
        let mut expected = start.zeros_like();
        expected.axpy(lr, &grad);
        assert!(delta.max_abs_diff(&expected) < 1e-15);
        assert!((delta.l2_norm() - lr * grad.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn full_participation_reduces_to_weighted_averaging() {
        let dims = [3, 5, 2];
        let theta = random_params(4, &dims);
        let w1 = random_params(5, &dims);
        let w2 = random_params(6, &dims);
        let d1 = local_gradient(&theta, &w1).unwrap();
        let d2 = local_gradient(&theta, &w2).unwrap();
        let out = aggregate(
            &central(theta),
            &[Some(d1), Some(d2)],
            &[0.5, 0.5],
            &[true, true],
        )
        .unwrap();
        // Expected: 0.5 * (w1 + w2).
        let mut expected = PolicyParams::zeros(&dims);
        expected.axpy(0.5, &w1);
        expected.axpy(0.5, &w2);
        assert!(out.params.max_abs_diff(&expected) < 1e-12);
        assert_eq!(out.round_index, 1);
    }

    #[test]
    fn single_available_edge_with_equal_weights_takes_over() {
        let dims = [2, 3, 2];
        let theta = random_params(7, &dims);
        let w1 = random_params(8, &dims);
        let d1 = local_gradient(&theta, &w1).unwrap();
        let out = aggregate(
            &central(theta),
            &[Some(d1), None],
            &[0.5, 0.5],
            &[true, false],
        )
        .unwrap();
        // Coefficient: 2 * 0.5 / 1 = 1, so the central becomes w1.
        assert!(out.params.max_abs_diff(&w1) < 1e-12);
    }

    #[test]
    fn zero_deltas_are_a_fixed_point() {
        let dims = [2, 2];
        let theta = random_params(9, &dims);
        let zero = theta.zeros_like();
        let out = aggregate(
            &central(theta.clone()),
            &[Some(zero.clone()), Some(zero)],
            &[0.5, 0.5],
            &[true, true],
        )
        .unwrap();
        assert_eq!(out.params, theta);
    }

    #[test]
    fn aggregate_rejects_bad_shapes_and_coverage() {
        let dims = [2, 2];
        let theta = random_params(10, &dims);
        let err = aggregate(
            &central(theta.clone()),
            &[None, None],
            &[0.5, 0.5],
            &[false, false],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let err =
            aggregate(&central(theta), &[None, None], &[0.5, 0.5], &[true, false]).unwrap_err();
        assert!(
            matches!(err, Error::Contract(_)),
            "missing delta for an available edge"
        );
    }
}

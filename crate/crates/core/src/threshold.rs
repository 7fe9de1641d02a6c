//! Threshold (windowing) release policy: clear while fewer than `Th`
//! aircraft are on the surface, alternating between ramps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{reachable_from, stationary_from};
use crate::error::{Error, Result};
use crate::optimal::{stationary_metrics, CostParams, OccupationMeasure, StationaryMetrics};
use crate::state::{decode, AirportConfig, StateIndex, StateSpace};
use crate::transition::{Decision, TransitionModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub threshold: u32,
}

impl ThresholdParams {
    pub fn new(threshold: u32, config: &AirportConfig) -> Result<Self> {
        let max = config.taxiway_len + config.queue_capacity;
        if threshold == 0 || threshold > max {
            return Err(Error::InvalidArgument(format!("threshold {threshold} outside [1, {max}]")));
        }
        Ok(ThresholdParams { threshold })
    }
}

fn check_layout(space: &StateSpace, config: &AirportConfig) -> Result<()> {
    if config.ramps.len() == 2 && !space.has_turn() {
        return Err(Error::InvalidArgument(
            "the threshold policy alternates ramps and needs a model with the turn bit".into(),
        ));
    }
    Ok(())
}

fn decide_slot(space: &StateSpace, config: &AirportConfig, slot: usize, th: u32) -> Decision {
    if space.n_ac(slot) >= th {
        return Decision::Hold;
    }
    let ramp = if space.has_turn() { space.turn(slot) as usize } else { 0 };
    let entry = config.ramps[ramp].entry_sample;
    if space.occupied(slot, entry) {
        Decision::Hold
    } else {
        Decision::clear(ramp)
    }
}

/// Clear the ramp holding the turn iff `N_ac < Th` and its entry sample is free.
pub fn threshold_decide(idx: StateIndex, th: ThresholdParams, config: &AirportConfig) -> Result<Decision> {
    let space = StateSpace::new(config)?;
    check_layout(&space, config)?;
    decode(idx, config)?;
    let slot = space.slot_of(idx).ok_or(Error::IndexOutOfRange(idx.0))?;
    Ok(decide_slot(&space, config, slot, th.threshold))
}

/// Threshold decisions for every state slot of `model`.
pub fn threshold_policy(model: &TransitionModel, th: ThresholdParams) -> Result<Vec<Decision>> {
    let space = model.space();
    check_layout(space, model.config())?;
    Ok((0..space.len()).map(|s| decide_slot(space, model.config(), s, th.threshold)).collect())
}

#[derive(Clone, Debug)]
pub struct ThresholdEvaluation {
    pub threshold: u32,
    pub metrics: StationaryMetrics,
    pub measure: OccupationMeasure,
    /// Largest `N_ac` over states reachable from the empty surface.
    pub max_reachable_n_ac: u32,
    pub residual: f64,
}

/// Stationary metrics of the closed loop started from the empty surface.
pub fn evaluate_threshold_chain(
    model: &TransitionModel,
    th: ThresholdParams,
    beta: CostParams,
) -> Result<ThresholdEvaluation> {
    let policy = threshold_policy(model, th)?;
    let empty = model.space().empty_slot();
    let st = stationary_from(model, &policy, empty, 1e-13, 5_000_000)?;
    let measure = OccupationMeasure::from_policy(model, &policy, &st.dist);
    let metrics = stationary_metrics(&measure, model, beta);
    let max_reachable_n_ac =
        reachable_from(model, &policy, empty).into_iter().map(|s| model.space().n_ac(s)).max().unwrap_or(0);
    Ok(ThresholdEvaluation { threshold: th.threshold, metrics, measure, max_reachable_n_ac, residual: st.residual })
}

/// Evaluates each threshold (ascending) independently; failures are kept per point.
pub fn threshold_sweep(
    model: &TransitionModel,
    thresholds: &[u32],
    beta: CostParams,
) -> Result<Vec<(u32, Result<ThresholdEvaluation>)>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("empty threshold list".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("thresholds must be strictly ascending".into()));
    }
    check_layout(model.space(), model.config())?;
    Ok(thresholds
        .par_iter()
        .map(|&t| {
            let out = ThresholdParams::new(t, model.config()).and_then(|p| evaluate_threshold_chain(model, p, beta));
            (t, out)
        })
        .collect())
}

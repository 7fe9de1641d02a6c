//! Partial-information control: the surface is observed only through the
//! aircraft count and whether each ramp can currently be cleared. A Bayes
//! filter tracks the state distribution and the most-likely-state (MLS)
//! controller applies the full-state policy to its argmax.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::applied;
use crate::error::{Error, Result};
use crate::optimal::Policy;
use crate::state::{AirportConfig, StateIndex, StateSpace};
use crate::transition::{Decision, TransitionModel};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    /// Aircraft on the taxiway plus the runway buffer.
    pub n_ac: u32,
    /// Bit `r` set iff ramp `r` can be cleared now.
    pub ramp_free: u8,
}

fn observe_slot(space: &StateSpace, config: &AirportConfig, slot: usize) -> Observation {
    let mut ramp_free = 0u8;
    for (r, ramp) in config.ramps.iter().enumerate() {
        let turn_ok = !space.has_turn() || space.turn(slot) as usize == r;
        if turn_ok && !space.occupied(slot, ramp.entry_sample) {
            ramp_free |= 1 << r;
        }
    }
    Observation { n_ac: space.n_ac(slot), ramp_free }
}

pub fn observe(idx: StateIndex, config: &AirportConfig) -> Result<Observation> {
    let space = StateSpace::new(config)?;
    let slot = space.slot_of(idx).ok_or(Error::IndexOutOfRange(idx.0))?;
    Ok(observe_slot(&space, config, slot))
}

/// Width in bits of the count field.
fn count_bits(config: &AirportConfig) -> u32 {
    let max = config.taxiway_len + config.queue_capacity;
    32 - max.leading_zeros()
}

/// `n_ac` and the ramp bits concatenated, ramp bits least significant.
pub fn observation_index(o: &Observation, config: &AirportConfig) -> Result<u32> {
    let ramps = config.ramps.len() as u32;
    let max = config.taxiway_len + config.queue_capacity;
    if o.n_ac > max {
        return Err(Error::InvalidArgument(format!("n_ac {} exceeds {max}", o.n_ac)));
    }
    if u32::from(o.ramp_free) >> ramps != 0 {
        return Err(Error::InvalidArgument(format!("ramp bits {:#b} exceed {ramps} ramps", o.ramp_free)));
    }
    debug_assert!(count_bits(config) + ramps <= 32);
    Ok(o.n_ac << ramps | u32::from(o.ramp_free))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Aircraft count and ramp availability.
    Surface,
    /// Every state is its own observation.
    Identity,
}

/// Deterministic observation channel: `p(o | j) = 1` iff `o = code[j]`.
#[derive(Clone, Debug)]
pub struct ObservationModel {
    channel: Channel,
    code: Vec<u32>,
    consistent: BTreeMap<u32, Vec<u32>>,
}

impl ObservationModel {
    pub fn new(model: &TransitionModel, channel: Channel) -> Result<Self> {
        let space = model.space();
        let config = model.config();
        let code = (0..space.len())
            .map(|s| match channel {
                Channel::Surface => observation_index(&observe_slot(space, config, s), config),
                Channel::Identity => Ok(space.index_of(s).0),
            })
            .collect::<Result<Vec<u32>>>()?;
        let mut consistent: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (s, &c) in code.iter().enumerate() {
            consistent.entry(c).or_default().push(s as u32);
        }
        Ok(ObservationModel { channel, code, consistent })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Observation code emitted in `slot`.
    #[inline]
    pub fn code(&self, slot: usize) -> u32 {
        self.code[slot]
    }

    pub fn probability(&self, o: u32, slot: usize) -> f64 {
        if self.code[slot] == o {
            1.0
        } else {
            0.0
        }
    }

    /// Slots that emit `o`, ascending.
    pub fn consistent_states(&self, o: u32) -> &[u32] {
        self.consistent.get(&o).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Distinct observation codes, ascending.
    pub fn observations(&self) -> impl Iterator<Item = u32> + '_ {
        self.consistent.keys().copied()
    }
}

pub fn observation_matrix(model: &TransitionModel) -> Result<ObservationModel> {
    ObservationModel::new(model, Channel::Surface)
}

/// Dense distribution over state slots with its support tracked.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    b: Vec<f64>,
    support: Vec<u32>,
}

impl BeliefState {
    pub fn indicator(num_states: usize, slot: usize) -> Self {
        let mut b = vec![0.0; num_states];
        b[slot] = 1.0;
        BeliefState { b, support: vec![slot as u32] }
    }

    /// Uniform over `slots` (ascending, nonempty).
    pub fn uniform(num_states: usize, slots: &[u32]) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidArgument("uniform belief over an empty set".into()));
        }
        let mut b = vec![0.0; num_states];
        let w = 1.0 / slots.len() as f64;
        for &s in slots {
            b[s as usize] = w;
        }
        Ok(BeliefState { b, support: slots.to_vec() })
    }

    pub fn from_dense(b: Vec<f64>) -> Result<Self> {
        if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument("belief entries must be finite and nonnegative".into()));
        }
        let total: f64 = b.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("belief sums to {total}")));
        }
        let support = b.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i as u32).collect();
        Ok(BeliefState { b, support })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.b
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.b[slot]
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|&s| self.b[s as usize]).sum()
    }

    /// Highest-probability slot; ties go to the lowest state index.
    pub fn argmax(&self) -> usize {
        let mut best = self.support[0] as usize;
        for &s in &self.support[1..] {
            if self.b[s as usize] > self.b[best] {
                best = s as usize;
            }
        }
        best
    }
}

/// Bayes update after taking `k` and then seeing observation code `o`.
/// States in the support where `k` is infeasible propagate under Hold.
pub fn belief_update(
    b: &BeliefState,
    k: Decision,
    o: u32,
    model: &TransitionModel,
    obs: &ObservationModel,
) -> Result<BeliefState> {
    let mut next = vec![0.0; b.b.len()];
    let mut support = Vec::new();
    for &i in &b.support {
        let bi = b.b[i as usize];
        let (cols, probs) = model.row(i as usize, applied(model, i as usize, k)).expect("feasible");
        for (&j, &p) in cols.iter().zip(probs) {
            if obs.code(j as usize) != o {
                continue;
            }
            if next[j as usize] == 0.0 {
                support.push(j);
            }
            next[j as usize] += p * bi;
        }
    }
    let total: f64 = support.iter().map(|&j| next[j as usize]).sum();
    if total <= 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    support.sort_unstable();
    for &j in &support {
        next[j as usize] /= total;
    }
    Ok(BeliefState { b: next, support })
}

/// MLS decision and the slot it was read from. Falls back to Hold when the
/// decision is infeasible in every state of the support.
pub fn mls_decide(b: &BeliefState, policy: &Policy, model: &TransitionModel) -> (Decision, usize) {
    let slot = b.argmax();
    let k = policy.decision(slot);
    if k != Decision::Hold && !b.support.iter().any(|&s| model.is_feasible(s as usize, k)) {
        return (Decision::Hold, slot);
    }
    (k, slot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "state")]
pub enum InitialBelief {
    /// Indicator on the empty surface.
    Empty,
    /// Indicator on a given state index.
    State(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub observation_index: u32,
    pub mls_state: u32,
    pub decision: u8,
}

pub fn write_trajectory<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Stateful MLS controller for one trajectory.
#[derive(Clone, Debug)]
pub struct MlsController<'a> {
    model: &'a TransitionModel,
    obs: &'a ObservationModel,
    policy: &'a Policy,
    initial: InitialBelief,
    belief: BeliefState,
    last: Option<(Decision, usize)>,
    recoveries: u64,
    log: Option<Vec<TrajectoryRow>>,
    t: u64,
}

impl<'a> MlsController<'a> {
    pub fn new(
        model: &'a TransitionModel,
        obs: &'a ObservationModel,
        policy: &'a Policy,
        initial: InitialBelief,
    ) -> Result<Self> {
        let belief = Self::initial_belief(model, &initial)?;
        Ok(MlsController { model, obs, policy, initial, belief, last: None, recoveries: 0, log: None, t: 0 })
    }

    fn initial_belief(model: &TransitionModel, initial: &InitialBelief) -> Result<BeliefState> {
        let slot = match initial {
            InitialBelief::Empty => model.space().empty_slot(),
            InitialBelief::State(i) => model.slot_of(StateIndex(*i))?,
        };
        Ok(BeliefState::indicator(model.num_states(), slot))
    }

    /// Record `(t, observation_index, mls_state, decision)` for every decision.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn reset(&mut self) {
        self.belief = Self::initial_belief(self.model, &self.initial).expect("validated at construction");
        self.last = None;
        self.recoveries = 0;
        self.t = 0;
        if let Some(log) = &mut self.log {
            log.clear();
        }
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    /// Times the filter was reset after an impossible observation.
    pub fn recoveries(&self) -> u64 {
        self.recoveries
    }

    pub fn log(&self) -> Option<&[TrajectoryRow]> {
        self.log.as_deref()
    }

    pub fn decide(&mut self) -> Decision {
        let (k, slot) = mls_decide(&self.belief, self.policy, self.model);
        self.last = Some((k, slot));
        k
    }

    /// Absorbs the observation emitted by the true state after the step.
    /// An impossible observation restarts the filter uniformly over the
    /// states consistent with it.
    pub fn observe(&mut self, o: u32) -> Result<()> {
        let (k, slot) = self.last.take().unwrap_or((Decision::Hold, self.belief.argmax()));
        if let Some(log) = &mut self.log {
            log.push(TrajectoryRow {
                t: self.t,
                observation_index: o,
                mls_state: self.model.index_of(slot).0,
                decision: k.code(),
            });
        }
        self.t += 1;
        self.belief = match belief_update(&self.belief, k, o, self.model, self.obs) {
            Ok(b) => b,
            Err(Error::ZeroLikelihood) => {
                self.recoveries += 1;
                BeliefState::uniform(self.model.num_states(), self.obs.consistent_states(o))?
            }
            Err(e) => return Err(e),
        };
        Ok(())
    }
}

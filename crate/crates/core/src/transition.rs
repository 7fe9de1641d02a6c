//! Sparse transition kernel P(j | i, k).
//!
//! One time step is the composition of three kinds of sub-transitions,
//! applied in this order:
//!
//! 1. take-offs: `min(queue, X1 + X2)` aircraft leave the buffer, with
//!    `X1 ~ Bernoulli(c1)` and `X2 ~ Bernoulli(c2)` independent;
//! 2. clearance: a decided clearance puts an aircraft on the ramp's entry
//!    sample (the turn bit flips under alternation);
//! 3. moves: samples are scanned from the runway end backwards and each
//!    aircraft advances with probability `m` when the next sample (or the
//!    buffer, from sample N) is free at that point of the scan.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{AirportConfig, StateIndex, StateSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Decision {
    Hold = 0,
    ClearRamp1 = 1,
    ClearRamp2 = 2,
}

impl Decision {
    pub const ALL: [Decision; 3] = [Decision::Hold, Decision::ClearRamp1, Decision::ClearRamp2];

    pub fn from_u8(v: u8) -> Option<Decision> {
        Decision::ALL.get(v as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based ramp position cleared by this decision.
    pub fn ramp(self) -> Option<usize> {
        match self {
            Decision::Hold => None,
            Decision::ClearRamp1 => Some(0),
            Decision::ClearRamp2 => Some(1),
        }
    }

    pub fn clear(ramp: usize) -> Decision {
        match ramp {
            0 => Decision::ClearRamp1,
            1 => Decision::ClearRamp2,
            _ => panic!("no ramp {ramp}"),
        }
    }

    pub fn is_clear(self) -> bool {
        self != Decision::Hold
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Hold => "hold",
            Decision::ClearRamp1 => "clear_ramp1",
            Decision::ClearRamp2 => "clear_ramp2",
        })
    }
}

/// Distribution of the number of take-offs (0, 1 or 2) in one step.
pub fn takeoff_distribution(queue: u32, c1: f64, c2: f64) -> Result<[f64; 3]> {
    for (name, value) in [("c1", c1), ("c2", c2)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability { name, value });
        }
    }
    let none = (1.0 - c1) * (1.0 - c2);
    let one = c1 * (1.0 - c2) + c2 * (1.0 - c1);
    let both = c1 * c2;
    Ok(match queue {
        0 => [1.0, 0.0, 0.0],
        1 => [none, one + both, 0.0],
        _ => [none, one, both],
    })
}

/// Sparse kernel in compressed-row form; row `slot * K + k`.
#[derive(Clone, Debug)]
pub struct TransitionModel {
    config: AirportConfig,
    space: StateSpace,
    num_decisions: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
    feasible: Vec<u8>,
    expected_takeoffs: Vec<f64>,
}

impl TransitionModel {
    pub fn config(&self) -> &AirportConfig {
        &self.config
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    /// Decisions defined for this airport (Hold plus one per ramp).
    pub fn decisions(&self) -> &'static [Decision] {
        &Decision::ALL[..self.num_decisions]
    }

    pub fn num_decisions(&self) -> usize {
        self.num_decisions
    }

    pub fn nonzeros(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_feasible(&self, slot: usize, k: Decision) -> bool {
        self.feasible[slot] >> k.code() & 1 == 1
    }

    pub fn feasible_decisions(&self, slot: usize) -> impl Iterator<Item = Decision> + '_ {
        self.decisions().iter().copied().filter(move |&k| self.is_feasible(slot, k))
    }

    /// Successor slots and probabilities, `None` when `k` is infeasible.
    #[inline]
    pub fn row(&self, slot: usize, k: Decision) -> Option<(&[u32], &[f64])> {
        if !self.is_feasible(slot, k) {
            return None;
        }
        let r = slot * self.num_decisions + k.code() as usize;
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        Some((&self.cols[a..b], &self.probs[a..b]))
    }

    /// Expected take-offs during a step that starts in `slot`.
    #[inline]
    pub fn expected_takeoffs(&self, slot: usize) -> f64 {
        self.expected_takeoffs[self.space.queue(slot) as usize]
    }

    /// Inverse-CDF draw of the successor for a uniform `u` in [0, 1).
    pub fn sample_next(&self, slot: usize, k: Decision, u: f64) -> Option<usize> {
        let (cols, probs) = self.row(slot, k)?;
        let mut acc = 0.0;
        for (&j, &p) in cols.iter().zip(probs) {
            acc += p;
            if u < acc {
                return Some(j as usize);
            }
        }
        cols.last().map(|&j| j as usize)
    }

    pub fn slot_of(&self, idx: StateIndex) -> Result<usize> {
        self.space.slot_of(idx).ok_or(Error::IndexOutOfRange(idx.0))
    }

    pub fn index_of(&self, slot: usize) -> StateIndex {
        self.space.index_of(slot)
    }

    /// Writes `i,k,j,p` rows ordered by state, decision, successor.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "k", "j", "p"])?;
        for slot in 0..self.num_states() {
            let i = self.index_of(slot).0.to_string();
            for k in self.feasible_decisions(slot) {
                let (cols, probs) = self.row(slot, k).expect("feasible");
                for (&j, &p) in cols.iter().zip(probs) {
                    w.write_record([
                        i.as_str(),
                        &k.code().to_string(),
                        &self.index_of(j as usize).0.to_string(),
                        &p.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Ramp `r` can be cleared from `slot`: entry sample free and, under
/// alternation, it is that ramp's turn.
pub fn clearance_feasible(config: &AirportConfig, space: &StateSpace, slot: usize, ramp: usize) -> bool {
    let Some(spec) = config.ramps.get(ramp) else {
        return false;
    };
    if space.occupied(slot, spec.entry_sample) {
        return false;
    }
    !space.has_turn() || space.turn(slot) as usize == ramp
}

pub fn build_transitions(config: &AirportConfig) -> Result<TransitionModel> {
    config.validate()?;
    let space = StateSpace::new(config)?;
    let k_count = 1 + config.ramps.len();
    let (c1, c2, m) = (config.clear_prob_1, config.clear_prob_2, config.move_prob);
    let takeoffs: Vec<[f64; 3]> =
        (0..=config.queue_capacity).map(|q| takeoff_distribution(q, c1, c2)).collect::<Result<_>>()?;
    let expected_takeoffs = takeoffs.iter().map(|d| d[1] + 2.0 * d[2]).collect();

    let mut row_ptr = Vec::with_capacity(space.len() * k_count + 1);
    let mut cols = Vec::new();
    let mut probs = Vec::new();
    let mut feasible = vec![0u8; space.len()];
    row_ptr.push(0);

    let mut branches: Vec<(u32, u32, f64)> = Vec::new();
    let mut next: Vec<(u32, u32, f64)> = Vec::new();
    let mut succ: Vec<(u32, f64)> = Vec::new();

    for (slot, bits) in feasible.iter_mut().enumerate() {
        let mask = space.mask(slot);
        let queue = space.queue(slot);
        let turn = space.turn(slot);
        for k in &Decision::ALL[..k_count] {
            let cleared = match k.ramp() {
                None => Some((mask, turn)),
                Some(r) if clearance_feasible(config, &space, slot, r) => {
                    let bit = space.sample_bit(config.ramps[r].entry_sample);
                    Some((mask | bit, if space.has_turn() { turn ^ 1 } else { 0 }))
                }
                Some(_) => None,
            };
            let Some((mask1, turn1)) = cleared else {
                row_ptr.push(cols.len());
                continue;
            };
            *bits |= 1 << k.code();

            branches.clear();
            for (t, &p) in takeoffs[queue as usize].iter().enumerate() {
                if p > 0.0 {
                    branches.push((mask1, queue - t as u32, p));
                }
            }
            for s in (1..=space.taxiway_len()).rev() {
                let bit = space.sample_bit(s);
                next.clear();
                for &(mk, q, p) in &branches {
                    if mk & bit == 0 {
                        next.push((mk, q, p));
                        continue;
                    }
                    let moved = if s == space.taxiway_len() {
                        (q < space.queue_capacity()).then_some((mk & !bit, q + 1))
                    } else {
                        let dest = bit >> 1;
                        (mk & dest == 0).then_some(((mk & !bit) | dest, q))
                    };
                    match moved {
                        Some((mk2, q2)) => {
                            if m > 0.0 {
                                next.push((mk2, q2, p * m));
                            }
                            if m < 1.0 {
                                next.push((mk, q, p * (1.0 - m)));
                            }
                        }
                        None => next.push((mk, q, p)),
                    }
                }
                std::mem::swap(&mut branches, &mut next);
            }

            succ.clear();
            succ.extend(branches.iter().map(|&(mk, q, p)| (space.compose(turn1, mk, q) as u32, p)));
            succ.sort_by_key(|&(j, _)| j);
            let mut iter = succ.iter().peekable();
            while let Some(&(j, mut p)) = iter.next() {
                while let Some(&&(j2, p2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    p += p2;
                    iter.next();
                }
                cols.push(j);
                probs.push(p);
            }
            row_ptr.push(cols.len());
        }
    }

    Ok(TransitionModel {
        config: config.clone(),
        space,
        num_decisions: k_count,
        row_ptr,
        cols,
        probs,
        feasible,
        expected_takeoffs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum { state: StateIndex, decision: Decision, sum: f64 },
    NonPositive { state: StateIndex, decision: Decision, p: f64 },
    BadSuccessor { state: StateIndex, decision: Decision, successor: u32 },
    CountJump { state: StateIndex, decision: Decision, successor: StateIndex, delta: i64 },
    FeasibilityMismatch { state: StateIndex, decision: Decision },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowSum { state, decision, sum } => {
                write!(f, "row ({state}, {decision}) sums to {sum}")
            }
            Violation::NonPositive { state, decision, p } => {
                write!(f, "row ({state}, {decision}) stores probability {p}")
            }
            Violation::BadSuccessor { state, decision, successor } => {
                write!(f, "row ({state}, {decision}) points at slot {successor}")
            }
            Violation::CountJump { state, decision, successor, delta } => {
                write!(f, "({state}, {decision}) -> {successor} changes N_ac by {delta}")
            }
            Violation::FeasibilityMismatch { state, decision } => {
                write!(f, "feasibility of ({state}, {decision}) disagrees with the clearance rule")
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub states: usize,
    pub feasible_pairs: usize,
    pub nonzeros: usize,
    #[serde(serialize_with = "violations_as_strings")]
    pub violations: Vec<Violation>,
}

fn violations_as_strings<S: serde::Serializer>(v: &[Violation], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl KernelReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const ROW_SUM_TOL: f64 = 1e-12;

pub fn validate_kernel(model: &TransitionModel) -> KernelReport {
    let space = model.space();
    let mut violations = Vec::new();
    let mut feasible_pairs = 0;
    for slot in 0..space.len() {
        let state = space.index_of(slot);
        for &k in model.decisions() {
            let expect = match k.ramp() {
                None => true,
                Some(r) => clearance_feasible(model.config(), space, slot, r),
            };
            if expect != model.is_feasible(slot, k) {
                violations.push(Violation::FeasibilityMismatch { state, decision: k });
            }
            let Some((cols, probs)) = model.row(slot, k) else {
                continue;
            };
            feasible_pairs += 1;
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum { state, decision: k, sum });
            }
            let before = space.n_ac(slot) as i64;
            for (&j, &p) in cols.iter().zip(probs) {
                if !(p > 0.0 && p.is_finite()) {
                    violations.push(Violation::NonPositive { state, decision: k, p });
                }
                if j as usize >= space.len() {
                    violations.push(Violation::BadSuccessor { state, decision: k, successor: j });
                    continue;
                }
                let delta = space.n_ac(j as usize) as i64 - before;
                if !(-2..=1).contains(&delta) {
                    violations.push(Violation::CountJump {
                        state,
                        decision: k,
                        successor: space.index_of(j as usize),
                        delta,
                    });
                }
            }
        }
    }
    KernelReport { states: space.len(), feasible_pairs, nonzeros: model.nonzeros(), violations }
}

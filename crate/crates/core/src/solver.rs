//! Average-cost dynamic programming over the transition kernel.
//!
//! The occupation-measure linear program
//!
//! ```text
//! min  sum_ik c_ik y_ik
//! s.t. sum_k y_jk - sum_ik p(j|ik) y_ik = 0   for every j
//!      sum_ik y_ik = 1,  y >= 0
//! ```
//!
//! has the dual `max g  s.t.  g + h_i - sum_j p(j|ik) h_j <= c_ik`. Relative
//! value iteration on the aperiodic transform `tau I + (1 - tau) P` produces
//! bias vectors `h`; for any `h`, `min_ik (c_ik + P h - h)` is a feasible dual
//! value and so a lower bound on the LP optimum, while every recurrent class of
//! the greedy policy costs at most `max_i (T h - h)_i`. Iteration stops once
//! the two bounds meet.

use crate::error::{Error, Result};
use crate::transition::{Decision, TransitionModel};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Stop when the bound span is below `tol * max(1, |gain|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Aperiodicity weight of the self-loop transform.
    pub tau: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 2_000_000, tau: 0.1 }
    }
}

/// Per-step cost `state_cost[i] + decision_cost[k]`.
#[derive(Clone, Debug)]
pub struct CostModel<'a> {
    pub state_cost: &'a [f64],
    pub decision_cost: [f64; 3],
}

impl CostModel<'_> {
    #[inline]
    fn at(&self, slot: usize, k: Decision) -> f64 {
        self.state_cost[slot] + self.decision_cost[k.code() as usize]
    }
}

#[derive(Clone, Debug)]
pub struct ValueSolution {
    /// Relative values in the untransformed scaling (LP dual variables).
    pub bias: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub greedy: Vec<Decision>,
    pub iterations: usize,
}

/// Ties within this relative margin go to Hold, then the lowest ramp.
const TIE_TOL: f64 = 1e-12;

/// Greedy decision for `slot` against values `h` (untransformed scaling),
/// returning the decision and its one-step value `c + P h`.
pub fn greedy_decision(model: &TransitionModel, cost: &CostModel, h: &[f64], slot: usize) -> (Decision, f64) {
    let mut best: Option<(Decision, f64)> = None;
    for k in model.feasible_decisions(slot) {
        let (cols, probs) = model.row(slot, k).expect("feasible");
        let ev: f64 = cols.iter().zip(probs).map(|(&j, &p)| p * h[j as usize]).sum();
        let q = cost.at(slot, k) + ev;
        match best {
            Some((_, b)) if q >= b - TIE_TOL * b.abs().max(1.0) => {}
            _ => best = Some((k, q)),
        }
    }
    best.expect("hold is always feasible")
}

pub fn relative_value_iteration(
    model: &TransitionModel,
    cost: &CostModel,
    warm_start: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<ValueSolution> {
    let n = model.num_states();
    if cost.state_cost.len() != n {
        return Err(Error::InvalidArgument("cost vector length mismatch".into()));
    }
    if !(opts.tau > 0.0 && opts.tau < 1.0) {
        return Err(Error::InvalidArgument("tau must lie in (0, 1)".into()));
    }
    let scale = 1.0 - opts.tau;
    // Internally h lives in the transformed scaling: h_orig = (1 - tau) h.
    let mut h: Vec<f64> = match warm_start {
        Some(w) if w.len() == n => w.iter().map(|x| x / scale).collect(),
        _ => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let mut orig = vec![0.0; n];
    let reference = model.space().empty_slot();

    for it in 1..=opts.max_iter {
        for (o, x) in orig.iter_mut().zip(&h) {
            *o = x * scale;
        }
        let mut lower = f64::INFINITY;
        let mut upper = f64::NEG_INFINITY;
        for slot in 0..n {
            let (_, q) = greedy_decision(model, cost, &orig, slot);
            // (T h)_i - h_i = min_k c_ik + (1 - tau) (P h - h)_i
            let diff = q - orig[slot];
            lower = lower.min(diff);
            upper = upper.max(diff);
            next[slot] = h[slot] + diff;
        }
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Numerical("relative values diverged".into()));
        }
        let shift = next[reference];
        for (x, y) in h.iter_mut().zip(&next) {
            *x = y - shift;
        }
        if upper - lower <= opts.tol * lower.abs().max(1.0) || it == opts.max_iter {
            if upper - lower > opts.tol * lower.abs().max(1.0) {
                return Err(Error::Numerical(format!(
                    "value iteration stalled with bound span {:.3e} after {it} iterations",
                    upper - lower
                )));
            }
            let bias: Vec<f64> = h.iter().map(|x| x * scale).collect();
            let greedy = (0..n).map(|s| greedy_decision(model, cost, &bias, s).0).collect();
            return Ok(ValueSolution { bias, lower, upper, greedy, iterations: it });
        }
    }
    unreachable!("loop returns on the final iteration")
}

/// Lower bound `min_ik (c_ik + P h - h)` certified by the dual values `h`.
pub fn dual_bound(model: &TransitionModel, cost: &CostModel, h: &[f64]) -> f64 {
    (0..model.num_states())
        .map(|s| {
            model
                .feasible_decisions(s)
                .map(|k| {
                    let (cols, probs) = model.row(s, k).expect("feasible");
                    let ev: f64 = cols.iter().zip(probs).map(|(&j, &p)| p * h[j as usize]).sum();
                    cost.at(s, k) + ev - h[s]
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

//! Closed-loop Markov chains obtained by fixing a deterministic policy.

use crate::error::{Error, Result};
use crate::transition::{Decision, TransitionModel};

/// Self-loop weight mixed into the chain so periodic classes still converge.
/// The stationary distribution is unchanged by this damping.
const LAZINESS: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Stationary {
    pub dist: Vec<f64>,
    pub iterations: usize,
    /// L1 norm of `pi P - pi` for the undamped chain.
    pub residual: f64,
}

/// Decision actually applied in `slot`: infeasible choices fall back to Hold.
#[inline]
pub fn applied(model: &TransitionModel, slot: usize, k: Decision) -> Decision {
    if model.is_feasible(slot, k) {
        k
    } else {
        Decision::Hold
    }
}

/// One step of distribution propagation, `out = dist P_policy`.
pub fn propagate(model: &TransitionModel, policy: &[Decision], dist: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (slot, &mass) in dist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let (cols, probs) = model.row(slot, applied(model, slot, policy[slot])).expect("hold is always feasible");
        for (&j, &p) in cols.iter().zip(probs) {
            out[j as usize] += mass * p;
        }
    }
}

/// Limiting distribution of the closed-loop chain started in `start`,
/// found by damped power iteration until the residual is below `tol`.
pub fn stationary_from(
    model: &TransitionModel,
    policy: &[Decision],
    start: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Stationary> {
    let n = model.num_states();
    if policy.len() != n {
        return Err(Error::InvalidArgument(format!("policy covers {} states, model has {n}", policy.len())));
    }
    let mut dist = vec![0.0; n];
    dist[start] = 1.0;
    let mut next = vec![0.0; n];
    for it in 1..=max_iter {
        propagate(model, policy, &dist, &mut next);
        let mut residual = 0.0;
        for (d, x) in dist.iter_mut().zip(next.iter_mut()) {
            residual += (*x - *d).abs();
            *d = LAZINESS * *d + (1.0 - LAZINESS) * *x;
        }
        if residual <= tol {
            let total: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|x| *x /= total);
            return Ok(Stationary { dist, iterations: it, residual });
        }
    }
    Err(Error::Numerical(format!("stationary distribution did not reach residual {tol:.1e} in {max_iter} iterations")))
}

/// States reachable from `start` under the policy, in ascending order.
pub fn reachable_from(model: &TransitionModel, policy: &[Decision], start: usize) -> Vec<usize> {
    let mut seen = vec![false; model.num_states()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        let (cols, _) = model.row(s, applied(model, s, policy[s])).expect("feasible");
        for &j in cols {
            if !seen[j as usize] {
                seen[j as usize] = true;
                stack.push(j as usize);
            }
        }
    }
    seen.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

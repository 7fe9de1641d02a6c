//! Full-state-feedback optimal clearance policies.
//!
//! Each state costs `N_ac + beta * [queue empty]`. The optimal stationary
//! occupation measure is found through the average-cost dual (see
//! [`crate::solver`]); under statistical fairness the equal-service
//! constraint is priced by a Lagrange multiplier located by bisection, and
//! the optimum is the mixture of the two bracketing deterministic solutions
//! that balances ramp service exactly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::{applied, reachable_from, stationary_from};
use crate::error::{Error, Result};
use crate::solver::{dual_bound, greedy_decision, relative_value_iteration, CostModel, SolverOptions};
use crate::state::{AirportConfig, Fairness, StateIndex, StateSpace};
use crate::transition::{Decision, TransitionModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Cost of one idle runway minute in aircraft-minutes.
    pub beta: f64,
}

impl CostParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta {beta} must be finite and nonnegative")));
        }
        Ok(CostParams { beta })
    }
}

/// `N_ac(i) + beta * [queue(i) = 0]`.
pub fn state_cost(idx: StateIndex, beta: CostParams, config: &AirportConfig) -> Result<f64> {
    let space = StateSpace::new(config)?;
    let slot = space.slot_of(idx).ok_or(Error::IndexOutOfRange(idx.0))?;
    Ok(slot_cost(&space, slot, beta.beta))
}

#[inline]
fn slot_cost(space: &StateSpace, slot: usize, beta: f64) -> f64 {
    let idle = if space.queue(slot) == 0 { beta } else { 0.0 };
    space.n_ac(slot) as f64 + idle
}

pub fn cost_vector(model: &TransitionModel, beta: f64) -> Vec<f64> {
    let space = model.space();
    (0..space.len()).map(|s| slot_cost(space, s, beta)).collect()
}

/// Stationary probability of each (state, decision) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationMeasure {
    num_decisions: usize,
    y: Vec<f64>,
}

impl OccupationMeasure {
    pub fn zeros(num_states: usize, num_decisions: usize) -> Self {
        OccupationMeasure { num_decisions, y: vec![0.0; num_states * num_decisions] }
    }

    /// Measure of a deterministic policy with state distribution `dist`.
    pub fn from_policy(model: &TransitionModel, policy: &[Decision], dist: &[f64]) -> Self {
        let mut out = Self::zeros(model.num_states(), model.num_decisions());
        for (slot, &p) in dist.iter().enumerate() {
            if p != 0.0 {
                out.set(slot, applied(model, slot, policy[slot]), p);
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.y.len() / self.num_decisions
    }

    pub fn num_decisions(&self) -> usize {
        self.num_decisions
    }

    #[inline]
    pub fn get(&self, slot: usize, k: Decision) -> f64 {
        self.y[slot * self.num_decisions + k.code() as usize]
    }

    pub fn set(&mut self, slot: usize, k: Decision, value: f64) {
        self.y[slot * self.num_decisions + k.code() as usize] = value;
    }

    pub fn state_mass(&self, slot: usize) -> f64 {
        self.y[slot * self.num_decisions..(slot + 1) * self.num_decisions].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.y.iter().sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Long-run fraction of steps issuing a clearance to `ramp` (0-based).
    pub fn clear_mass(&self, ramp: usize) -> f64 {
        let k = Decision::clear(ramp).code() as usize;
        if k >= self.num_decisions {
            return 0.0;
        }
        self.y.iter().skip(k).step_by(self.num_decisions).sum()
    }

    /// Ramp-1 minus ramp-2 clearance frequency.
    pub fn imbalance(&self) -> f64 {
        self.clear_mass(0) - self.clear_mass(1)
    }

    /// `weight * a + (1 - weight) * b`.
    pub fn mix(a: &Self, b: &Self, weight: f64) -> Self {
        assert_eq!(a.y.len(), b.y.len());
        OccupationMeasure {
            num_decisions: a.num_decisions,
            y: a.y.iter().zip(&b.y).map(|(x, z)| weight * x + (1.0 - weight) * z).collect(),
        }
    }

    /// Largest violation of `sum_k y_jk = sum_ik p(j|ik) y_ik`.
    pub fn balance_residual(&self, model: &TransitionModel) -> f64 {
        let n = model.num_states();
        let mut inflow = vec![0.0; n];
        for slot in 0..n {
            for k in model.feasible_decisions(slot) {
                let y = self.get(slot, k);
                if y == 0.0 {
                    continue;
                }
                let (cols, probs) = model.row(slot, k).expect("feasible");
                for (&j, &p) in cols.iter().zip(probs) {
                    inflow[j as usize] += y * p;
                }
            }
        }
        (0..n).map(|j| (self.state_mass(j) - inflow[j]).abs()).fold(0.0, f64::max)
    }

    /// Mass placed on infeasible pairs (must be zero).
    pub fn infeasible_mass(&self, model: &TransitionModel) -> f64 {
        (0..model.num_states())
            .flat_map(|s| model.decisions().iter().map(move |&k| (s, k)))
            .filter(|&(s, k)| !model.is_feasible(s, k))
            .map(|(s, k)| self.get(s, k).abs())
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LpOptions {
    pub solver: SolverOptions,
    /// Required relative duality gap.
    pub gap_tol: f64,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
    pub max_bisections: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            solver: SolverOptions::default(),
            gap_tol: 1e-7,
            stationary_tol: 1e-13,
            stationary_max_iter: 5_000_000,
            max_bisections: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub beta: f64,
    pub fairness: Fairness,
    pub measure: OccupationMeasure,
    /// `sum C_i y_ik` of the returned measure.
    pub objective: f64,
    /// Dual lower bound on the LP optimum.
    pub lower_bound: f64,
    /// Dual values (relative state values) used for transient states.
    pub duals: Vec<f64>,
    /// Price of the equal-service constraint (zero unless statistical).
    pub multiplier: f64,
    pub iterations: usize,
    pub solves: usize,
}

impl LpSolution {
    pub fn gap(&self) -> f64 {
        self.objective - self.lower_bound
    }
}

struct Candidate {
    measure: OccupationMeasure,
    bias: Vec<f64>,
    lower: f64,
    iterations: usize,
}

fn solve_priced(
    model: &TransitionModel,
    costs: &[f64],
    multiplier: f64,
    warm: Option<&[f64]>,
    opts: &LpOptions,
) -> Result<Candidate> {
    let cost = CostModel { state_cost: costs, decision_cost: [0.0, multiplier, -multiplier] };
    let vs = relative_value_iteration(model, &cost, warm, &opts.solver)?;
    let start = model.space().empty_slot();
    let st = stationary_from(model, &vs.greedy, start, opts.stationary_tol, opts.stationary_max_iter)?;
    let lower = vs.lower.max(dual_bound(model, &cost, &vs.bias));
    Ok(Candidate {
        measure: OccupationMeasure::from_policy(model, &vs.greedy, &st.dist),
        bias: vs.bias,
        lower,
        iterations: vs.iterations,
    })
}

fn objective(measure: &OccupationMeasure, costs: &[f64]) -> f64 {
    (0..measure.num_states()).map(|s| measure.state_mass(s) * costs[s]).sum()
}

fn check_fairness(model: &TransitionModel, fairness: Fairness) -> Result<()> {
    let has_turn = model.space().has_turn();
    match fairness {
        Fairness::Alternation if !has_turn && model.config().ramps.len() == 2 => {
            Err(Error::InvalidArgument("alternation needs a model built with the turn bit".into()))
        }
        Fairness::Statistical if has_turn => {
            Err(Error::InvalidArgument("statistical fairness needs a model without the turn bit".into()))
        }
        _ => Ok(()),
    }
}

pub fn solve_average_cost_lp(
    model: &TransitionModel,
    beta: CostParams,
    fairness: Fairness,
    warm_start: Option<&[f64]>,
    opts: &LpOptions,
) -> Result<LpSolution> {
    check_fairness(model, fairness)?;
    let costs = cost_vector(model, beta.beta);
    let statistical = fairness == Fairness::Statistical && model.config().ramps.len() == 2;

    let base = solve_priced(model, &costs, 0.0, warm_start, opts)?;
    let mut solves = 1;
    let mut iterations = base.iterations;
    let scale = |v: f64| v.abs().max(1.0);

    if !statistical || base.measure.imbalance().abs() <= 1e-12 {
        let obj = objective(&base.measure, &costs);
        let sol = LpSolution {
            beta: beta.beta,
            fairness,
            objective: obj,
            lower_bound: base.lower,
            measure: base.measure,
            duals: base.bias,
            multiplier: 0.0,
            iterations,
            solves,
        };
        return certify(sol, opts);
    }

    // Imbalance is nonincreasing in the multiplier. Bracket a sign change by
    // doubling, keeping the last solve on the starting side.
    let direction = if base.measure.imbalance() > 0.0 { 1.0 } else { -1.0 };
    let mut near = base;
    let mut lam_near = 0.0;
    let mut step = 1.0;
    let far = loop {
        let lam = direction * step;
        let cand = solve_priced(model, &costs, lam, Some(&near.bias), opts)?;
        solves += 1;
        iterations += cand.iterations;
        if cand.measure.imbalance() * direction <= 0.0 {
            break (cand, lam);
        }
        near = cand;
        lam_near = lam;
        step *= 2.0;
        if step > 1e8 {
            return Err(Error::Infeasible("no multiplier balances ramp service".into()));
        }
    };
    let ((mut pos, mut lam_pos), (mut neg, mut lam_neg)) =
        if direction > 0.0 { ((near, lam_near), far) } else { (far, (near, lam_near)) };

    let mut best: Option<LpSolution> = None;
    for _ in 0..opts.max_bisections {
        let (imb_p, imb_n) = (pos.measure.imbalance(), neg.measure.imbalance());
        let lower = pos.lower.max(neg.lower);
        let (measure, duals, lam) = if imb_p.abs() <= 1e-12 {
            (pos.measure.clone(), pos.bias.clone(), lam_pos)
        } else if imb_n.abs() <= 1e-12 {
            (neg.measure.clone(), neg.bias.clone(), lam_neg)
        } else {
            let w = -imb_n / (imb_p - imb_n);
            let duals = if w >= 0.5 { pos.bias.clone() } else { neg.bias.clone() };
            let lam = if w >= 0.5 { lam_pos } else { lam_neg };
            (OccupationMeasure::mix(&pos.measure, &neg.measure, w), duals, lam)
        };
        let obj = objective(&measure, &costs);
        let sol = LpSolution {
            beta: beta.beta,
            fairness,
            objective: obj,
            lower_bound: lower,
            measure,
            duals,
            multiplier: lam,
            iterations,
            solves,
        };
        if sol.gap() <= opts.gap_tol * scale(obj) {
            return certify(sol, opts);
        }
        best = Some(sol);
        if (lam_neg - lam_pos).abs() <= 1e-13 * scale(lam_pos) {
            break;
        }
        let mid = 0.5 * (lam_pos + lam_neg);
        let warm = if imb_p.abs() < imb_n.abs() { &pos.bias } else { &neg.bias };
        let cand = solve_priced(model, &costs, mid, Some(warm), opts)?;
        solves += 1;
        iterations += cand.iterations;
        if cand.measure.imbalance() > 0.0 {
            pos = cand;
            lam_pos = mid;
        } else {
            neg = cand;
            lam_neg = mid;
        }
    }
    certify(best.expect("at least one bisection step"), opts)
}

fn certify(mut sol: LpSolution, opts: &LpOptions) -> Result<LpSolution> {
    let gap = sol.gap();
    let allowed = opts.gap_tol * sol.objective.abs().max(1.0);
    if gap > allowed {
        return Err(Error::Numerical(format!(
            "duality gap {gap:.3e} above tolerance {allowed:.3e} (objective {}, bound {})",
            sol.objective, sol.lower_bound
        )));
    }
    // A slightly negative gap is rounding noise; report the primal value.
    if gap < 0.0 {
        sol.lower_bound = sol.objective;
    }
    Ok(sol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FullState,
    Threshold,
    Mls,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    /// Decision per state slot.
    pub decisions: Vec<Decision>,
    /// States whose measure row split mass over several decisions.
    pub randomized: Vec<StateIndex>,
    /// Number of states decided by one-step lookahead on the duals.
    pub transient: usize,
}

impl Policy {
    pub fn decision(&self, slot: usize) -> Decision {
        self.decisions[slot]
    }

    /// Writes `state_index,decision` with decision codes 0 = hold,
    /// 1 = clear ramp 1, 2 = clear ramp 2.
    pub fn write_csv<W: Write>(&self, model: &TransitionModel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state_index", "decision"])?;
        for (slot, k) in self.decisions.iter().enumerate() {
            w.write_record([model.index_of(slot).0.to_string(), k.code().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(model: &TransitionModel, input: R, kind: PolicyKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut decisions = vec![Decision::Hold; model.num_states()];
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<u32> {
                rec.get(i)
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad policy row {:?}", rec)))
            };
            let slot = model.slot_of(StateIndex(parse(0)?))?;
            let k = Decision::from_u8(parse(1)? as u8)
                .ok_or_else(|| Error::Parse(format!("bad decision in row {:?}", rec)))?;
            decisions[slot] = k;
        }
        Ok(Policy { kind, decisions, randomized: Vec::new(), transient: 0 })
    }
}

/// Positive-mass threshold for reading decisions off a measure.
pub const MASS_EPS: f64 = 1e-14;

/// Deterministic policy from an optimal measure: the supported decision on
/// recurrent states (Hold, then the lowest ramp, when a row is split) and
/// one-step lookahead on the duals elsewhere.
pub fn extract_policy(solution: &LpSolution, model: &TransitionModel) -> Policy {
    let costs = cost_vector(model, solution.beta);
    let lam = solution.multiplier;
    let cost = CostModel { state_cost: &costs, decision_cost: [0.0, lam, -lam] };
    let y = &solution.measure;
    let mut randomized = Vec::new();
    let mut transient = 0;
    let decisions = (0..model.num_states())
        .map(|slot| {
            let support: Vec<Decision> =
                model.decisions().iter().copied().filter(|&k| y.get(slot, k) > MASS_EPS).collect();
            match support.as_slice() {
                [] => {
                    transient += 1;
                    greedy_decision(model, &cost, &solution.duals, slot).0
                }
                [k] => *k,
                [first, ..] => {
                    randomized.push(model.index_of(slot));
                    *first
                }
            }
        })
        .collect();
    Policy { kind: PolicyKind::FullState, decisions, randomized, transient }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryMetrics {
    /// Mean aircraft on the surface, runway buffer included.
    pub avg_taxiing: f64,
    pub utilization: f64,
    pub expected_cost: f64,
    /// Aircraft per step.
    pub takeoff_rate: f64,
}

pub fn stationary_metrics(y: &OccupationMeasure, model: &TransitionModel, beta: CostParams) -> StationaryMetrics {
    let space = model.space();
    let mut avg = 0.0;
    let mut rate = 0.0;
    let mut cost = 0.0;
    for slot in 0..space.len() {
        let mass = y.state_mass(slot);
        if mass == 0.0 {
            continue;
        }
        avg += mass * space.n_ac(slot) as f64;
        rate += mass * model.expected_takeoffs(slot);
        cost += mass * slot_cost(space, slot, beta.beta);
    }
    let service = model.config().service_rate();
    StationaryMetrics {
        avg_taxiing: avg,
        utilization: if service > 0.0 { rate / service } else { 0.0 },
        expected_cost: cost,
        takeoff_rate: rate,
    }
}

/// Writes `label,utilization,avg_taxiing,expected_cost,takeoff_rate` rows,
/// where the label column is named `label` (beta or threshold).
pub fn write_metrics<W: Write>(label: &str, rows: &[(f64, StationaryMetrics)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([label, "utilization", "avg_taxiing", "expected_cost", "takeoff_rate"])?;
    for (x, m) in rows {
        w.write_record([
            x.to_string(),
            m.utilization.to_string(),
            m.avg_taxiing.to_string(),
            m.expected_cost.to_string(),
            m.takeoff_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-loop measure and metrics of a deterministic policy started empty.
pub fn evaluate_policy(
    model: &TransitionModel,
    decisions: &[Decision],
    beta: CostParams,
    opts: &LpOptions,
) -> Result<(OccupationMeasure, StationaryMetrics)> {
    let st =
        stationary_from(model, decisions, model.space().empty_slot(), opts.stationary_tol, opts.stationary_max_iter)?;
    let y = OccupationMeasure::from_policy(model, decisions, &st.dist);
    let metrics = stationary_metrics(&y, model, beta);
    Ok((y, metrics))
}

/// One point of a beta sweep.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Metrics of the LP optimum.
    pub metrics: StationaryMetrics,
    pub policy: Policy,
    /// Metrics of the extracted deterministic policy run in closed loop; they
    /// differ from `metrics` only when the optimum is randomized.
    pub policy_metrics: StationaryMetrics,
    pub solution: LpSolution,
}

#[derive(Debug)]
pub struct SweepPoint {
    pub beta: f64,
    pub outcome: Result<SweepOutcome>,
}

pub fn solve_point(
    model: &TransitionModel,
    beta: f64,
    fairness: Fairness,
    warm: Option<&[f64]>,
    opts: &LpOptions,
) -> Result<SweepOutcome> {
    let params = CostParams::new(beta)?;
    let solution = solve_average_cost_lp(model, params, fairness, warm, opts)?;
    let metrics = stationary_metrics(&solution.measure, model, params);
    let policy = extract_policy(&solution, model);
    let policy_metrics =
        if policy.randomized.is_empty() { metrics } else { evaluate_policy(model, &policy.decisions, params, opts)?.1 };
    Ok(SweepOutcome { metrics, policy, policy_metrics, solution })
}

/// Solves one LP per beta (ascending), warm-starting each from the previous
/// duals. Failed points are reported in place and the sweep continues.
pub fn pareto_sweep(
    model: &TransitionModel,
    betas: &[f64],
    fairness: Fairness,
    opts: &LpOptions,
) -> Result<Vec<SweepPoint>> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("empty beta list".into()));
    }
    if betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) || betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("betas must be positive and strictly ascending".into()));
    }
    let mut warm: Option<Vec<f64>> = None;
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let outcome = solve_point(model, beta, fairness, warm.as_deref(), opts);
        if let Ok(o) = &outcome {
            warm = Some(o.solution.duals.clone());
        }
        points.push(SweepPoint { beta, outcome });
    }
    Ok(points)
}

/// Distinct (utilization, avg_taxiing) points sorted by utilization, with
/// dominated points removed.
pub fn frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-9 && (a.1 - b.1).abs() <= 1e-9);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let dominated = pts
            .iter()
            .enumerate()
            .any(|(j, q)| j != i && q.0 >= p.0 - 1e-12 && q.1 <= p.1 + 1e-12 && (q.0 > p.0 + 1e-9 || q.1 < p.1 - 1e-9));
        if !dominated {
            out.push(*p);
        }
    }
    out
}

/// Checks that in the closed loop from the empty surface every clearance
/// goes to the ramp holding the turn and every clearance hands the turn over.
pub fn verify_alternation(model: &TransitionModel, decisions: &[Decision]) -> std::result::Result<usize, String> {
    let space = model.space();
    if !space.has_turn() {
        return Err("model has no turn bit".into());
    }
    let reach = reachable_from(model, decisions, space.empty_slot());
    let mut clearances = 0;
    for &slot in &reach {
        let k = applied(model, slot, decisions[slot]);
        let turn = space.turn(slot);
        let (cols, _) = model.row(slot, k).expect("feasible");
        let expected_turn = match k.ramp() {
            Some(r) => {
                clearances += 1;
                if r as u32 != turn {
                    return Err(format!("state {} clears ramp {} out of turn", model.index_of(slot), r + 1));
                }
                turn ^ 1
            }
            None => turn,
        };
        if let Some(&j) = cols.iter().find(|&&j| space.turn(j as usize) != expected_turn) {
            return Err(format!(
                "transition {} -> {} breaks the turn sequence",
                model.index_of(slot),
                model.index_of(j as usize)
            ));
        }
    }
    Ok(clearances)
}

//! Matched-utilization comparison of optimal, MLS and threshold policies.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::belief::{InitialBelief, MlsController, ObservationModel};
use crate::error::{Error, Result};
use crate::optimal::{pareto_sweep, CostParams, LpOptions, Policy, StationaryMetrics};
use crate::sim::{rollout, rollout_table, MlsSim, SimConfig, SimResult};
use crate::state::{AirportConfig, Fairness};
use crate::threshold::{threshold_policy, threshold_sweep, ThresholdParams};
use crate::transition::{build_transitions, TransitionModel};

/// (utilization, avg_taxiing) pairs sorted by utilization; equal
/// utilizations keep the smaller count.
pub fn curve(points: impl IntoIterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.into_iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12);
    pts
}

/// Piecewise-linear value of a sorted curve at `u`; `None` outside its range.
pub fn interpolate(curve: &[(f64, f64)], u: f64) -> Option<f64> {
    let first = curve.first()?;
    let last = curve.last()?;
    if u < first.0 - 1e-12 || u > last.0 + 1e-12 {
        return None;
    }
    let i = curve.partition_point(|p| p.0 < u);
    if i == 0 {
        return Some(first.1);
    }
    if i == curve.len() {
        return Some(last.1);
    }
    let (a, b) = (curve[i - 1], curve[i]);
    if (b.0 - a.0).abs() <= 1e-15 {
        return Some(a.1.min(b.1));
    }
    Some(a.1 + (u - a.0) / (b.0 - a.0) * (b.1 - a.1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub utilization: f64,
    pub avg_taxiing_threshold: f64,
    pub avg_taxiing_optimal: f64,
    pub avg_taxiing_mls: Option<f64>,
    /// `100 * (threshold - optimal) / threshold`.
    pub reduction_percent: f64,
}

/// Rows at every knot of either curve inside their common utilization range.
pub fn compare_curves(
    threshold: &[(f64, f64)],
    optimal: &[(f64, f64)],
    mls: Option<&[(f64, f64)]>,
) -> Result<Vec<ComparisonRow>> {
    let (thr, opt) = (curve(threshold.iter().copied()), curve(optimal.iter().copied()));
    let (Some(t0), Some(o0)) = (thr.first(), opt.first()) else {
        return Err(Error::InvalidArgument("empty policy curve".into()));
    };
    let lo = t0.0.max(o0.0);
    let hi = thr.last().unwrap().0.min(opt.last().unwrap().0);
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "utilization ranges do not overlap (threshold {:.4}..{:.4}, optimal {:.4}..{:.4})",
            t0.0,
            thr.last().unwrap().0,
            o0.0,
            opt.last().unwrap().0
        )));
    }
    let mls = mls.map(|m| curve(m.iter().copied()));
    let mut knots: Vec<f64> = thr.iter().chain(&opt).map(|p| p.0).filter(|&u| u >= lo && u <= hi).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    Ok(knots
        .into_iter()
        .map(|u| {
            let t = interpolate(&thr, u).expect("inside range");
            let o = interpolate(&opt, u).expect("inside range");
            ComparisonRow {
                utilization: u,
                avg_taxiing_threshold: t,
                avg_taxiing_optimal: o,
                avg_taxiing_mls: mls.as_deref().and_then(|m| interpolate(m, u)),
                reduction_percent: if t > 0.0 { 100.0 * (t - o) / t } else { 0.0 },
            }
        })
        .collect())
}

pub fn write_comparison<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "utilization",
        "avg_taxiing_threshold",
        "avg_taxiing_optimal",
        "avg_taxiing_mls",
        "reduction_percent",
    ])?;
    for r in rows {
        w.write_record([
            r.utilization.to_string(),
            r.avg_taxiing_threshold.to_string(),
            r.avg_taxiing_optimal.to_string(),
            r.avg_taxiing_mls.map(|v| v.to_string()).unwrap_or_default(),
            r.reduction_percent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_comparison<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionsRow {
    pub utilization: f64,
    /// kg per minute under the threshold policy.
    pub threshold_kg_per_min: f64,
    pub optimal_kg_per_min: f64,
    pub delta_kg_per_min: f64,
    pub reduction_percent: f64,
}

/// Emissions proportional to aircraft on the surface, `factor` kg per
/// aircraft-minute.
pub fn emissions(rows: &[ComparisonRow], factor: f64) -> Result<Vec<EmissionsRow>> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("emissions factor {factor} must be positive")));
    }
    Ok(rows
        .iter()
        .map(|r| {
            let thr = factor * r.avg_taxiing_threshold;
            let opt = factor * r.avg_taxiing_optimal;
            EmissionsRow {
                utilization: r.utilization,
                threshold_kg_per_min: thr,
                optimal_kg_per_min: opt,
                delta_kg_per_min: factor * (r.avg_taxiing_threshold - r.avg_taxiing_optimal),
                reduction_percent: if thr > 0.0 { 100.0 * (thr - opt) / thr } else { 0.0 },
            }
        })
        .collect())
}

/// Analytic and (optionally) simulated performance of one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    /// `optimal`, `threshold` or `mls`.
    pub policy: String,
    /// Beta for optimal/MLS points, Th for threshold points.
    pub parameter: f64,
    pub beta: f64,
    /// LP (or closed-form chain) metrics of the policy.
    pub analytic: Option<StationaryMetrics>,
    /// Closed-loop metrics of the deterministic table that is simulated;
    /// differs from `analytic` only for randomized optima.
    pub closed_loop: Option<StationaryMetrics>,
    pub simulated_utilization: Option<f64>,
    pub simulated_avg_taxiing: Option<f64>,
    pub simulated_cost: Option<f64>,
    pub simulated_cost_se: Option<f64>,
}

impl PolicyRecord {
    /// Relative gap between simulated and analytic expected cost.
    pub fn cost_discrepancy(&self) -> Option<f64> {
        let a = self.closed_loop?.expected_cost;
        let s = self.simulated_cost?;
        Some(if a.abs() > 0.0 { (s - a).abs() / a.abs() } else { s.abs() })
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub fairness: Fairness,
    pub optimal: Vec<PolicyRecord>,
    pub threshold: Vec<PolicyRecord>,
    pub mls: Vec<PolicyRecord>,
    pub policies: Vec<(f64, Policy)>,
    pub rows: Vec<ComparisonRow>,
    /// Per-point failures, kept so the rest of the run can proceed.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct CompareSetup<'a> {
    pub betas: &'a [f64],
    pub thresholds: &'a [u32],
    /// Cost weight used for threshold expected costs.
    pub threshold_beta: f64,
    pub sim: Option<SimConfig>,
    pub mls: bool,
    pub lp: LpOptions,
}

/// The threshold benchmark always alternates ramps, so it runs on the
/// turn-bit layout whatever the fairness rule of the optimal policy.
pub fn threshold_model(config: &AirportConfig, model: &TransitionModel) -> Result<Option<TransitionModel>> {
    if config.ramps.len() == 2 && !model.space().has_turn() {
        let alt = AirportConfig { fairness: Fairness::Alternation, ..config.clone() };
        return Ok(Some(build_transitions(&alt)?));
    }
    Ok(None)
}

fn simulated(record: &mut PolicyRecord, result: &SimResult) {
    record.simulated_utilization = Some(result.utilization);
    record.simulated_avg_taxiing = Some(result.mean_n_ac);
    record.simulated_cost = Some(result.expected_cost(record.beta));
    record.simulated_cost_se = Some(result.cost_se(record.beta));
}

pub fn compare_policies(model: &TransitionModel, setup: &CompareSetup) -> Result<ComparisonReport> {
    let config = model.config();
    let fairness = config.effective_fairness();
    if setup.betas.is_empty() || setup.thresholds.is_empty() {
        return Err(Error::InvalidArgument("beta and threshold lists must be nonempty".into()));
    }
    let mut failures = Vec::new();
    let mut optimal = Vec::new();
    let mut policies = Vec::new();
    for point in pareto_sweep(model, setup.betas, fairness, &setup.lp)? {
        match point.outcome {
            Ok(o) => {
                let mut rec = PolicyRecord {
                    policy: "optimal".into(),
                    parameter: point.beta,
                    beta: point.beta,
                    analytic: Some(o.metrics),
                    closed_loop: Some(o.policy_metrics),
                    simulated_utilization: None,
                    simulated_avg_taxiing: None,
                    simulated_cost: None,
                    simulated_cost_se: None,
                };
                if let Some(sim) = &setup.sim {
                    simulated(&mut rec, &rollout_table(model, &o.policy.decisions, sim)?);
                }
                optimal.push(rec);
                policies.push((point.beta, o.policy));
            }
            Err(e) => failures.push(format!("optimal beta={}: {e}", point.beta)),
        }
    }

    let alt = threshold_model(config, model)?;
    let tmodel = alt.as_ref().unwrap_or(model);
    let tbeta = CostParams::new(setup.threshold_beta)?;
    let mut threshold = Vec::new();
    for (th, ev) in threshold_sweep(tmodel, setup.thresholds, tbeta)? {
        match ev {
            Ok(ev) => {
                let mut rec = PolicyRecord {
                    policy: "threshold".into(),
                    parameter: f64::from(th),
                    beta: setup.threshold_beta,
                    analytic: Some(ev.metrics),
                    closed_loop: Some(ev.metrics),
                    simulated_utilization: None,
                    simulated_avg_taxiing: None,
                    simulated_cost: None,
                    simulated_cost_se: None,
                };
                if let Some(sim) = &setup.sim {
                    let table = threshold_policy(tmodel, ThresholdParams::new(th, tmodel.config())?)?;
                    simulated(&mut rec, &rollout_table(tmodel, &table, sim)?);
                }
                threshold.push(rec);
            }
            Err(e) => failures.push(format!("threshold Th={th}: {e}")),
        }
    }

    let mut mls = Vec::new();
    if let (true, Some(sim)) = (setup.mls, &setup.sim) {
        let obs = ObservationModel::new(model, crate::belief::Channel::Surface)?;
        for (beta, policy) in &policies {
            let make = |_| -> Result<MlsSim> {
                Ok(MlsSim { inner: MlsController::new(model, &obs, policy, InitialBelief::Empty)?, obs: &obs })
            };
            match rollout(model, make, sim) {
                Ok(res) => {
                    let mut rec = PolicyRecord {
                        policy: "mls".into(),
                        parameter: *beta,
                        beta: *beta,
                        analytic: None,
                        closed_loop: None,
                        simulated_utilization: None,
                        simulated_avg_taxiing: None,
                        simulated_cost: None,
                        simulated_cost_se: None,
                    };
                    simulated(&mut rec, &res);
                    mls.push(rec);
                }
                Err(e) => failures.push(format!("mls beta={beta}: {e}")),
            }
        }
    }

    let analytic = |recs: &[PolicyRecord]| -> Vec<(f64, f64)> {
        recs.iter().filter_map(|r| r.analytic.map(|m| (m.utilization, m.avg_taxiing))).collect()
    };
    let mls_curve: Vec<(f64, f64)> =
        mls.iter().filter_map(|r| Some((r.simulated_utilization?, r.simulated_avg_taxiing?))).collect();
    let rows = compare_curves(
        &analytic(&threshold),
        &analytic(&optimal),
        (!mls_curve.is_empty()).then_some(mls_curve.as_slice()),
    )?;
    Ok(ComparisonReport { fairness, optimal, threshold, mls, policies, rows, failures })
}

pub fn write_records<W: Write>(records: &[PolicyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "parameter",
        "beta",
        "utilization",
        "avg_taxiing",
        "expected_cost",
        "takeoff_rate",
        "closed_loop_utilization",
        "closed_loop_avg_taxiing",
        "closed_loop_expected_cost",
        "sim_utilization",
        "sim_avg_taxiing",
        "sim_expected_cost",
        "sim_cost_se",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let a = r.analytic;
        w.write_record([
            r.policy.clone(),
            r.parameter.to_string(),
            r.beta.to_string(),
            opt(a.map(|m| m.utilization)),
            opt(a.map(|m| m.avg_taxiing)),
            opt(a.map(|m| m.expected_cost)),
            opt(a.map(|m| m.takeoff_rate)),
            opt(r.closed_loop.map(|m| m.utilization)),
            opt(r.closed_loop.map(|m| m.avg_taxiing)),
            opt(r.closed_loop.map(|m| m.expected_cost)),
            opt(r.simulated_utilization),
            opt(r.simulated_avg_taxiing),
            opt(r.simulated_cost),
            opt(r.simulated_cost_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interpolation() {
        let c = curve([(0.5, 2.0), (0.3, 1.0), (0.7, 4.0)]);
        assert_eq!(interpolate(&c, 0.4), Some(1.5));
        assert_eq!(interpolate(&c, 0.7), Some(4.0));
        assert_eq!(interpolate(&c, 0.3), Some(1.0));
        assert_eq!(interpolate(&c, 0.8), None);
        assert_eq!(interpolate(&[], 0.5), None);
    }

    #[test]
    fn rows_on_overlap() {
        let thr = [(0.2, 1.0), (0.6, 3.0), (0.9, 6.0)];
        let opt = [(0.4, 1.8), (0.95, 5.0)];
        let rows = compare_curves(&thr, &opt, None).unwrap();
        let us: Vec<f64> = rows.iter().map(|r| r.utilization).collect();
        assert_eq!(us, vec![0.4, 0.6, 0.9]);
        assert_abs_diff_eq!(rows[0].avg_taxiing_threshold, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rows[0].reduction_percent, 10.0, epsilon = 1e-9);
        assert!(compare_curves(&[(0.1, 1.0), (0.2, 2.0)], &[(0.5, 1.0)], None).is_err());
    }

    #[test]
    fn emissions_cancel_factor() {
        let rows = vec![ComparisonRow {
            utilization: 0.9,
            avg_taxiing_threshold: 5.0,
            avg_taxiing_optimal: 4.8,
            avg_taxiing_mls: None,
            reduction_percent: 4.0,
        }];
        for f in [0.1, 1.0, 17.5] {
            let e = emissions(&rows, f).unwrap();
            assert_abs_diff_eq!(e[0].reduction_percent, 4.0, epsilon = 1e-9);
            assert_abs_diff_eq!(e[0].delta_kg_per_min, f * 0.2, epsilon = 1e-12);
        }
        assert!(emissions(&rows, 0.0).is_err());
        let same = ComparisonRow { avg_taxiing_optimal: 5.0, ..rows[0].clone() };
        assert_eq!(emissions(&[same], 2.0).unwrap()[0].delta_kg_per_min, 0.0);
    }

    #[test]
    fn comparison_csv_round_trip() {
        let rows = vec![
            ComparisonRow {
                utilization: 0.5,
                avg_taxiing_threshold: 2.0,
                avg_taxiing_optimal: 1.9,
                avg_taxiing_mls: Some(1.95),
                reduction_percent: 5.0,
            },
            ComparisonRow {
                utilization: 0.6,
                avg_taxiing_threshold: 3.0,
                avg_taxiing_optimal: 2.9,
                avg_taxiing_mls: None,
                reduction_percent: 10.0 / 3.0,
            },
        ];
        let mut buf = Vec::new();
        write_comparison(&rows, &mut buf).unwrap();
        assert_eq!(read_comparison(buf.as_slice()).unwrap(), rows);
    }
}

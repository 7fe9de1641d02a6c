//! Seeded Monte Carlo rollouts of a controller against the kernel.
//!
//! Replication `r` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `r`, so results do not depend on how replications are scheduled.
//! Aggregates are combined in replication order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::MlsController;
use crate::error::{Error, Result};
use crate::transition::{Decision, TransitionModel};

pub const GENERATOR: &str = "rand_chacha::ChaCha8Rng seed_from_u64(seed), set_stream(replication)";

/// Batches per replication used for standard errors.
pub const BATCHES: usize = 20;

/// Bins with fewer samples are flagged in the congestion curve.
pub const SPARSE_BIN: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: u32,
}

fn default_warmup() -> u64 {
    10_000
}

fn one() -> u32 {
    1
}

impl SimConfig {
    pub fn new(steps: u64, seed: u64) -> Self {
        SimConfig { steps, warmup: default_warmup().min(steps / 10), seed, replications: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.warmup {
            return Err(Error::InvalidArgument(format!("steps {} must exceed warmup {}", self.steps, self.warmup)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("at least one replication required".into()));
        }
        Ok(())
    }

    fn measured(&self) -> u64 {
        self.steps - self.warmup
    }
}

/// A release controller. It is shown the true state slot before deciding and
/// the successor slot after each step; partial-information controllers only
/// read what their observation channel reveals.
pub trait Controller {
    fn reset(&mut self);
    fn decide(&mut self, slot: usize) -> Decision;
    fn observe(&mut self, next_slot: usize) -> Result<()>;
}

/// Fixed state-feedback decisions.
#[derive(Clone, Copy, Debug)]
pub struct TableController<'a> {
    pub decisions: &'a [Decision],
}

impl Controller for TableController<'_> {
    fn reset(&mut self) {}

    fn decide(&mut self, slot: usize) -> Decision {
        self.decisions[slot]
    }

    fn observe(&mut self, _next_slot: usize) -> Result<()> {
        Ok(())
    }
}

/// MLS controller fed with the observation of the true successor.
pub struct MlsSim<'a> {
    pub inner: MlsController<'a>,
    pub obs: &'a crate::belief::ObservationModel,
}

impl Controller for MlsSim<'_> {
    fn reset(&mut self) {
        self.inner.reset();
    }

    fn decide(&mut self, _slot: usize) -> Decision {
        self.inner.decide()
    }

    fn observe(&mut self, next_slot: usize) -> Result<()> {
        self.inner.observe(self.obs.code(next_slot))
    }
}

/// Clear whenever some ramp can be cleared (lowest ramp first).
pub fn saturating_policy(model: &TransitionModel) -> Vec<Decision> {
    (0..model.num_states())
        .map(|s| model.feasible_decisions(s).find(|k| k.is_clear()).unwrap_or(Decision::Hold))
        .collect()
}

pub fn never_clear_policy(model: &TransitionModel) -> Vec<Decision> {
    vec![Decision::Hold; model.num_states()]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub n_ac: u32,
    pub count: u64,
    /// Steps with 0, 1 and 2 take-offs.
    pub hist: [u64; 3],
}

impl BinStats {
    pub fn takeoffs(&self) -> u64 {
        self.hist[1] + 2 * self.hist[2]
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.takeoffs() as f64 / self.count as f64
        }
    }

    /// Lower-quantile of the per-step take-off count.
    pub fn quantile(&self, q: f64) -> u32 {
        let target = (q * self.count as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (v, &c) in self.hist.iter().enumerate() {
            acc += c;
            if acc >= target {
                return v as u32;
            }
        }
        2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub replication: u32,
    pub takeoffs: u64,
    pub takeoffs_sq: u64,
    pub n_ac_sum: u64,
    pub idle_steps: u64,
    pub clearances: u64,
    pub coerced: u64,
    pub conservation_violations: u64,
    /// Per batch: (take-offs, N_ac sum, idle steps, steps).
    pub batches: Vec<[u64; 4]>,
    pub bins: Vec<BinStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub generator: String,
    pub config: SimConfig,
    pub service_rate: f64,
    /// Take-offs per step.
    pub takeoff_mean: f64,
    pub takeoff_std: f64,
    /// Mean aircraft on the surface, buffer included.
    pub mean_n_ac: f64,
    /// Fraction of steps that start with an empty runway buffer.
    pub idle_fraction: f64,
    pub utilization: f64,
    pub coerced: u64,
    pub conservation_violations: u64,
    pub bins: Vec<BinStats>,
    pub replications: Vec<ReplicationStats>,
}

impl SimResult {
    /// Mean per-step cost `N_ac + beta * [buffer empty]`.
    pub fn expected_cost(&self, beta: f64) -> f64 {
        self.mean_n_ac + beta * self.idle_fraction
    }

    fn batch_se(&self, f: impl Fn(&[u64; 4]) -> f64) -> f64 {
        let vals: Vec<f64> = self.replications.iter().flat_map(|r| r.batches.iter().map(&f)).collect();
        let n = vals.len() as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    /// Batch-means standard error of the take-off rate.
    pub fn takeoff_se(&self) -> f64 {
        self.batch_se(|b| b[0] as f64 / b[3] as f64)
    }

    pub fn n_ac_se(&self) -> f64 {
        self.batch_se(|b| b[1] as f64 / b[3] as f64)
    }

    pub fn cost_se(&self, beta: f64) -> f64 {
        self.batch_se(|b| (b[1] as f64 + beta * b[2] as f64) / b[3] as f64)
    }
}

fn run_replication<C: Controller>(
    model: &TransitionModel,
    ctrl: &mut C,
    sim: &SimConfig,
    rep: u32,
) -> Result<ReplicationStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(u64::from(rep));
    let space = model.space();
    let measured = sim.measured();
    let batch_len = measured.div_ceil(BATCHES as u64).max(1);
    let mut stats = ReplicationStats {
        replication: rep,
        takeoffs: 0,
        takeoffs_sq: 0,
        n_ac_sum: 0,
        idle_steps: 0,
        clearances: 0,
        coerced: 0,
        conservation_violations: 0,
        batches: Vec::with_capacity(BATCHES),
        bins: (0..=space.max_n_ac()).map(|n| BinStats { n_ac: n, ..Default::default() }).collect(),
    };
    ctrl.reset();
    let mut slot = space.empty_slot();
    for t in 0..sim.steps {
        let mut k = ctrl.decide(slot);
        if !model.is_feasible(slot, k) {
            k = Decision::Hold;
            stats.coerced += 1;
        }
        let u: f64 = rng.random();
        let next = model.sample_next(slot, k, u).expect("feasible row");
        let (n0, n1) = (space.n_ac(slot) as i64, space.n_ac(next) as i64);
        let cleared = i64::from(k.is_clear());
        let takeoffs = n0 + cleared - n1;
        let queue = i64::from(space.queue(slot));
        if !(0..=queue.min(2)).contains(&takeoffs) {
            stats.conservation_violations += 1;
        }
        if t >= sim.warmup {
            let tk = takeoffs.clamp(0, 2) as u64;
            let idle = u64::from(queue == 0);
            stats.takeoffs += tk;
            stats.takeoffs_sq += tk * tk;
            stats.n_ac_sum += n0 as u64;
            stats.idle_steps += idle;
            stats.clearances += cleared as u64;
            let bin = &mut stats.bins[n0 as usize];
            bin.count += 1;
            bin.hist[tk as usize] += 1;
            let b = ((t - sim.warmup) / batch_len) as usize;
            if stats.batches.len() <= b {
                stats.batches.push([0; 4]);
            }
            let batch = &mut stats.batches[b];
            batch[0] += tk;
            batch[1] += n0 as u64;
            batch[2] += idle;
            batch[3] += 1;
        }
        ctrl.observe(next)?;
        slot = next;
    }
    Ok(stats)
}

/// Runs `sim.replications` rollouts from the empty surface, building one
/// controller per replication with `make`.
pub fn rollout<C, F>(model: &TransitionModel, make: F, sim: &SimConfig) -> Result<SimResult>
where
    C: Controller,
    F: Fn(u32) -> Result<C> + Sync,
{
    sim.validate()?;
    let reps: Vec<ReplicationStats> = (0..sim.replications)
        .into_par_iter()
        .map(|r| {
            let mut ctrl = make(r)?;
            run_replication(model, &mut ctrl, sim, r)
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(model, *sim, reps))
}

fn aggregate(model: &TransitionModel, config: SimConfig, reps: Vec<ReplicationStats>) -> SimResult {
    let total = (config.measured() * u64::from(config.replications)) as f64;
    let sum = |f: fn(&ReplicationStats) -> u64| reps.iter().map(f).sum::<u64>();
    let takeoffs = sum(|r| r.takeoffs) as f64;
    let takeoff_mean = takeoffs / total;
    let second = sum(|r| r.takeoffs_sq) as f64 / total;
    let mut bins: Vec<BinStats> =
        reps[0].bins.iter().map(|b| BinStats { n_ac: b.n_ac, ..Default::default() }).collect();
    for r in &reps {
        for (acc, b) in bins.iter_mut().zip(&r.bins) {
            acc.count += b.count;
            for v in 0..3 {
                acc.hist[v] += b.hist[v];
            }
        }
    }
    let service = model.config().service_rate();
    SimResult {
        generator: GENERATOR.into(),
        config,
        service_rate: service,
        takeoff_mean,
        takeoff_std: (second - takeoff_mean * takeoff_mean).max(0.0).sqrt(),
        mean_n_ac: sum(|r| r.n_ac_sum) as f64 / total,
        idle_fraction: sum(|r| r.idle_steps) as f64 / total,
        utilization: if service > 0.0 { takeoff_mean / service } else { 0.0 },
        coerced: sum(|r| r.coerced),
        conservation_violations: sum(|r| r.conservation_violations),
        bins,
        replications: reps,
    }
}

/// Runs replication `rep` alone with a caller-owned controller.
pub fn run_single<C: Controller>(
    model: &TransitionModel,
    ctrl: &mut C,
    sim: &SimConfig,
    rep: u32,
) -> Result<ReplicationStats> {
    sim.validate()?;
    run_replication(model, ctrl, sim, rep)
}

/// Rolls out a fixed state-feedback table.
pub fn rollout_table(model: &TransitionModel, decisions: &[Decision], sim: &SimConfig) -> Result<SimResult> {
    if decisions.len() != model.num_states() {
        return Err(Error::InvalidArgument("decision table does not cover the state space".into()));
    }
    rollout(model, |_| Ok(TableController { decisions }), sim)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_taxiing: i64,
    pub samples: u64,
    /// Take-offs per step.
    pub mean_takeoff_rate: f64,
    pub q1: u32,
    pub median: u32,
    pub q3: u32,
    /// Fewer than [`SPARSE_BIN`] samples.
    pub sparse: bool,
}

/// Mean take-off rate per observed surface count, shifted by `offset`.
pub fn congestion_curve(result: &SimResult, offset: i64) -> Vec<CurvePoint> {
    let pts: Vec<CurvePoint> = result
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| CurvePoint {
            n_taxiing: i64::from(b.n_ac) + offset,
            samples: b.count,
            mean_takeoff_rate: b.mean(),
            q1: b.quantile(0.25),
            median: b.quantile(0.5),
            q3: b.quantile(0.75),
            sparse: b.count < SPARSE_BIN,
        })
        .collect();
    if pts.is_empty() {
        return vec![CurvePoint {
            n_taxiing: offset,
            samples: 0,
            mean_takeoff_rate: 0.0,
            q1: 0,
            median: 0,
            q3: 0,
            sparse: true,
        }];
    }
    pts
}

pub fn write_curve<W: std::io::Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

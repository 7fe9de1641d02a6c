//! Closed-form calibration of the airport model from taxi and throughput
//! statistics.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{AirportConfig, Fairness, RampSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputStats {
    /// Aircraft per minute.
    pub mean_rate: f64,
    pub std_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxiStats {
    /// Minutes.
    pub unimpeded_mean: f64,
    pub unimpeded_std: f64,
    pub pushback_mean: f64,
    pub pushback_std: f64,
}

/// Solves `c1 + c2 = mean`, `c1(1-c1) + c2(1-c2) = std^2` with `c1 >= c2`.
pub fn solve_bernoulli_pair(stats: ThroughputStats) -> Result<(f64, f64)> {
    let ThroughputStats { mean_rate: mean, std_rate: std } = stats;
    if !(0.0..=2.0).contains(&mean) || !(std >= 0.0) {
        return Err(Error::NoRealSolution(format!("mean {mean} must lie in [0, 2] and std {std} must be nonnegative")));
    }
    // c1^2 + c2^2 = mean - std^2, so the product is ((mean^2 - mean + std^2) / 2)
    // and c1, c2 are the roots of c^2 - mean c + product.
    let product = (mean * mean - mean + std * std) / 2.0;
    let disc = mean * mean - 4.0 * product;
    if disc < -1e-12 {
        return Err(Error::NoRealSolution(format!(
            "std {std} is incompatible with mean {mean} (discriminant {disc:.3e})"
        )));
    }
    let root = disc.max(0.0).sqrt();
    let c1 = (mean + root) / 2.0;
    let c2 = (mean - root) / 2.0;
    let eps = 1e-12;
    if c1 > 1.0 + eps || c2 < -eps {
        return Err(Error::NoRealSolution(format!("roots ({c1:.6}, {c2:.6}) are not probabilities")));
    }
    Ok((c1.min(1.0), c2.max(0.0)))
}

/// Mean and standard deviation (minutes) of the wait at the runway threshold,
/// modelled as geometric with per-minute success probability `c1 + c2`.
pub fn clearance_wait_stats(c1: f64, c2: f64) -> Result<(f64, f64)> {
    let rate = c1 + c2;
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument("zero service rate".into()));
    }
    if rate > 1.0 {
        return Err(Error::InvalidArgument(format!("service rate {rate} above one per step has no geometric wait")));
    }
    Ok((1.0 / rate, (1.0 - rate).sqrt() / rate))
}

/// Removes pushback and clearance components from unimpeded taxi-out time.
pub fn decompose_taxi_stats(t: TaxiStats, clear: (f64, f64)) -> Result<(f64, f64)> {
    let var = t.unimpeded_std.powi(2) - clear.1.powi(2) - t.pushback_std.powi(2);
    if var < 0.0 {
        return Err(Error::NegativeVariance(format!(
            "unimpeded variance {:.4} is smaller than pushback + clearance variance {:.4}",
            t.unimpeded_std.powi(2),
            clear.1.powi(2) + t.pushback_std.powi(2)
        )));
    }
    let mean = t.unimpeded_mean - clear.0 - t.pushback_mean;
    if mean < 0.0 {
        return Err(Error::InvalidArgument(format!("taxi mean {mean:.4} is negative")));
    }
    Ok((mean, var.sqrt()))
}

/// Fits `(N, m)` so that the geometric walk over N samples has the given
/// mean and standard deviation, then rounds N and refits m from the mean.
pub fn calibrate_taxiway(taxi_mean: f64, taxi_std: f64, step_minutes: f64) -> Result<(u32, f64)> {
    if !(taxi_mean > 0.0) || !(step_minutes > 0.0) {
        return Err(Error::InvalidArgument("taxi mean and step must be positive".into()));
    }
    if !(taxi_std >= 0.0) || taxi_std > taxi_mean {
        return Err(Error::NoRealSolution(format!("taxi std {taxi_std} must lie in [0, mean = {taxi_mean}]")));
    }
    let (n_real, _) = real_walk_fit(taxi_mean, taxi_std, step_minutes);
    let n = (n_real.round() as u32).max(1);
    let m = (n as f64 * step_minutes / taxi_mean).min(1.0);
    Ok((n, m))
}

/// Real-valued solution of the taxiway system before rounding.
///
/// `std / mean = sqrt((1 - m) / N)` and `N = m mean / Ts` combine into
/// `m = 1 / (1 + (std/mean)^2 mean / Ts)`.
pub fn real_walk_fit(taxi_mean: f64, taxi_std: f64, step_minutes: f64) -> (f64, f64) {
    let ratio2 = (taxi_std / taxi_mean).powi(2);
    let m = 1.0 / (1.0 + ratio2 * taxi_mean / step_minutes);
    (m * taxi_mean / step_minutes, m)
}

/// Number of steps for a secondary ramp that reuses the main ramp's `m`.
///
/// Rounded up so the walk is never shorter than its expected length.
pub fn steps_for_ramp(taxi_mean: f64, move_prob: f64, step_minutes: f64) -> u32 {
    ((move_prob * taxi_mean / step_minutes - 1e-9).ceil() as u32).max(1)
}

/// Runway buffer size: the supply time `k_sigma * sqrt(taxi_std^2 + clear_std^2)`
/// divided by the mean take-off rate, rounded to nearest, minimum one.
pub fn size_buffer(taxi_std: f64, clear_std: f64, mean_rate: f64, k_sigma: f64) -> Result<u32> {
    if !(mean_rate > 0.0) {
        return Err(Error::InvalidArgument("zero take-off rate".into()));
    }
    let supply = k_sigma * taxi_std.hypot(clear_std);
    Ok(((supply / mean_rate).round() as u32).max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteRow {
    pub minute: u32,
    pub pushbacks: u32,
    pub takeoffs: u32,
}

/// Minute-level pushback / take-off counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinuteSeries {
    pub rows: Vec<MinuteRow>,
}

impl MinuteSeries {
    /// Reads CSV with header `minute,pushbacks,takeoffs`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let expected = ["minute", "pushbacks", "takeoffs"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(Error::Parse(format!(
                "expected header `minute,pushbacks,takeoffs`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<MinuteRow>, _>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(MinuteSeries { rows })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Input-output estimate of aircraft taxiing at the start of each minute:
    /// cumulative pushbacks minus take-offs, clamped at zero.
    pub fn taxiing_estimate(&self) -> Vec<u32> {
        let mut level: i64 = 0;
        self.rows
            .iter()
            .map(|r| {
                let at_start = level as u32;
                level = (level + r.pushbacks as i64 - r.takeoffs as i64).max(0);
                at_start
            })
            .collect()
    }
}

/// Take-off statistics over minutes that start with at least `cutoff`
/// aircraft taxiing.
pub fn saturation_stats(series: &MinuteSeries, cutoff: u32) -> Result<ThroughputStats> {
    if series.rows.is_empty() {
        return Err(Error::EmptySample("minute series is empty".into()));
    }
    let level = series.taxiing_estimate();
    let sample: Vec<f64> =
        series.rows.iter().zip(&level).filter(|(_, &l)| l >= cutoff).map(|(r, _)| r.takeoffs as f64).collect();
    if sample.is_empty() {
        return Err(Error::EmptySample(format!("no minute with at least {cutoff} aircraft taxiing")));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(ThroughputStats { mean_rate: mean, std_rate: var.sqrt() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RampTaxiInput {
    pub name: String,
    pub taxi: TaxiStats,
}

/// Aggregated statistics for a full calibration run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationInput {
    pub throughput: ThroughputStats,
    /// First entry is the farthest (main) ramp; it fixes N and m.
    pub ramps: Vec<RampTaxiInput>,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: f64,
    #[serde(default = "default_sample_len")]
    pub sample_len_m: f64,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    #[serde(default = "default_fairness")]
    pub fairness: Fairness,
}

fn default_step_seconds() -> f64 {
    60.0
}
fn default_sample_len() -> f64 {
    200.0
}
fn default_k_sigma() -> f64 {
    3.0
}
fn default_fairness() -> Fairness {
    Fairness::Alternation
}

impl CalibrationInput {
    pub fn laguardia() -> Self {
        let taxi =
            |mean| TaxiStats { unimpeded_mean: mean, unimpeded_std: 2.00, pushback_mean: 2.0, pushback_std: 1.33 };
        CalibrationInput {
            throughput: ThroughputStats { mean_rate: 0.605, std_rate: 0.578 },
            ramps: vec![
                RampTaxiInput { name: "ramp1".into(), taxi: taxi(13.56) },
                RampTaxiInput { name: "ramp2".into(), taxi: taxi(6.4) },
            ],
            step_seconds: 60.0,
            sample_len_m: 200.0,
            k_sigma: 3.0,
            fairness: Fairness::Alternation,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RampCalibration {
    pub name: String,
    pub taxi_mean: f64,
    pub taxi_std: f64,
    #[serde(rename = "N")]
    pub steps: u32,
    pub entry_sample: u32,
}

/// Calibrated parameters, named like the published calibration table, plus
/// the intermediate quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(rename = "Ls")]
    pub sample_len_m: f64,
    #[serde(rename = "Ts")]
    pub step_seconds: f64,
    #[serde(rename = "N")]
    pub steps_per_ramp: Vec<u32>,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(rename = "B")]
    pub buffer: u32,
    pub clearance_wait_mean: f64,
    pub clearance_wait_std: f64,
    pub main_ramp_real_n: f64,
    pub main_ramp_real_m: f64,
    pub buffer_supply_minutes: f64,
    pub buffer_supply_count: f64,
    pub ramps: Vec<RampCalibration>,
    pub config: AirportConfig,
}

pub fn calibrate(input: &CalibrationInput) -> Result<CalibrationReport> {
    if input.ramps.is_empty() || input.ramps.len() > 2 {
        return Err(Error::InvalidArgument("calibration needs one or two ramps".into()));
    }
    let ts_min = input.step_seconds / 60.0;
    let (c1, c2) = solve_bernoulli_pair(input.throughput)?;
    let (wait_mean, wait_std) = clearance_wait_stats(c1, c2)?;
    let clear = (wait_mean, wait_std);

    let main = &input.ramps[0];
    let (taxi_mean, taxi_std) = decompose_taxi_stats(main.taxi, clear)?;
    let (real_n, real_m) = real_walk_fit(taxi_mean, taxi_std, ts_min);
    let (n, m) = calibrate_taxiway(taxi_mean, taxi_std, ts_min)?;
    let mut ramps = vec![RampCalibration { name: main.name.clone(), taxi_mean, taxi_std, steps: n, entry_sample: 1 }];
    for extra in &input.ramps[1..] {
        // The secondary ramp's std is not used: it inherits m.
        let mean = extra.taxi.unimpeded_mean - wait_mean - extra.taxi.pushback_mean;
        if mean <= 0.0 {
            return Err(Error::InvalidArgument(format!("ramp `{}` taxi mean {mean:.3} is not positive", extra.name)));
        }
        let std = decompose_taxi_stats(extra.taxi, clear).map(|t| t.1).unwrap_or(f64::NAN);
        let steps = steps_for_ramp(mean, m, ts_min);
        if steps >= n {
            return Err(Error::InvalidArgument(format!(
                "ramp `{}` needs {steps} steps, not fewer than the main ramp's {n}",
                extra.name
            )));
        }
        ramps.push(RampCalibration {
            name: extra.name.clone(),
            taxi_mean: mean,
            taxi_std: std,
            steps,
            entry_sample: n - steps + 1,
        });
    }

    let supply = input.k_sigma * taxi_std.hypot(wait_std);
    let buffer = size_buffer(taxi_std, wait_std, input.throughput.mean_rate, input.k_sigma)?;

    let config = AirportConfig {
        taxiway_len: n,
        ramps: ramps.iter().map(|r| RampSpec { name: r.name.clone(), entry_sample: r.entry_sample }).collect(),
        queue_capacity: buffer,
        move_prob: m,
        clear_prob_1: c1,
        clear_prob_2: c2,
        sample_len_m: input.sample_len_m,
        step_seconds: input.step_seconds,
        fairness: input.fairness,
    };
    config.validate()?;

    Ok(CalibrationReport {
        sample_len_m: input.sample_len_m,
        step_seconds: input.step_seconds,
        steps_per_ramp: ramps.iter().map(|r| r.steps).collect(),
        m,
        c1,
        c2,
        buffer,
        clearance_wait_mean: wait_mean,
        clearance_wait_std: wait_std,
        main_ramp_real_n: real_n,
        main_ramp_real_m: real_m,
        buffer_supply_minutes: supply,
        buffer_supply_count: supply / input.throughput.mean_rate,
        ramps,
        config,
    })
}

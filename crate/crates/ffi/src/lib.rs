//! C interface to the spotrelease library.
//!
//! Every function returns an [`SrStatus`]. On failure the message is kept per
//! thread and can be read with [`sr_last_error`]. Handles are opaque and must
//! be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use spotrelease::belief::{
    belief_update, mls_decide, observation_index, observe, BeliefState, Channel, ObservationModel,
};
use spotrelease::optimal::{solve_point, CostParams, LpOptions, Policy, StationaryMetrics};
use spotrelease::state::{AirportConfig, Fairness, StateIndex};
use spotrelease::threshold::{evaluate_threshold_chain, ThresholdParams};
use spotrelease::transition::{build_transitions, Decision, TransitionModel};
use spotrelease::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    IndexOutOfRange = 5,
    InvalidState = 6,
    NoRealSolution = 7,
    Infeasible = 8,
    Numerical = 9,
    ZeroLikelihood = 10,
    Parse = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

/// Fairness selector for [`sr_solve`]. `Default` uses the airport config.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrFairness {
    Default = 0,
    Alternation = 1,
    Statistical = 2,
    None = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrChannel {
    Surface = 0,
    Identity = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SrMetrics {
    pub avg_taxiing: f64,
    pub utilization: f64,
    pub expected_cost: f64,
    pub takeoff_rate: f64,
}

impl From<StationaryMetrics> for SrMetrics {
    fn from(m: StationaryMetrics) -> Self {
        SrMetrics {
            avg_taxiing: m.avg_taxiing,
            utilization: m.utilization,
            expected_cost: m.expected_cost,
            takeoff_rate: m.takeoff_rate,
        }
    }
}

pub struct SrConfig {
    inner: AirportConfig,
}

pub struct SrModel {
    inner: Arc<TransitionModel>,
}

pub struct SrSolution {
    model: Arc<TransitionModel>,
    policy: Arc<Policy>,
    metrics: StationaryMetrics,
    policy_metrics: StationaryMetrics,
    gap: f64,
    multiplier: f64,
}

pub struct SrMls {
    model: Arc<TransitionModel>,
    policy: Arc<Policy>,
    obs: ObservationModel,
    belief: BeliefState,
    last: Option<Decision>,
    recoveries: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
    });
}

fn status_of(err: &Error) -> SrStatus {
    match err {
        Error::InvalidConfig(_) | Error::InvalidProbability { .. } => SrStatus::InvalidConfig,
        Error::IndexOutOfRange(_) => SrStatus::IndexOutOfRange,
        Error::InvalidState(_) => SrStatus::InvalidState,
        Error::NoRealSolution(_) | Error::NegativeVariance(_) | Error::EmptySample(_) => SrStatus::NoRealSolution,
        Error::InvalidArgument(_) => SrStatus::InvalidArgument,
        Error::Infeasible(_) => SrStatus::Infeasible,
        Error::Numerical(_) => SrStatus::Numerical,
        Error::ZeroLikelihood => SrStatus::ZeroLikelihood,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => SrStatus::Parse,
        Error::Io(_) => SrStatus::Io,
    }
}

struct Fail(SrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(SrStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            SrStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SrStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn decision_from(code: u8) -> Result<Decision, Fail> {
    Decision::from_u8(code).ok_or_else(|| Fail(SrStatus::InvalidArgument, format!("unknown decision code {code}")))
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string and returns the full message length in bytes
/// (excluding the NUL). Truncates when `len` is too small.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Parses an airport config from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_config_from_json(json: *const c_char, out: *mut *mut SrConfig) -> SrStatus {
    guard(|| {
        let cfg = AirportConfig::from_json(text(json, "json")?)?;
        put(out, Box::into_raw(Box::new(SrConfig { inner: cfg })))
    })
}

/// Built-in airport: `laguardia`, `sea_like` or `toy`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_config_preset(name: *const c_char, out: *mut *mut SrConfig) -> SrStatus {
    guard(|| {
        let cfg = match text(name, "name")? {
            "laguardia" => AirportConfig::laguardia(),
            "sea_like" => AirportConfig::sea_like(),
            "toy" => AirportConfig::toy(),
            other => return Err(Fail(SrStatus::InvalidArgument, format!("unknown preset `{other}`"))),
        };
        put(out, Box::into_raw(Box::new(SrConfig { inner: cfg })))
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_config_free(cfg: *mut SrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Size of the full index range, `2^bits`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_config_index_space(cfg: *const SrConfig, out: *mut u64) -> SrStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        put(out, 1u64 << cfg.inner.index_bits())
    })
}

/// Builds the controlled transition kernel.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_model_build(cfg: *const SrConfig, out: *mut *mut SrModel) -> SrStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let model = build_transitions(&cfg.inner)?;
        put(out, Box::into_raw(Box::new(SrModel { inner: Arc::new(model) })))
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_model_free(model: *mut SrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of valid states.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_model_num_states(model: *const SrModel, out: *mut usize) -> SrStatus {
    guard(|| put(out, borrow(model, "model")?.inner.num_states()))
}

/// Number of stored transition probabilities over all feasible decisions.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_model_nonzeros(model: *const SrModel, out: *mut usize) -> SrStatus {
    guard(|| put(out, borrow(model, "model")?.inner.nonzeros()))
}

/// Number of aircraft on the surface in state `index`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_model_n_ac(model: *const SrModel, index: u32, out: *mut u32) -> SrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let slot = m.slot_of(StateIndex(index))?;
        put(out, m.space().n_ac(slot))
    })
}

/// Writes the successors of `index` under `decision` (0 hold, 1 and 2 clear a
/// ramp) into `next`/`prob`. `*len` receives the row length; when it exceeds
/// `cap` nothing is written and `BufferTooSmall` is returned. An infeasible
/// decision yields `InvalidArgument`.
///
/// # Safety
/// `next` and `prob` must point to `cap` writable elements (or be null when
/// `cap` is 0); `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_model_row(
    model: *const SrModel,
    index: u32,
    decision: u8,
    next: *mut u32,
    prob: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let slot = m.slot_of(StateIndex(index))?;
        let k = decision_from(decision)?;
        let (cols, probs) = m.row(slot, k).ok_or_else(|| {
            Fail(SrStatus::InvalidArgument, format!("decision {decision} infeasible in state {index}"))
        })?;
        put(len, cols.len())?;
        if cols.len() > cap {
            return Err(Fail(SrStatus::BufferTooSmall, format!("row has {} entries, buffer {cap}", cols.len())));
        }
        if cols.is_empty() {
            return Ok(());
        }
        if next.is_null() || prob.is_null() {
            return Err(null("row buffer"));
        }
        for (i, (&c, &p)) in cols.iter().zip(probs).enumerate() {
            *next.add(i) = m.index_of(c as usize).0;
            *prob.add(i) = p;
        }
        Ok(())
    })
}

/// Observation code of state `index` under the surface channel.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_model_observation(model: *const SrModel, index: u32, out: *mut u32) -> SrStatus {
    guard(|| {
        let cfg = borrow(model, "model")?.inner.config();
        let o = observe(StateIndex(index), cfg)?;
        put(out, observation_index(&o, cfg)?)
    })
}

/// Solves the average-cost problem at `beta` and extracts a deterministic
/// policy.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_solve(
    model: *const SrModel,
    beta: f64,
    fairness: SrFairness,
    out: *mut *mut SrSolution,
) -> SrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let fairness = match fairness {
            SrFairness::Default => m.config().effective_fairness(),
            SrFairness::Alternation => Fairness::Alternation,
            SrFairness::Statistical => Fairness::Statistical,
            SrFairness::None => Fairness::None,
        };
        let outcome = solve_point(m, beta, fairness, None, &LpOptions::default())?;
        let sol = SrSolution {
            model: Arc::clone(m),
            policy: Arc::new(outcome.policy),
            metrics: outcome.metrics,
            policy_metrics: outcome.policy_metrics,
            gap: outcome.solution.gap(),
            multiplier: outcome.solution.multiplier,
        };
        put(out, Box::into_raw(Box::new(sol)))
    })
}

/// # Safety
/// `sol` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_solution_free(sol: *mut SrSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Metrics of the optimum and of the extracted deterministic policy. Either
/// output may be null.
///
/// # Safety
/// `sol` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_solution_metrics(
    sol: *const SrSolution,
    optimum: *mut SrMetrics,
    policy: *mut SrMetrics,
) -> SrStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        if !optimum.is_null() {
            optimum.write(sol.metrics.into());
        }
        if !policy.is_null() {
            policy.write(sol.policy_metrics.into());
        }
        Ok(())
    })
}

/// Duality gap and equal-service multiplier of the solve.
///
/// # Safety
/// `sol` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_solution_certificate(
    sol: *const SrSolution,
    gap: *mut f64,
    multiplier: *mut f64,
) -> SrStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        if !gap.is_null() {
            gap.write(sol.gap);
        }
        if !multiplier.is_null() {
            multiplier.write(sol.multiplier);
        }
        Ok(())
    })
}

/// Decision code of the extracted policy in state `index`.
///
/// # Safety
/// `sol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_solution_decision(sol: *const SrSolution, index: u32, out: *mut u8) -> SrStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        let slot = sol.model.slot_of(StateIndex(index))?;
        put(out, sol.policy.decision(slot).code())
    })
}

/// Closed-loop metrics of the threshold policy `th` started from the empty
/// surface.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_threshold_evaluate(
    model: *const SrModel,
    th: u32,
    beta: f64,
    out: *mut SrMetrics,
) -> SrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let th = ThresholdParams::new(th, m.config())?;
        let eval = evaluate_threshold_chain(m, th, CostParams::new(beta)?)?;
        put(out, eval.metrics.into())
    })
}

/// Belief-based controller that applies the policy of `sol` to the most
/// likely state. The belief starts on the empty surface.
///
/// # Safety
/// `sol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_new(sol: *const SrSolution, channel: SrChannel, out: *mut *mut SrMls) -> SrStatus {
    guard(|| {
        let sol = borrow(sol, "sol")?;
        let channel = match channel {
            SrChannel::Surface => Channel::Surface,
            SrChannel::Identity => Channel::Identity,
        };
        let obs = ObservationModel::new(&sol.model, channel)?;
        let belief = BeliefState::indicator(sol.model.num_states(), sol.model.space().empty_slot());
        let mls = SrMls {
            model: Arc::clone(&sol.model),
            policy: Arc::clone(&sol.policy),
            obs,
            belief,
            last: None,
            recoveries: 0,
        };
        put(out, Box::into_raw(Box::new(mls)))
    })
}

/// # Safety
/// `mls` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_free(mls: *mut SrMls) {
    if !mls.is_null() {
        drop(Box::from_raw(mls));
    }
}

/// Returns the belief to the empty surface.
///
/// # Safety
/// `mls` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_reset(mls: *mut SrMls) -> SrStatus {
    guard(|| {
        let mls = borrow_mut(mls, "mls")?;
        mls.belief = BeliefState::indicator(mls.model.num_states(), mls.model.space().empty_slot());
        mls.last = None;
        mls.recoveries = 0;
        Ok(())
    })
}

/// Decision for the current step. Call once per step before
/// [`sr_mls_observe`].
///
/// # Safety
/// `mls` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_decide(mls: *mut SrMls, out: *mut u8) -> SrStatus {
    guard(|| {
        let mls = borrow_mut(mls, "mls")?;
        let (k, _) = mls_decide(&mls.belief, &mls.policy, &mls.model);
        mls.last = Some(k);
        put(out, k.code())
    })
}

/// Updates the belief with the observation code emitted after the step. For
/// the identity channel the code is the state index. An impossible code
/// restarts the belief uniformly over the states consistent with it.
///
/// # Safety
/// `mls` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_observe(mls: *mut SrMls, code: u32) -> SrStatus {
    guard(|| {
        let mls = borrow_mut(mls, "mls")?;
        let k = mls.last.take().unwrap_or(Decision::Hold);
        mls.belief = match belief_update(&mls.belief, k, code, &mls.model, &mls.obs) {
            Ok(b) => b,
            Err(Error::ZeroLikelihood) => {
                let states = mls.obs.consistent_states(code);
                if states.is_empty() {
                    return Err(Fail(SrStatus::InvalidArgument, format!("observation code {code} is never emitted")));
                }
                mls.recoveries += 1;
                BeliefState::uniform(mls.model.num_states(), states)?
            }
            Err(e) => return Err(e.into()),
        };
        Ok(())
    })
}

/// Most likely state index and its belief probability.
///
/// # Safety
/// `mls` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_state(mls: *const SrMls, index: *mut u32, prob: *mut f64) -> SrStatus {
    guard(|| {
        let mls = borrow(mls, "mls")?;
        let slot = mls.belief.argmax();
        if !index.is_null() {
            index.write(mls.model.index_of(slot).0);
        }
        if !prob.is_null() {
            prob.write(mls.belief.get(slot));
        }
        Ok(())
    })
}

/// Number of filter restarts since creation or the last reset.
///
/// # Safety
/// `mls` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_mls_recoveries(mls: *const SrMls, out: *mut u64) -> SrStatus {
    guard(|| put(out, borrow(mls, "mls")?.recoveries))
}

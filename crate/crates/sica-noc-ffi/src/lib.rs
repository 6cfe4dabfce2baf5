//! C ABI over the core library.
//!
//! Conventions:
//! - Opaque handles (`SicaScenario`, `SicaOptimizeResult`) are created and
//!   released only through this API; never dereference them from C.
//! - Every fallible call returns a [`SicaStatus`]; on any non-OK status the
//!   per-thread message from [`sica_last_error_message`] describes the
//!   failure. The message pointer stays valid until the next failing call
//!   on the same thread.
//! - Output buffers follow a two-call pattern: pass a null buffer to query
//!   the required length, then call again with enough capacity.
//! - All computations are deterministic functions of the scenario (including
//!   its seed), exactly as in the core library.

use sica_noc::adjoint::adjoint_ensemble;
use sica_noc::cost::path_cost;
use sica_noc::diagnostics::necessary_condition_residual;
use sica_noc::fbsm::multistart_value_estimate;
use sica_noc::interval::IntervalNumber;
use sica_noc::model::{in_omega, omega_bounds};
use sica_noc::scenario::ScenarioConfig;
use sica_noc::sde::simulate_ensemble;
use sica_noc::stats::Estimate;
use sica_noc::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

/// Status of an FFI call. `OK` is zero; every other value signals a failure
/// whose message is available from `sica_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SicaStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The scenario or an argument value is invalid.
    InvalidConfig = 3,
    /// Simulation or optimization failed at runtime.
    RuntimeFailure = 4,
    /// The provided buffer is smaller than the required length.
    BufferTooSmall = 5,
}

/// Opaque scenario handle.
pub struct SicaScenario {
    config: ScenarioConfig,
}

/// Opaque optimization result handle.
pub struct SicaOptimizeResult {
    control: Vec<f64>,
    report: SicaOptimizeReport,
}

/// Flat summary of an ensemble simulation under the scenario's initial
/// control.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SicaSimulationSummary {
    /// Monte-Carlo mean of the cost functional.
    pub cost_mean: f64,
    /// Standard error of that mean.
    pub cost_stderr: f64,
    /// Lower bound of the invariant population region.
    pub omega_low: f64,
    /// Upper bound of the invariant population region.
    pub omega_high: f64,
    /// Fraction of grid nodes outside the region (with the scenario's
    /// containment slack).
    pub violation_fraction: f64,
    /// Number of negativity clamps applied during integration.
    pub clamp_events: u64,
    /// Number of simulated paths.
    pub n_paths: u64,
}

/// Flat summary of an optimization run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SicaOptimizeReport {
    /// Final cost mean of the winning start.
    pub cost_mean: f64,
    /// Standard error of that mean.
    pub cost_stderr: f64,
    /// Smallest final cost across all starts (the value estimate).
    pub value_estimate: f64,
    /// Iterations performed by the winning start.
    pub iterations: u64,
    /// Whether the winning start met its stopping tolerance.
    pub converged: bool,
    /// Maximality-condition residual of the returned control.
    pub residual: f64,
    /// Number of control cells (length of the control buffer).
    pub n_cells: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("nul bytes stripped above");
    });
}

fn fail(status: SicaStatus, message: impl std::fmt::Display) -> SicaStatus {
    set_last_error(message);
    status
}

fn fail_error(e: Error) -> SicaStatus {
    let status = match e {
        Error::Config(_) | Error::Domain(_) => SicaStatus::InvalidConfig,
        _ => SicaStatus::RuntimeFailure,
    };
    fail(status, e)
}

/// Message of the most recent failure on this thread, as a NUL-terminated
/// UTF-8 string. Never null; empty before the first failure. The pointer is
/// invalidated by the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sica_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sica_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn read_c_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, SicaStatus> {
    if ptr.is_null() {
        return Err(fail(SicaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(SicaStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn store_scenario(
    out: *mut *mut SicaScenario,
    config: Result<ScenarioConfig, Error>,
) -> SicaStatus {
    if out.is_null() {
        return fail(SicaStatus::NullArgument, "output handle pointer is null");
    }
    match config {
        Ok(config) => {
            let handle = Box::new(SicaScenario { config });
            unsafe { *out = Box::into_raw(handle) };
            SicaStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success `*out` owns a scenario that must be released with
/// [`sica_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut SicaScenario,
) -> SicaStatus {
    let text = match read_c_str(text, "scenario text") {
        Ok(t) => t,
        Err(status) => return status,
    };
    store_scenario(out, ScenarioConfig::from_toml_str(text))
}

/// Reads and parses a scenario file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success `*out` owns a scenario that must be released with
/// [`sica_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_from_file(
    path: *const c_char,
    out: *mut *mut SicaScenario,
) -> SicaStatus {
    let path = match read_c_str(path, "scenario path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    store_scenario(out, ScenarioConfig::from_path(std::path::Path::new(path)))
}

/// Creates the built-in demo scenario.
///
/// # Safety
/// `out` must be a valid pointer. On success `*out` owns a scenario that
/// must be released with [`sica_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_demo(out: *mut *mut SicaScenario) -> SicaStatus {
    store_scenario(out, Ok(ScenarioConfig::demo()))
}

/// Releases a scenario handle. Passing null is a no-op.
///
/// # Safety
/// `scenario` must be null or a pointer obtained from a scenario
/// constructor that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_free(scenario: *mut SicaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Replaces the scenario's base seed (all derived randomness follows it).
///
/// # Safety
/// `scenario` must be a valid scenario handle.
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_set_seed(
    scenario: *mut SicaScenario,
    seed: u64,
) -> SicaStatus {
    let Some(s) = scenario.as_mut() else {
        return fail(SicaStatus::NullArgument, "scenario handle is null");
    };
    s.config.base_seed = seed;
    s.config.sweep.base_seed = seed;
    SicaStatus::Ok
}

/// Replaces the scenario's realization exponent; `k` must lie in `[0, 1]`
/// and be realizable for every interval parameter.
///
/// # Safety
/// `scenario` must be a valid scenario handle.
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_set_realization(
    scenario: *mut SicaScenario,
    k: f64,
) -> SicaStatus {
    let Some(s) = scenario.as_mut() else {
        return fail(SicaStatus::NullArgument, "scenario handle is null");
    };
    if !(0.0..=1.0).contains(&k) {
        return fail(
            SicaStatus::InvalidConfig,
            format!("realization exponent must lie in [0, 1], got {k}"),
        );
    }
    let mut candidate = s.config.clone();
    candidate.k = k;
    if let Err(e) = candidate.realized() {
        return fail_error(e);
    }
    s.config = candidate;
    SicaStatus::Ok
}

/// Number of control cells of the scenario's time grid.
///
/// # Safety
/// `scenario` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sica_scenario_n_cells(
    scenario: *const SicaScenario,
    out: *mut usize,
) -> SicaStatus {
    let Some(s) = scenario.as_ref() else {
        return fail(SicaStatus::NullArgument, "scenario handle is null");
    };
    if out.is_null() {
        return fail(SicaStatus::NullArgument, "output pointer is null");
    }
    *out = s.config.grid.n_steps();
    SicaStatus::Ok
}

/// Log-linear interval realization `lower^(1-k) * upper^k`, with exact
/// endpoints at `k` in {0, 1} and exact degenerate intervals.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sica_realize_interval(
    lower: f64,
    upper: f64,
    k: f64,
    out: *mut f64,
) -> SicaStatus {
    if out.is_null() {
        return fail(SicaStatus::NullArgument, "output pointer is null");
    }
    let value = IntervalNumber::new(lower, upper).and_then(|iv| iv.realize(k));
    match value {
        Ok(v) => {
            *out = v;
            SicaStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

fn simulate_summary(config: &ScenarioConfig) -> Result<SicaSimulationSummary, Error> {
    let params = config.realized()?;
    let ctrl = config.initial_control()?;
    let ensemble = simulate_ensemble(
        &config.x0,
        &ctrl,
        &params,
        config.sim_paths,
        config.base_seed,
    )?;
    let costs: Vec<f64> = ensemble
        .paths()
        .iter()
        .map(|p| path_cost(p, &ctrl, &config.weights))
        .collect::<Result<_, _>>()?;
    let cost = Estimate::from_samples(&costs);
    let bounds = omega_bounds(&params)?;
    let tol = config.omega_tol.unwrap_or_else(|| bounds.default_tol());
    let mut violations = 0u64;
    let mut nodes = 0u64;
    for traj in ensemble.paths() {
        for x in traj.states() {
            nodes += 1;
            if !in_omega(x, &bounds, tol) {
                violations += 1;
            }
        }
    }
    Ok(SicaSimulationSummary {
        cost_mean: cost.mean,
        cost_stderr: cost.stderr,
        omega_low: bounds.n_low,
        omega_high: bounds.n_high,
        violation_fraction: violations as f64 / nodes as f64,
        clamp_events: ensemble.total_clamp_events(),
        n_paths: config.sim_paths as u64,
    })
}

/// Simulates an ensemble under the scenario's initial control and fills a
/// flat summary.
///
/// # Safety
/// `scenario` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sica_simulate(
    scenario: *const SicaScenario,
    out: *mut SicaSimulationSummary,
) -> SicaStatus {
    let Some(s) = scenario.as_ref() else {
        return fail(SicaStatus::NullArgument, "scenario handle is null");
    };
    if out.is_null() {
        return fail(SicaStatus::NullArgument, "output pointer is null");
    }
    match simulate_summary(&s.config) {
        Ok(summary) => {
            *out = summary;
            SicaStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

fn optimize_result(config: &ScenarioConfig) -> Result<SicaOptimizeResult, Error> {
    let params = config.realized()?;
    let ms = multistart_value_estimate(
        &config.x0,
        config.grid,
        config.u_lo,
        config.u_hi,
        &params,
        &config.weights,
        &config.sweep,
        config.n_starts,
    )?;
    let best = &ms.reports[ms.best_index];
    let ensemble = simulate_ensemble(
        &config.x0,
        &ms.best_control,
        &params,
        config.sweep.n_paths,
        config.base_seed,
    )?;
    let adjoints = adjoint_ensemble(
        &ensemble,
        &ms.best_control,
        &params,
        &config.weights,
        config.sweep.mode,
    )?;
    let residual = necessary_condition_residual(
        &ensemble,
        &adjoints,
        &ms.best_control,
        &params,
        &config.weights,
    )?;
    let j = best.final_j();
    Ok(SicaOptimizeResult {
        control: ms.best_control.values().to_vec(),
        report: SicaOptimizeReport {
            cost_mean: j.mean,
            cost_stderr: j.stderr,
            value_estimate: ms.value,
            iterations: best.iterations as u64,
            converged: best.converged,
            residual,
            n_cells: config.grid.n_steps() as u64,
        },
    })
}

/// Runs the control optimization for a scenario and returns an owned result
/// handle that can be queried for the report and the control values.
///
/// # Safety
/// `scenario` and `out` must be valid pointers. On success `*out` owns a
/// result that must be released with [`sica_result_free`].
#[no_mangle]
pub unsafe extern "C" fn sica_optimize(
    scenario: *const SicaScenario,
    out: *mut *mut SicaOptimizeResult,
) -> SicaStatus {
    let Some(s) = scenario.as_ref() else {
        return fail(SicaStatus::NullArgument, "scenario handle is null");
    };
    if out.is_null() {
        return fail(SicaStatus::NullArgument, "output handle pointer is null");
    }
    match optimize_result(&s.config) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(result));
            SicaStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Copies the flat optimization report out of a result handle.
///
/// # Safety
/// `result` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sica_result_report(
    result: *const SicaOptimizeResult,
    out: *mut SicaOptimizeReport,
) -> SicaStatus {
    let Some(r) = result.as_ref() else {
        return fail(SicaStatus::NullArgument, "result handle is null");
    };
    if out.is_null() {
        return fail(SicaStatus::NullArgument, "output pointer is null");
    }
    *out = r.report;
    SicaStatus::Ok
}

/// Copies the optimized per-cell control values into `buffer`.
///
/// Pass a null `buffer` to query the required length through `written`.
/// With a non-null buffer of insufficient `capacity` the call fails with
/// `BUFFER_TOO_SMALL` and still reports the required length.
///
/// # Safety
/// `result` and `written` must be valid pointers; a non-null `buffer` must
/// point to at least `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sica_result_control(
    result: *const SicaOptimizeResult,
    buffer: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> SicaStatus {
    let Some(r) = result.as_ref() else {
        return fail(SicaStatus::NullArgument, "result handle is null");
    };
    if written.is_null() {
        return fail(SicaStatus::NullArgument, "length pointer is null");
    }
    let needed = r.control.len();
    *written = needed;
    if buffer.is_null() {
        return SicaStatus::Ok;
    }
    if capacity < needed {
        return fail(
            SicaStatus::BufferTooSmall,
            format!("control buffer holds {capacity} values, {needed} required"),
        );
    }
    std::ptr::copy_nonoverlapping(r.control.as_ptr(), buffer, needed);
    SicaStatus::Ok
}

/// Releases an optimization result handle. Passing null is a no-op.
///
/// # Safety
/// `result` must be null or a pointer obtained from [`sica_optimize`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn sica_result_free(result: *mut SicaOptimizeResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

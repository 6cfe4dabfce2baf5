//! Computable near-optimality certificates and empirical order checks.
//!
//! None of the theoretical bounds for this problem come with a usable
//! constant, so every diagnostic here reports a raw, reproducible number:
//! the cost gap against a multistart value estimate, the residual of the
//! pointwise maximality condition (zero exactly at a sweep fixed point, and
//! nonnegative by construction), the implied near-optimality order, and a
//! log-log fit of state-divergence moments against control distance.

use crate::adjoint::AdjointPath;
use crate::control::{control_metric, ControlGrid};
use crate::cost::{estimate_j, treatment_gain, CostWeights};
use crate::error::{Error, Result};
use crate::fbsm::{candidate_values, fbsm_optimize, SweepConfig};
use crate::interval::{realize_set, ImpreciseParameterSet, ParameterSet};
use crate::model::{omega_bounds, StatePoint};
use crate::sde::{simulate_ensemble, Ensemble};
use crate::stats::{linear_fit, Estimate};
use rayon::prelude::*;
use serde::Serialize;

/// Flat summary of the near-optimality diagnostics for one control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NearOptReport {
    /// Absolute cost gap against the multistart value estimate.
    pub epsilon_gap: f64,
    /// Residual of the pointwise maximality condition.
    pub necessary_residual: f64,
    /// Cube root of the residual: the implied near-optimality order, up to
    /// an unknown constant.
    pub sufficient_gap: f64,
    /// Slope of the log-log state-divergence fit.
    pub order_fit_slope: f64,
    /// Coefficient of determination of that fit.
    pub order_fit_r2: f64,
}

impl NearOptReport {
    /// Assembles the flat report from its computed pieces.
    pub fn new(epsilon_gap: f64, necessary_residual: f64, order_fit: &LipschitzEstimate) -> Self {
        Self {
            epsilon_gap,
            necessary_residual,
            sufficient_gap: necessary_residual.cbrt(),
            order_fit_slope: order_fit.slope,
            order_fit_r2: order_fit.r2,
        }
    }
}

fn check_adjoint_ensemble(
    ensemble: &Ensemble,
    adjoints: &[AdjointPath],
    ctrl: &ControlGrid,
) -> Result<()> {
    if adjoints.len() != ensemble.n_paths() {
        return Err(Error::GridMismatch(format!(
            "{} adjoint paths for {} trajectories",
            adjoints.len(),
            ensemble.n_paths()
        )));
    }
    if ensemble.grid() != ctrl.grid()
        || adjoints.iter().any(|adj| adj.grid() != ctrl.grid())
    {
        return Err(Error::GridMismatch(
            "ensemble, adjoints, and control must share one grid".to_string(),
        ));
    }
    Ok(())
}

/// Residual of the pointwise maximality condition along a control.
///
/// Per cell, the ensemble-mean linear coefficient of the control in the
/// negated Hamiltonian is paired with the quadratic control penalty; the
/// residual integrates how far the control sits above the exact pointwise
/// minimum of that convex function. It is nonnegative and vanishes exactly
/// when every cell already minimizes. Cell `i` pairs its lower-node state
/// with its upper-node costate, matching the sweep's candidate pairing, so
/// a deterministic sweep fixed point has residual zero up to roundoff.
pub fn necessary_condition_residual(
    ensemble: &Ensemble,
    adjoints: &[AdjointPath],
    ctrl: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
) -> Result<f64> {
    check_adjoint_ensemble(ensemble, adjoints, ctrl)?;
    let n_steps = ctrl.grid().n_steps();
    let dt = ctrl.grid().dt();
    let (u_lo, u_hi) = ctrl.bounds();
    let inv = 1.0 / ensemble.n_paths() as f64;
    let mut residual = 0.0;
    for cell in 0..n_steps {
        let mut g = 0.0;
        for (traj, adj) in ensemble.paths().iter().zip(adjoints) {
            let p = &adj.p()[cell + 1];
            g += treatment_gain(traj.state(cell), params) * (p[1] - p[2]);
        }
        g *= inv;
        let phi = |v: f64| g * v + 0.5 * weights.w_u * v * v;
        let minimizer = if weights.w_u > 0.0 {
            (-g / weights.w_u).clamp(u_lo, u_hi)
        } else if g >= 0.0 {
            u_lo
        } else {
            u_hi
        };
        residual += dt * (phi(ctrl.value_at_cell(cell)) - phi(minimizer)).max(0.0);
    }
    Ok(residual)
}

/// Absolute gap between a control's estimated cost and a value estimate,
/// under common random numbers.
pub fn epsilon_optimality_gap(
    x0: &StatePoint,
    ctrl: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
    n_paths: usize,
    base_seed: u64,
    value_estimate: f64,
) -> Result<f64> {
    let j = estimate_j(x0, ctrl, params, weights, n_paths, base_seed)?;
    Ok((j.mean - value_estimate).abs())
}

/// Tests whether the maximality residual is within `epsilon` and reports the
/// implied near-optimality order `epsilon^(1/3)` without its unknown
/// constant factor.
pub fn sufficient_condition_check(
    ensemble: &Ensemble,
    adjoints: &[AdjointPath],
    ctrl: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
    epsilon: f64,
) -> Result<(bool, f64)> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!(
            "epsilon must be nonnegative and finite, got {epsilon}"
        )));
    }
    let residual = necessary_condition_residual(ensemble, adjoints, ctrl, params, weights)?;
    Ok((residual <= epsilon, epsilon.cbrt()))
}

/// Fraction of cells whose control value sits within `cell_tol` of the
/// pointwise Hamiltonian-maximizing candidate.
///
/// Pass multipliers from the discrete-cost backward field to check a sweep
/// fixed point exactly; the plain costate field agrees only up to a term of
/// order `dt`.
pub fn candidate_agreement_fraction(
    ensemble: &Ensemble,
    adjoints: &[AdjointPath],
    ctrl: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
    cell_tol: f64,
) -> Result<f64> {
    check_adjoint_ensemble(ensemble, adjoints, ctrl)?;
    let p_bar = crate::adjoint::mean_costates(adjoints)?;
    let star = candidate_values(&ensemble.mean_states(), &p_bar, ctrl, params, weights)?;
    let agree = ctrl
        .values()
        .iter()
        .zip(&star)
        .filter(|(&u, &s)| (u - s).abs() <= cell_tol)
        .count();
    Ok(agree as f64 / ctrl.grid().n_steps() as f64)
}

/// State-divergence moments against control distance, with their log-log fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    /// Control-metric distances, one per scale, exact multiples of `dt`.
    pub distances: Vec<f64>,
    /// Summed supremum moments of the paired state divergence per scale.
    pub moments: Vec<Estimate>,
    /// Slope of `log(moment)` against `log(distance)`.
    pub slope: f64,
    /// Fit quality of that regression.
    pub r2: f64,
}

/// Builds the comparison control for one scale: the first `ceil(s * n)`
/// cells flipped to the bound opposite their nearest one (ties go up), so
/// the control distance is exactly the flipped measure.
fn flip_prefix(ctrl: &ControlGrid, scale: f64) -> Result<(ControlGrid, f64)> {
    let n_steps = ctrl.grid().n_steps();
    let (u_lo, u_hi) = ctrl.bounds();
    let count = ((scale * n_steps as f64).ceil() as usize).clamp(1, n_steps);
    let mut values = ctrl.values().to_vec();
    for value in values.iter_mut().take(count) {
        *value = if *value - u_lo <= u_hi - *value {
            u_hi
        } else {
            u_lo
        };
    }
    let flipped = ctrl.with_values(values)?;
    Ok((flipped, count as f64 * ctrl.grid().dt()))
}

/// Empirical state-continuity check in the control.
///
/// For each scale the base control is perturbed on a prefix of cells, both
/// controls are simulated with identical noise, and the summed
/// `2 * theta`-th supremum moments of the componentwise divergence are
/// recorded against the exact control distance. The returned fit regresses
/// the log moments on the log distances over the strictly positive points.
#[allow(clippy::too_many_arguments)]
pub fn state_lipschitz_estimate(
    x0: &StatePoint,
    u_base: &ControlGrid,
    scales: &[f64],
    theta: f64,
    k: f64,
    params: &ParameterSet,
    n_paths: usize,
    base_seed: u64,
) -> Result<LipschitzEstimate> {
    if scales.len() < 3 {
        return Err(Error::domain(format!(
            "need at least 3 perturbation scales, got {}",
            scales.len()
        )));
    }
    for &s in scales {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::domain(format!(
                "perturbation scales must lie in (0, 1], got {s}"
            )));
        }
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::domain(format!(
            "moment exponent must be positive, got {theta}"
        )));
    }
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::domain(format!(
            "distance exponent must lie strictly inside (0, 1), got {k}"
        )));
    }
    if k * theta >= 1.0 {
        return Err(Error::domain(format!(
            "the product of the exponents must stay below 1, got {}",
            k * theta
        )));
    }
    let (u_lo, u_hi) = u_base.bounds();
    if u_hi <= u_lo {
        return Err(Error::domain(
            "degenerate control bounds leave nothing to flip",
        ));
    }
    if n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let base = simulate_ensemble(x0, u_base, params, n_paths, base_seed)?;
    let mut distances = Vec::with_capacity(scales.len());
    let mut moments = Vec::with_capacity(scales.len());
    for &scale in scales {
        let (flipped, distance) = flip_prefix(u_base, scale)?;
        debug_assert_eq!(
            distance,
            control_metric(u_base, &flipped, u_base.default_cell_tol()).unwrap_or(f64::NAN)
        );
        let other = simulate_ensemble(x0, &flipped, params, n_paths, base_seed)?;
        let samples: Vec<f64> = base
            .paths()
            .iter()
            .zip(other.paths())
            .map(|(a, b)| {
                (0..4)
                    .map(|i| {
                        let sup = a
                            .states()
                            .iter()
                            .zip(b.states())
                            .map(|(xa, xb)| (xa.as_array()[i] - xb.as_array()[i]).abs())
                            .fold(0.0f64, f64::max);
                        sup.powf(2.0 * theta)
                    })
                    .sum()
            })
            .collect();
        distances.push(distance);
        moments.push(Estimate::from_samples(&samples));
    }
    let mut log_d = Vec::new();
    let mut log_m = Vec::new();
    for (d, m) in distances.iter().zip(&moments) {
        if *d > 0.0 && m.mean > 0.0 {
            log_d.push(d.ln());
            log_m.push(m.mean.ln());
        }
    }
    let (slope, r2) = if log_d.len() < 2 {
        (0.0, 0.0)
    } else {
        let (slope, _, r2) = linear_fit(&log_d, &log_m);
        (slope, r2)
    };
    Ok(LipschitzEstimate {
        distances,
        moments,
        slope,
        r2,
    })
}

/// One row of the imprecision sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KSweepRow {
    /// Realization exponent.
    pub k: f64,
    /// Final cost mean of the sweep at this realization.
    pub j_mean: f64,
    /// Standard error of that cost.
    pub j_stderr: f64,
    /// Lower bound of the positively invariant total-population region.
    pub omega_low: f64,
    /// Upper bound of that region.
    pub omega_high: f64,
    /// Mean of the optimized control values.
    pub u_mean: f64,
    /// Maximum of the optimized control values.
    pub u_max: f64,
}

/// Optimizes the control at every realization exponent and tabulates cost,
/// invariant-region bounds, and control summaries.
///
/// The exponents are processed in parallel; rows come back in input order
/// and are bitwise independent of the schedule.
pub fn k_sweep(
    x0: &StatePoint,
    imprecise: &ImpreciseParameterSet,
    ks: &[f64],
    initial: &ControlGrid,
    weights: &CostWeights,
    cfg: &SweepConfig,
) -> Result<Vec<KSweepRow>> {
    ks.par_iter()
        .map(|&k| {
            let params = realize_set(imprecise, k)?;
            let omega = omega_bounds(&params)?;
            let (control, report) = fbsm_optimize(x0, initial, &params, weights, cfg)?;
            let j = report.final_j();
            let n = control.values().len() as f64;
            let u_mean = control.values().iter().sum::<f64>() / n;
            let u_max = control.values().iter().fold(0.0f64, |acc, &v| acc.max(v));
            Ok(KSweepRow {
                k,
                j_mean: j.mean,
                j_stderr: j.stderr,
                omega_low: omega.n_low,
                omega_high: omega.n_high,
                u_mean,
                u_max,
            })
        })
        .collect()
}

//! Forward-backward sweep optimization of the treatment control.
//!
//! Each iteration simulates an ensemble under the current control with common
//! random numbers, solves the backward costate equations path by path,
//! averages the costates, forms the pointwise Hamiltonian-maximizing
//! candidate at the ensemble-mean state, and relaxes toward it. A
//! backtracking rule halves the relaxation weight whenever the estimated
//! cost rises beyond its Monte-Carlo slack, which keeps the cost history
//! monotone in the deterministic case. Convergence is declared through the
//! piecewise-constant control metric with the threshold scaled by the step
//! weight, so the stopping test measures the distance to the fixed point
//! rather than the (relaxation-shrunk) step length.

use crate::adjoint::{
    adjoint_ensemble, discrete_cost_adjoint_ensemble, mean_costates, AdjointMode,
};
use crate::control::{control_metric, ControlGrid};
use crate::cost::{estimate_j, pointwise_argmax_u, CostWeights};
use crate::diagnostics::necessary_condition_residual;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::interval::ParameterSet;
use crate::model::StatePoint;
use crate::sde::simulate_ensemble;
use crate::stats::Estimate;
use serde::Serialize;

/// Maximum number of relaxation halvings inside one iteration.
const MAX_BACKTRACKS: u32 = 20;

/// Tuning knobs for the forward-backward sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Relaxation weight toward the candidate control, in `(0, 1]`.
    pub rho: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Convergence threshold on the control metric, strictly positive.
    pub tolerance: f64,
    /// Ensemble size per iteration.
    pub n_paths: usize,
    /// Seed shared by every iteration (common random numbers).
    pub base_seed: u64,
    /// Costate solver mode.
    pub mode: AdjointMode,
    /// Per-cell disagreement tolerance; `None` uses the control default.
    pub cell_tol: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            max_iters: 200,
            tolerance: 1e-9,
            n_paths: 64,
            base_seed: 0,
            mode: AdjointMode::CertaintyEquivalent,
            cell_tol: None,
        }
    }
}

impl SweepConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::domain(format!(
                "relaxation weight must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("iteration cap must be at least 1"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::domain(format!(
                "convergence tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::domain("ensemble size must be at least 1"));
        }
        if let Some(tol) = self.cell_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::domain(format!(
                    "cell tolerance must be positive and finite, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Convergence bookkeeping for one sweep run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Iterations actually performed.
    pub iterations: usize,
    /// Cost estimate before the first iteration and after each one.
    pub j_history: Vec<Estimate>,
    /// Control-metric distance of each accepted step, threshold-scaled so it
    /// measures the distance to the sweep fixed point.
    pub d_history: Vec<f64>,
    /// Whether the metric dropped below the tolerance before the cap.
    pub converged: bool,
    /// Maximality-condition residual of the final control.
    pub residual: f64,
}

impl SweepReport {
    /// Final cost estimate of the run.
    pub fn final_j(&self) -> Estimate {
        *self.j_history.last().expect("history is never empty")
    }
}

/// Pointwise Hamiltonian-maximizing control per cell at the ensemble-mean
/// state and mean costates.
///
/// Cell `i` pairs its lower-node state with its upper-node costate. That is
/// the pairing under which the backward pass is the exact discrete adjoint
/// of the forward Euler scheme, so the sweep's fixed point coincides with a
/// stationary point of the discrete cost instead of sitting a grid-spacing
/// away from it and fighting the descent safeguard.
pub(crate) fn candidate_values(
    mean_states: &[StatePoint],
    mean_p: &[[f64; 4]],
    ctrl: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
) -> Result<Vec<f64>> {
    let (u_lo, u_hi) = ctrl.bounds();
    (0..ctrl.grid().n_steps())
        .map(|i| pointwise_argmax_u(&mean_states[i], &mean_p[i + 1], params, weights, u_lo, u_hi))
        .collect()
}

/// Improves a control by relaxed forward-backward sweeps.
///
/// Returns the final control together with the iteration record. The same
/// `base_seed` drives every iteration, so cost comparisons between iterates
/// use common random numbers and the whole run is deterministic.
pub fn fbsm_optimize(
    x0: &StatePoint,
    initial: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
    cfg: &SweepConfig,
) -> Result<(ControlGrid, SweepReport)> {
    cfg.validate()?;
    let cell_tol = cfg.cell_tol.unwrap_or_else(|| initial.default_cell_tol());
    let mut u = initial.clone();
    let mut j_curr = estimate_j(x0, &u, params, weights, cfg.n_paths, cfg.base_seed)?;
    let mut j_history = vec![j_curr];
    let mut d_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        let ensemble = simulate_ensemble(x0, &u, params, cfg.n_paths, cfg.base_seed)?;
        let adjoints = discrete_cost_adjoint_ensemble(&ensemble, &u, params, weights, cfg.mode)?;
        let p_bar = mean_costates(&adjoints)?;
        let x_bar = ensemble.mean_states();
        let star = candidate_values(&x_bar, &p_bar, &u, params, weights)?;

        let mut rho = cfg.rho;
        let mut backtracks = 0;
        let (u_next, j_next, rho_used) = loop {
            let trial_values: Vec<f64> = u
                .values()
                .iter()
                .zip(&star)
                .map(|(&curr, &cand)| curr + rho * (cand - curr))
                .collect();
            let trial = u.with_values(trial_values)?;
            let j_trial = estimate_j(x0, &trial, params, weights, cfg.n_paths, cfg.base_seed)?;
            let slack = 2.0 * (j_trial.stderr + j_curr.stderr);
            if j_trial.mean <= j_curr.mean + slack || backtracks >= MAX_BACKTRACKS {
                break (trial, j_trial, rho);
            }
            rho *= 0.5;
            backtracks += 1;
        };

        let d = control_metric(&u_next, &u, rho_used * cell_tol / 2.0)?;
        u = u_next;
        j_curr = j_next;
        j_history.push(j_curr);
        d_history.push(d);
        iterations += 1;
        if d <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let ensemble = simulate_ensemble(x0, &u, params, cfg.n_paths, cfg.base_seed)?;
    let adjoints = adjoint_ensemble(&ensemble, &u, params, weights, cfg.mode)?;
    let residual = necessary_condition_residual(&ensemble, &adjoints, &u, params, weights)?;

    Ok((
        u,
        SweepReport {
            iterations,
            j_history,
            d_history,
            converged,
            residual,
        },
    ))
}

/// Outcome of a multistart value search.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartResult {
    /// Smallest final cost mean across the starts.
    pub value: f64,
    /// Index of the winning start.
    pub best_index: usize,
    /// Control produced by the winning start.
    pub best_control: ControlGrid,
    /// Per-start iteration records, in start order.
    pub reports: Vec<SweepReport>,
}

/// Base-2 van der Corput point `k`, an exact dyadic in `(0, 1)`.
fn van_der_corput(mut k: u64) -> f64 {
    let mut frac = 0.0;
    let mut base = 0.5;
    while k > 0 {
        if k & 1 == 1 {
            frac += base;
        }
        base *= 0.5;
        k >>= 1;
    }
    frac
}

/// Normalized position of multistart start `index` within the control range.
///
/// The sequence is nested: midpoint, lower bound, upper bound, then a base-2
/// van der Corput fill. A longer run therefore extends a shorter one, which
/// makes the multistart value a running minimum.
fn start_fraction(index: usize) -> f64 {
    match index {
        0 => 0.5,
        1 => 0.0,
        2 => 1.0,
        _ => van_der_corput(index as u64 - 1),
    }
}

/// Estimates the value of the control problem by the best of `n_starts`
/// sweep runs from constant initial controls spanning the admissible range.
#[allow(clippy::too_many_arguments)]
pub fn multistart_value_estimate(
    x0: &StatePoint,
    grid: TimeGrid,
    u_lo: f64,
    u_hi: f64,
    params: &ParameterSet,
    weights: &CostWeights,
    cfg: &SweepConfig,
    n_starts: usize,
) -> Result<MultistartResult> {
    if n_starts == 0 {
        return Err(Error::domain("multistart needs at least one start"));
    }
    let mut reports = Vec::with_capacity(n_starts);
    let mut best: Option<(usize, f64, ControlGrid)> = None;
    for index in 0..n_starts {
        let level = u_lo + (u_hi - u_lo) * start_fraction(index);
        let initial = ControlGrid::constant(grid, level, u_lo, u_hi)?;
        let (control, report) = fbsm_optimize(x0, &initial, params, weights, cfg)?;
        let value = report.final_j().mean;
        let improves = match &best {
            Some((_, incumbent, _)) => value < *incumbent,
            None => true,
        };
        if improves {
            best = Some((index, value, control));
        }
        reports.push(report);
    }
    let (best_index, value, best_control) = best.expect("at least one start ran");
    Ok(MultistartResult {
        value,
        best_index,
        best_control,
        reports,
    })
}

//! Cost functional and the stochastic Hamiltonian of the control problem.
//!
//! The objective penalizes infection burden along the way plus a quadratic
//! control effort, and the terminal load of the infected and AIDS classes:
//!
//! ```text
//! J(u) = E[ integral_0^T (w_i*I + w_c*C + w_a*A + w_u/2 * u^2) dt
//!           + w_t*(I(T) + A(T)) ]
//! ```
//!
//! The Hamiltonian pairs drift and diffusion with the costates `p` and `q`
//! and subtracts the running cost, so minimizing `J` corresponds to
//! pointwise maximization of `H` in the control.

use serde::Serialize;

use crate::control::ControlGrid;
use crate::error::{Error, Result};
use crate::interval::ParameterSet;
use crate::model::{diffusion, drift, StatePoint};
use crate::sde::{simulate_ensemble, TrajectoryPath};
use crate::stats::Estimate;

/// Weights of the running and terminal cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostWeights {
    /// Running weight on the infected class.
    pub w_i: f64,
    /// Running weight on the chronic class.
    pub w_c: f64,
    /// Running weight on the AIDS class.
    pub w_a: f64,
    /// Quadratic effort weight on the control.
    pub w_u: f64,
    /// Terminal weight on `I(T) + A(T)`.
    pub w_t: f64,
}

impl Default for CostWeights {
    /// Demonstration weights; they set relative priorities only and carry no
    /// calibrated meaning.
    fn default() -> Self {
        Self {
            w_i: 1.0,
            w_c: 0.5,
            w_a: 2.0,
            w_u: 1.0,
            w_t: 1.0,
        }
    }
}

impl CostWeights {
    /// Gradient of the running cost with respect to the state.
    pub fn state_grad(&self) -> [f64; 4] {
        [0.0, self.w_i, self.w_c, self.w_a]
    }

    /// Gradient of the terminal cost with respect to the state.
    pub fn terminal_grad(&self) -> [f64; 4] {
        [0.0, self.w_t, 0.0, self.w_t]
    }
}

/// Running cost `w_i*I + w_c*C + w_a*A + w_u/2 * u^2`.
pub fn running_cost(x: &StatePoint, u: f64, weights: &CostWeights) -> f64 {
    weights.w_i * x.i + weights.w_c * x.c + weights.w_a * x.a + 0.5 * weights.w_u * u * u
}

/// Terminal cost `w_t * (I + A)`.
pub fn terminal_cost(x: &StatePoint, weights: &CostWeights) -> f64 {
    weights.w_t * (x.i + x.a)
}

/// Trapezoid-rule cost of a single trajectory under `ctrl`.
///
/// Cell `i` contributes `dt/2 * (L(x_i, u_i) + L(x_{i+1}, u_i))`; the
/// terminal cost is added at the final node.
pub fn path_cost(path: &TrajectoryPath, ctrl: &ControlGrid, weights: &CostWeights) -> Result<f64> {
    if path.grid() != ctrl.grid() {
        return Err(Error::GridMismatch(format!(
            "trajectory grid {:?} differs from control grid {:?}",
            path.grid(),
            ctrl.grid()
        )));
    }
    let dt = path.grid().dt();
    let mut total = 0.0;
    for cell in 0..ctrl.grid().n_steps() {
        let u = ctrl.value_at_cell(cell);
        let left = running_cost(path.state(cell), u, weights);
        let right = running_cost(path.state(cell + 1), u, weights);
        total += 0.5 * dt * (left + right);
    }
    Ok(total + terminal_cost(path.terminal(), weights))
}

/// Monte-Carlo estimate of `J(u)` over a fresh ensemble of `n_paths`
/// trajectories seeded from `base_seed` (common random numbers: estimates of
/// different controls from the same `base_seed` share their noise).
pub fn estimate_j(
    x0: &StatePoint,
    ctrl: &ControlGrid,
    params: &ParameterSet,
    weights: &CostWeights,
    n_paths: usize,
    base_seed: u64,
) -> Result<Estimate> {
    let ensemble = simulate_ensemble(x0, ctrl, params, n_paths, base_seed)?;
    let costs = ensemble
        .paths()
        .iter()
        .map(|path| path_cost(path, ctrl, weights))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&costs))
}

/// Stochastic Hamiltonian `<f, p> + <sigma, q> - L`.
pub fn hamiltonian(
    x: &StatePoint,
    u: f64,
    p: &[f64; 4],
    q: &[f64; 4],
    params: &ParameterSet,
    weights: &CostWeights,
) -> f64 {
    let f = drift(x, u, params);
    let sigma = diffusion(x, params);
    let mut h = -running_cost(x, u, weights);
    for j in 0..4 {
        h += f[j] * p[j] + sigma[j] * q[j];
    }
    h
}

/// Marginal effect of the control on the treatment flow:
/// `d(treatment)/du = m * I / (1 + gamma * I)`.
pub fn treatment_gain(x: &StatePoint, params: &ParameterSet) -> f64 {
    params.m * x.i / (1.0 + params.gamma * x.i)
}

/// Partial derivative of the Hamiltonian in the control:
/// `H_u = (m I / (1 + gamma I)) (p3 - p2) - w_u * u`.
pub fn hamiltonian_du(
    x: &StatePoint,
    u: f64,
    p: &[f64; 4],
    params: &ParameterSet,
    weights: &CostWeights,
) -> f64 {
    treatment_gain(x, params) * (p[2] - p[1]) - weights.w_u * u
}

/// Gradient of the Hamiltonian in the state, in `[S, I, C, A]` order.
pub fn hamiltonian_dx(
    x: &StatePoint,
    u: f64,
    p: &[f64; 4],
    q: &[f64; 4],
    params: &ParameterSet,
    weights: &CostWeights,
) -> [f64; 4] {
    // Shared pieces: infection pressure B = I + eta_c*C + eta_a*A enters the
    // drift through beta*B*S and the diffusion through -delta*B*S, so every
    // partial carries matching (p2 - p1) and (q2 - q1) combinations.
    let b = x.i + params.eta_c * x.c + params.eta_a * x.a;
    let dp = p[1] - p[0];
    let dq = q[1] - q[0];
    let lx = weights.state_grad();
    // d(treatment)/dI = m*u / (1 + gamma*I)^2 moves mass between p2 and p3.
    let sat = 1.0 + params.gamma * x.i;
    let treat_di = params.m * u / (sat * sat);
    let h_s = params.beta * b * dp - params.mu * p[0] + params.delta * b * dq;
    let h_i = params.beta * x.s * dp + params.delta * x.s * dq - params.eps3() * p[1]
        + treat_di * (p[2] - p[1])
        + params.phi * p[2]
        + params.e * p[3]
        - lx[1];
    let h_c = params.eta_c * (params.beta * x.s * dp + params.delta * x.s * dq)
        + params.omega * p[1]
        - params.eps2() * p[2]
        - lx[2];
    let h_a = params.eta_a * (params.beta * x.s * dp + params.delta * x.s * dq)
        + params.alpha * p[1]
        - params.eps1() * p[3]
        - lx[3];
    [h_s, h_i, h_c, h_a]
}

/// Pointwise maximizer of `H` in the control over `[u_lo, u_hi]`:
/// the unconstrained stationary point `(m I/(1+gamma I))(p3 - p2)/w_u`
/// clamped to the bounds. Requires `w_u > 0` for strict concavity.
pub fn pointwise_argmax_u(
    x: &StatePoint,
    p: &[f64; 4],
    params: &ParameterSet,
    weights: &CostWeights,
    u_lo: f64,
    u_hi: f64,
) -> Result<f64> {
    if weights.w_u <= 0.0 {
        return Err(Error::domain(format!(
            "control argmax requires w_u > 0, got {}",
            weights.w_u
        )));
    }
    let unconstrained = treatment_gain(x, params) * (p[2] - p[1]) / weights.w_u;
    Ok(unconstrained.clamp(u_lo, u_hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::sde::{sample_brownian, simulate_path};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> ParameterSet {
        ParameterSet {
            lambda: 2.0,
            beta: 0.02,
            mu: 0.1,
            eta_c: 0.1,
            eta_a: 1.5,
            phi: 0.5,
            e: 0.05,
            alpha: 0.2,
            omega: 0.15,
            d: 0.1,
            delta: 0.02,
            m: 0.5,
            gamma: 0.5,
        }
    }

    fn x0() -> StatePoint {
        StatePoint {
            s: 12.0,
            i: 2.0,
            c: 1.0,
            a: 0.5,
        }
    }

    #[test]
    fn running_and_terminal_costs_match_hand_values() {
        let w = CostWeights::default();
        let x = x0();
        // 1*2 + 0.5*1 + 2*0.5 + 0.5*1*0.16 = 3.58
        assert_relative_eq!(running_cost(&x, 0.4, &w), 3.58, max_relative = 1e-15);
        assert_eq!(terminal_cost(&x, &w), 2.5);
    }

    #[test]
    fn zero_weights_zero_cost() {
        let w = CostWeights {
            w_i: 0.0,
            w_c: 0.0,
            w_a: 0.0,
            w_u: 0.0,
            w_t: 0.0,
        };
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ctrl = ControlGrid::constant(grid, 0.7, 0.0, 1.0).unwrap();
        let est = estimate_j(&x0(), &ctrl, &params(), &w, 8, 1).unwrap();
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));
    }

    #[test]
    fn estimate_matches_independent_quadrature_on_noiseless_path() {
        let mut p = params();
        p.delta = 0.0;
        let w = CostWeights::default();
        let grid = TimeGrid::new(4.0, 128).unwrap();
        let mut values: Vec<f64> = (0..128).map(|i| (i as f64 / 127.0) * 0.8).collect();
        values[40] = 0.1;
        let ctrl = ControlGrid::new(grid, values, 0.0, 1.0).unwrap();
        let est = estimate_j(&x0(), &ctrl, &p, &w, 1, 5).unwrap();
        // Re-sum the trapezoid rule from scratch along the same trajectory.
        let path = simulate_path(&x0(), &ctrl, &p, &sample_brownian(&grid, 77)).unwrap();
        let dt = grid.dt();
        let mut expected = terminal_cost(path.terminal(), &w);
        for cell in 0..grid.n_steps() {
            let u = ctrl.value_at_cell(cell);
            expected += 0.5
                * dt
                * (running_cost(path.state(cell), u, &w)
                    + running_cost(path.state(cell + 1), u, &w));
        }
        assert_relative_eq!(est.mean, expected, max_relative = 1e-6);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn shared_seeds_reduce_variance_of_cost_differences() {
        let p = params();
        let w = CostWeights::default();
        let grid = TimeGrid::new(5.0, 200).unwrap();
        let u = ControlGrid::constant(grid, 0.2, 0.0, 1.0).unwrap();
        let v = ControlGrid::constant(grid, 0.8, 0.0, 1.0).unwrap();
        let n = 400;
        let costs = |ctrl: &ControlGrid, seed: u64| -> Vec<f64> {
            let ensemble = simulate_ensemble(&x0(), ctrl, &p, n, seed).unwrap();
            ensemble
                .paths()
                .iter()
                .map(|path| path_cost(path, ctrl, &w).unwrap())
                .collect()
        };
        let sample_var = |d: &[f64]| {
            let m = d.iter().sum::<f64>() / d.len() as f64;
            d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (d.len() - 1) as f64
        };
        let paired: Vec<f64> = costs(&u, 42)
            .iter()
            .zip(costs(&v, 42))
            .map(|(a, b)| a - b)
            .collect();
        let independent: Vec<f64> = costs(&u, 42)
            .iter()
            .zip(costs(&v, 4242))
            .map(|(a, b)| a - b)
            .collect();
        let var_paired = sample_var(&paired);
        let var_independent = sample_var(&independent);
        // Var(S^2) ~ 2 sigma^4 / (n-1); require separation beyond 3 sigma of
        // the combined estimator noise.
        let spread = (2.0 / (n as f64 - 1.0)).sqrt()
            * (var_paired * var_paired + var_independent * var_independent).sqrt();
        assert!(
            var_independent - var_paired > 3.0 * spread,
            "paired variance {var_paired} not significantly below independent {var_independent}"
        );
    }

    #[test]
    fn hamiltonian_with_zero_costates_is_negative_running_cost() {
        let p = params();
        let w = CostWeights::default();
        let x = x0();
        let h = hamiltonian(&x, 0.4, &[0.0; 4], &[0.0; 4], &p, &w);
        assert_eq!(h, -running_cost(&x, 0.4, &w));
    }

    #[test]
    fn hamiltonian_du_matches_central_difference() {
        let p = params();
        let w = CostWeights::default();
        let x = x0();
        let pp = [0.4, -1.2, 0.3, -0.8];
        let u = 0.37;
        let h = 1e-5;
        // H is quadratic in u, so the central difference is exact up to
        // roundoff.
        let fd = (hamiltonian(&x, u + h, &pp, &[0.0; 4], &p, &w)
            - hamiltonian(&x, u - h, &pp, &[0.0; 4], &p, &w))
            / (2.0 * h);
        assert_relative_eq!(
            hamiltonian_du(&x, u, &pp, &p, &w),
            fd,
            max_relative = 1e-8
        );
    }

    #[test]
    fn hamiltonian_dx_matches_central_differences() {
        let p = params();
        let w = CostWeights::default();
        let x = x0();
        let pp = [0.4, -1.2, 0.3, -0.8];
        let qq = [0.15, -0.15, 0.0, 0.0];
        let u = 0.37;
        let grad = hamiltonian_dx(&x, u, &pp, &qq, &p, &w);
        let h = 1e-5;
        for j in 0..4 {
            let mut hi = x.as_array();
            let mut lo = x.as_array();
            hi[j] += h;
            lo[j] -= h;
            let fd = (hamiltonian(&StatePoint::from_array(hi), u, &pp, &qq, &p, &w)
                - hamiltonian(&StatePoint::from_array(lo), u, &pp, &qq, &p, &w))
                / (2.0 * h);
            assert_relative_eq!(grad[j], fd, max_relative = 1e-7, epsilon = 1e-9);
        }
    }

    #[test]
    fn hamiltonian_dx_reduces_to_mu_term_in_disease_free_state() {
        let p = params();
        let w = CostWeights {
            w_i: 0.0,
            w_c: 0.0,
            w_a: 0.0,
            w_u: 1.0,
            w_t: 1.0,
        };
        let x = StatePoint {
            s: 9.0,
            i: 0.0,
            c: 0.0,
            a: 0.0,
        };
        let pp = [0.7, -0.2, 0.1, -0.4];
        let grad = hamiltonian_dx(&x, 0.3, &pp, &[0.0; 4], &p, &w);
        // With I = C = A = 0 the infection pressure vanishes and the S-partial
        // collapses to -mu * p1.
        assert_eq!(grad[0], -p.mu * pp[0]);
    }

    #[test]
    fn argmax_requires_positive_effort_weight() {
        let w = CostWeights {
            w_u: 0.0,
            ..Default::default()
        };
        assert!(pointwise_argmax_u(&x0(), &[0.0; 4], &params(), &w, 0.0, 1.0).is_err());
    }

    #[test]
    fn argmax_interior_point_is_stationary() {
        let p = params();
        let w = CostWeights::default();
        let x = x0();
        // p3 - p2 = 0.8 gives an interior maximizer.
        let pp = [0.0, -0.5, 0.3, 0.0];
        let u_star = pointwise_argmax_u(&x, &pp, &p, &w, 0.0, 1.0).unwrap();
        assert!(u_star > 0.0 && u_star < 1.0, "u* = {u_star} not interior");
        assert_relative_eq!(
            hamiltonian_du(&x, u_star, &pp, &p, &w),
            0.0,
            epsilon = 1e-14
        );
    }

    proptest! {
        /// The running cost is convex in the control: midpoints never exceed
        /// chord averages.
        #[test]
        fn running_cost_is_convex_in_u(
            u1 in 0.0f64..=1.0,
            u2 in 0.0f64..=1.0,
        ) {
            let w = CostWeights::default();
            let x = x0();
            let mid = running_cost(&x, 0.5 * (u1 + u2), &w);
            let chord = 0.5 * (running_cost(&x, u1, &w) + running_cost(&x, u2, &w));
            prop_assert!(mid <= chord + 1e-12 * chord.abs());
        }

        /// The clamped argmax stays within bounds and dominates nearby
        /// feasible controls.
        #[test]
        fn argmax_is_feasible_and_locally_maximal(
            p2 in -3.0f64..3.0,
            p3 in -3.0f64..3.0,
            i in 0.0f64..10.0,
        ) {
            let p = params();
            let w = CostWeights::default();
            let x = StatePoint { s: 8.0, i, c: 1.0, a: 0.5 };
            let pp = [0.1, p2, p3, -0.2];
            let u_star = pointwise_argmax_u(&x, &pp, &p, &w, 0.0, 1.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&u_star));
            let h_star = hamiltonian(&x, u_star, &pp, &[0.0; 4], &p, &w);
            for step in [-1e-3, 1e-3] {
                let u_near = (u_star + step).clamp(0.0, 1.0);
                let h_near = hamiltonian(&x, u_near, &pp, &[0.0; 4], &p, &w);
                prop_assert!(h_near <= h_star + 1e-12 * (1.0 + h_star.abs()));
            }
        }
    }
}

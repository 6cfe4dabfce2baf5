//! Shared fixtures for integration tests: reference parameter sets and an
//! independent high-order deterministic integrator used as an oracle.

use sica_noc::interval::ParameterSet;
use sica_noc::model::{drift, StatePoint};

/// The fixed reference parameter set used across integration tests. Noise is
/// off by default; tests that exercise the stochastic layer override `delta`.
pub fn demo_params() -> ParameterSet {
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
        delta: 0.0,
        m: 0.5,
        gamma: 0.5,
    }
}

/// The reference initial state, inside the invariant population region
/// `[10, 20]` of [`demo_params`].
pub fn demo_x0() -> StatePoint {
    StatePoint {
        s: 12.0,
        i: 2.0,
        c: 1.0,
        a: 0.5,
    }
}

/// Classic fourth-order Runge-Kutta integration of the drift ODE under a
/// constant control, written independently of the production stepper so it
/// can serve as an oracle for the zero-noise reduction.
pub fn rk4_constant_u(
    x0: &StatePoint,
    u: f64,
    params: &ParameterSet,
    t_end: f64,
    n_steps: usize,
) -> StatePoint {
    let dt = t_end / n_steps as f64;
    let mut x = [x0.s, x0.i, x0.c, x0.a];
    let f = |y: &[f64; 4]| -> [f64; 4] {
        let p = StatePoint {
            s: y[0],
            i: y[1],
            c: y[2],
            a: y[3],
        };
        drift(&p, u, params)
    };
    for _ in 0..n_steps {
        let k1 = f(&x);
        let mut y = [0.0; 4];
        for i in 0..4 {
            y[i] = x[i] + 0.5 * dt * k1[i];
        }
        let k2 = f(&y);
        for i in 0..4 {
            y[i] = x[i] + 0.5 * dt * k2[i];
        }
        let k3 = f(&y);
        for i in 0..4 {
            y[i] = x[i] + dt * k3[i];
        }
        let k4 = f(&y);
        for i in 0..4 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    StatePoint {
        s: x[0],
        i: x[1],
        c: x[2],
        a: x[3],
    }
}

//! SICA compartment dynamics: drift, diffusion, and the invariant region.
//!
//! The population splits into susceptible (S), HIV-infected (I),
//! chronically infected under treatment (C), and AIDS (A) compartments.
//! New infections occur at rate `beta * (I + eta_c*C + eta_a*A) * S`, and a
//! bounded control `u` moves infected individuals into the chronic class
//! through a saturating treatment term. The same infection pressure drives a
//! multiplicative Brownian perturbation that transfers mass between S and I
//! only, so the total population is unaffected by the noise.

use crate::error::{Error, Result};
use crate::interval::ParameterSet;

/// One point of the compartment state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    /// Susceptible individuals.
    pub s: f64,
    /// HIV-infected individuals.
    pub i: f64,
    /// Chronically infected individuals under treatment.
    pub c: f64,
    /// Individuals with AIDS.
    pub a: f64,
}

impl StatePoint {
    /// Total population `N = S + I + C + A`.
    pub fn total(&self) -> f64 {
        self.s + self.i + self.c + self.a
    }

    /// Components in `[S, I, C, A]` order.
    pub fn as_array(&self) -> [f64; 4] {
        [self.s, self.i, self.c, self.a]
    }

    /// Builds a state from components in `[S, I, C, A]` order.
    pub fn from_array(x: [f64; 4]) -> Self {
        Self {
            s: x[0],
            i: x[1],
            c: x[2],
            a: x[3],
        }
    }

    /// Compartment labels matching [`as_array`](Self::as_array) order.
    pub const LABELS: [&'static str; 4] = ["S", "I", "C", "A"];
}

/// Population bounds of the invariant region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaBounds {
    /// Lower population bound `lambda / (mu + d)`.
    pub n_low: f64,
    /// Upper population bound `lambda / mu`.
    pub n_high: f64,
}

impl OmegaBounds {
    /// Default containment slack, proportional to the upper bound.
    pub fn default_tol(&self) -> f64 {
        1e-9 * self.n_high
    }
}

/// Infection pressure `I + eta_c*C + eta_a*A` weighted by contact rate and S.
fn infection_flux(x: &StatePoint, params: &ParameterSet) -> f64 {
    (x.i + params.eta_c * x.c + params.eta_a * x.a) * x.s
}

/// Saturating treatment flow `m * u * I / (1 + gamma * I)` from I to C.
pub fn treatment_term(x: &StatePoint, u: f64, params: &ParameterSet) -> f64 {
    params.m * u * x.i / (1.0 + params.gamma * x.i)
}

/// Drift vector of the controlled dynamics, in `[S, I, C, A]` order.
pub fn drift(x: &StatePoint, u: f64, params: &ParameterSet) -> [f64; 4] {
    let force = params.beta * infection_flux(x, params);
    let treat = treatment_term(x, u, params);
    [
        params.lambda - force - params.mu * x.s,
        force - params.eps3() * x.i + params.alpha * x.a + params.omega * x.c - treat,
        params.phi * x.i - params.eps2() * x.c + treat,
        params.e * x.i - params.eps1() * x.a,
    ]
}

/// Diffusion vector: the noise moves mass between S and I only, so the
/// first two components cancel exactly and the last two are zero.
pub fn diffusion(x: &StatePoint, params: &ParameterSet) -> [f64; 4] {
    let sigma_s = -params.delta * infection_flux(x, params);
    [sigma_s, -sigma_s, 0.0, 0.0]
}

/// Population bounds of the invariant region; requires `mu > 0`.
pub fn omega_bounds(params: &ParameterSet) -> Result<OmegaBounds> {
    if params.mu <= 0.0 {
        return Err(Error::domain(format!(
            "population bounds require mu > 0, got mu = {}",
            params.mu
        )));
    }
    Ok(OmegaBounds {
        n_low: params.lambda / (params.mu + params.d),
        n_high: params.lambda / params.mu,
    })
}

/// Whether the total population lies within the invariant region, up to `tol`.
pub fn in_omega(x: &StatePoint, bounds: &OmegaBounds, tol: f64) -> bool {
    let n = x.total();
    bounds.n_low - tol <= n && n <= bounds.n_high + tol
}

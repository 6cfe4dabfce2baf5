//! Scenario configuration: one TOML file describing a full study.
//!
//! The file carries the interval-valued rates, the realization exponent(s),
//! the initial state, the time grid, control bounds, cost weights, sweep
//! settings, and output location. Every omitted optional section falls back
//! to documented defaults; unknown or missing keys fail parsing with a
//! message naming the key. All randomness downstream flows from the single
//! `base_seed` here.

use crate::adjoint::AdjointMode;
use crate::control::ControlGrid;
use crate::cost::CostWeights;
use crate::error::{Error, Result};
use crate::fbsm::SweepConfig;
use crate::grid::TimeGrid;
use crate::interval::{realize_set, ImpreciseParameterSet, IntervalNumber, ParameterSet};
use crate::model::StatePoint;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// An interval given either as a single number (degenerate) or `[lo, hi]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum IntervalSpec {
    Scalar(f64),
    Pair([f64; 2]),
}

impl IntervalSpec {
    fn build(self, name: &str) -> Result<IntervalNumber> {
        let made = match self {
            IntervalSpec::Scalar(v) => IntervalNumber::degenerate(v),
            IntervalSpec::Pair([lo, hi]) => IntervalNumber::new(lo, hi),
        };
        made.map_err(|e| Error::Config(format!("params.{name}: {e}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    lambda: IntervalSpec,
    beta: IntervalSpec,
    mu: IntervalSpec,
    eta_c: IntervalSpec,
    eta_a: IntervalSpec,
    phi: IntervalSpec,
    e: IntervalSpec,
    alpha: IntervalSpec,
    omega: IntervalSpec,
    d: IntervalSpec,
    delta: IntervalSpec,
    m: IntervalSpec,
    gamma: IntervalSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    s: f64,
    i: f64,
    c: f64,
    a: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_end: f64,
    n_steps: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    u_lo: Option<f64>,
    u_hi: Option<f64>,
    initial: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    w_i: Option<f64>,
    w_c: Option<f64>,
    w_a: Option<f64>,
    w_u: Option<f64>,
    w_t: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    rho: Option<f64>,
    max_iters: Option<usize>,
    tolerance: Option<f64>,
    n_paths: Option<usize>,
    n_starts: Option<usize>,
    mode: Option<AdjointMode>,
    cell_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    n_paths: Option<usize>,
    omega_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    base_seed: Option<u64>,
    k: Option<f64>,
    ks: Option<Vec<f64>>,
    params: RawParams,
    initial_state: RawState,
    grid: RawGrid,
    control: Option<RawControl>,
    cost: Option<RawCost>,
    sweep: Option<RawSweep>,
    sim: Option<RawSim>,
    output: Option<RawOutput>,
}

/// A fully validated scenario, ready to drive any command.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Root seed; every sub-seed derives from it.
    pub base_seed: u64,
    /// Realization exponent used by single-realization commands.
    pub k: f64,
    /// Exponent grid for the imprecision sweep.
    pub ks: Vec<f64>,
    /// Interval-valued model rates.
    pub imprecise: ImpreciseParameterSet,
    /// Initial compartment sizes.
    pub x0: StatePoint,
    /// Simulation grid.
    pub grid: TimeGrid,
    /// Lower control bound.
    pub u_lo: f64,
    /// Upper control bound.
    pub u_hi: f64,
    /// Level of the constant initial control.
    pub initial_level: f64,
    /// Cost weights.
    pub weights: CostWeights,
    /// Sweep settings (with `base_seed` already synchronized).
    pub sweep: SweepConfig,
    /// Number of multistart runs for value estimation.
    pub n_starts: usize,
    /// Ensemble size for plain simulation.
    pub sim_paths: usize,
    /// Slack for the invariant-region containment summary; `None` derives
    /// a relative default from the region's upper bound.
    pub omega_tol: Option<f64>,
    /// Directory all artifacts are written to.
    pub out_dir: PathBuf,
}

impl ScenarioConfig {
    /// Parses and validates a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    /// Reads, parses, and validates a scenario file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawScenario) -> Result<Self> {
        let p = raw.params;
        let imprecise = ImpreciseParameterSet {
            lambda: p.lambda.build("lambda")?,
            beta: p.beta.build("beta")?,
            mu: p.mu.build("mu")?,
            eta_c: p.eta_c.build("eta_c")?,
            eta_a: p.eta_a.build("eta_a")?,
            phi: p.phi.build("phi")?,
            e: p.e.build("e")?,
            alpha: p.alpha.build("alpha")?,
            omega: p.omega.build("omega")?,
            d: p.d.build("d")?,
            delta: p.delta.build("delta")?,
            m: p.m.build("m")?,
            gamma: p.gamma.build("gamma")?,
        };
        let x0 = StatePoint {
            s: raw.initial_state.s,
            i: raw.initial_state.i,
            c: raw.initial_state.c,
            a: raw.initial_state.a,
        };
        if x0.as_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!(
                "initial_state: compartments must be finite and nonnegative, got {x0:?}"
            )));
        }
        let grid = TimeGrid::new(raw.grid.t_end, raw.grid.n_steps)
            .map_err(|e| Error::Config(format!("grid: {e}")))?;

        let control = raw.control.unwrap_or_default();
        let u_lo = control.u_lo.unwrap_or(0.0);
        let u_hi = control.u_hi.unwrap_or(1.0);
        if !(u_lo.is_finite() && u_hi.is_finite() && u_lo < u_hi) {
            return Err(Error::Config(format!(
                "control: bounds must be finite with u_lo < u_hi, got [{u_lo}, {u_hi}]"
            )));
        }
        let initial_level = control.initial.unwrap_or(0.5 * (u_lo + u_hi));
        if !(u_lo..=u_hi).contains(&initial_level) {
            return Err(Error::Config(format!(
                "control.initial: {initial_level} outside [{u_lo}, {u_hi}]"
            )));
        }

        let cost = raw.cost.unwrap_or_default();
        let defaults = CostWeights::default();
        let weights = CostWeights {
            w_i: cost.w_i.unwrap_or(defaults.w_i),
            w_c: cost.w_c.unwrap_or(defaults.w_c),
            w_a: cost.w_a.unwrap_or(defaults.w_a),
            w_u: cost.w_u.unwrap_or(defaults.w_u),
            w_t: cost.w_t.unwrap_or(defaults.w_t),
        };
        for (name, v) in [
            ("w_i", weights.w_i),
            ("w_c", weights.w_c),
            ("w_a", weights.w_a),
            ("w_u", weights.w_u),
            ("w_t", weights.w_t),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "cost.{name}: weights must be finite and nonnegative, got {v}"
                )));
            }
        }

        let base_seed = raw.base_seed.unwrap_or(0);
        let sweep_raw = raw.sweep.unwrap_or_default();
        let sweep_defaults = SweepConfig::default();
        let sweep = SweepConfig {
            rho: sweep_raw.rho.unwrap_or(sweep_defaults.rho),
            max_iters: sweep_raw.max_iters.unwrap_or(sweep_defaults.max_iters),
            tolerance: sweep_raw.tolerance.unwrap_or(0.01 * grid.t_end()),
            n_paths: sweep_raw.n_paths.unwrap_or(sweep_defaults.n_paths),
            base_seed,
            mode: sweep_raw.mode.unwrap_or(sweep_defaults.mode),
            cell_tol: sweep_raw.cell_tol,
        };
        sweep
            .validate()
            .map_err(|e| Error::Config(format!("sweep: {e}")))?;
        let n_starts = sweep_raw.n_starts.unwrap_or(1);
        if n_starts == 0 {
            return Err(Error::Config(
                "sweep.n_starts: must be at least 1".to_string(),
            ));
        }

        let sim = raw.sim.unwrap_or_default();
        let sim_paths = sim.n_paths.unwrap_or(100);
        if sim_paths == 0 {
            return Err(Error::Config("sim.n_paths: must be at least 1".to_string()));
        }
        if let Some(tol) = sim.omega_tol {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(Error::Config(format!(
                    "sim.omega_tol: must be finite and nonnegative, got {tol}"
                )));
            }
        }

        let k = raw.k.unwrap_or(0.5);
        let ks = raw
            .ks
            .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        if ks.is_empty() {
            return Err(Error::Config("ks: must not be empty".to_string()));
        }
        for kv in std::iter::once(&k).chain(&ks) {
            if !(0.0..=1.0).contains(kv) {
                return Err(Error::Config(format!(
                    "realization exponents must lie in [0, 1], got {kv}"
                )));
            }
        }
        // Realizability at every requested exponent is a configuration
        // property; catching it here keeps runtime errors out of the sweep.
        for kv in std::iter::once(&k).chain(&ks) {
            realize_set(&imprecise, *kv).map_err(|e| Error::Config(format!("params: {e}")))?;
        }

        let out_dir = raw
            .output
            .unwrap_or_default()
            .dir
            .unwrap_or_else(|| PathBuf::from("out"));

        Ok(Self {
            base_seed,
            k,
            ks,
            imprecise,
            x0,
            grid,
            u_lo,
            u_hi,
            initial_level,
            weights,
            sweep,
            n_starts,
            sim_paths,
            omega_tol: sim.omega_tol,
            out_dir,
        })
    }

    /// The scalar rates at this scenario's realization exponent.
    pub fn realized(&self) -> Result<ParameterSet> {
        realize_set(&self.imprecise, self.k)
    }

    /// The constant initial control on the scenario grid.
    pub fn initial_control(&self) -> Result<ControlGrid> {
        ControlGrid::constant(self.grid, self.initial_level, self.u_lo, self.u_hi)
    }

    /// A small built-in study used by documentation and tests: moderate
    /// transmission with interval uncertainty on the infectivity and
    /// AIDS-stage parameters, mild noise, and a 25-year horizon.
    pub fn demo() -> Self {
        Self::from_toml_str(DEMO_TOML).expect("built-in demo scenario is valid")
    }
}

/// TOML text of the built-in demo scenario.
pub const DEMO_TOML: &str = r#"
base_seed = 42
k = 0.5
ks = [0.0, 0.25, 0.5, 0.75, 1.0]

[params]
lambda = 2.0
beta = [0.015, 0.025]
mu = 0.1
eta_c = 0.1
eta_a = [1.2, 1.8]
phi = 0.5
e = 0.05
alpha = 0.2
omega = 0.15
d = 0.1
delta = [0.01, 0.04]
m = 0.5
gamma = 0.5

[initial_state]
s = 12.0
i = 2.0
c = 1.0
a = 0.5

[grid]
t_end = 25.0
n_steps = 250

[control]
u_lo = 0.0
u_hi = 1.0

[cost]
w_i = 1.0
w_c = 0.5
w_a = 2.0
w_u = 1.0
w_t = 1.0

[sweep]
rho = 0.5
max_iters = 200
n_paths = 32
n_starts = 1
mode = "certainty_equivalent"

[sim]
n_paths = 100

[output]
dir = "out"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_scenario_parses_with_expected_values() {
        let s = ScenarioConfig::demo();
        assert_eq!(s.base_seed, 42);
        assert_eq!(s.k, 0.5);
        assert_eq!(s.ks.len(), 5);
        assert_eq!(s.grid.n_steps(), 250);
        assert_eq!((s.u_lo, s.u_hi), (0.0, 1.0));
        assert_eq!(s.initial_level, 0.5);
        assert_eq!(s.sweep.n_paths, 32);
        assert_eq!(s.sweep.base_seed, 42);
        assert_eq!(s.sweep.tolerance, 0.25);
        assert_eq!(s.n_starts, 1);
        assert_eq!(s.sim_paths, 100);
        // The realized noise level is the geometric middle of its interval.
        let expected = IntervalNumber::new(0.01, 0.04).unwrap().realize(0.5).unwrap();
        assert_eq!(s.realized().unwrap().delta, expected);
        approx::assert_relative_eq!(expected, 0.02, max_relative = 1e-12);
    }

    #[test]
    fn minimal_scenario_gets_documented_defaults() {
        let text = r#"
            [params]
            lambda = 2.0
            beta = 0.02
            mu = 0.1
            eta_c = 0.1
            eta_a = 1.5
            phi = 0.5
            e = 0.05
            alpha = 0.2
            omega = 0.15
            d = 0.1
            delta = 0.0
            m = 0.5
            gamma = 0.5

            [initial_state]
            s = 12.0
            i = 2.0
            c = 1.0
            a = 0.5

            [grid]
            t_end = 10.0
            n_steps = 100
        "#;
        let s = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(s.base_seed, 0);
        assert_eq!(s.k, 0.5);
        assert_eq!(s.ks, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!((s.u_lo, s.u_hi, s.initial_level), (0.0, 1.0, 0.5));
        assert_eq!(s.weights, CostWeights::default());
        assert_eq!(s.sweep.tolerance, 0.1);
        assert_eq!(s.out_dir, PathBuf::from("out"));
        assert_eq!(s.sim_paths, 100);
        assert!(s.omega_tol.is_none());
    }

    #[test]
    fn missing_required_key_is_named() {
        let text = r#"
            [params]
            lambda = 2.0
            beta = 0.02
            mu = 0.1
            eta_c = 0.1
            eta_a = 1.5
            phi = 0.5
            e = 0.05
            alpha = 0.2
            omega = 0.15
            d = 0.1
            delta = 0.0
            m = 0.5
            gamma = 0.5

            [grid]
            t_end = 10.0
            n_steps = 100
        "#;
        let err = ScenarioConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("initial_state"), "unhelpful error: {err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = DEMO_TOML.replace("[sim]\nn_paths = 100", "[sim]\nn_walks = 100");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("n_walks"), "unhelpful error: {err}");
    }

    #[test]
    fn invalid_interval_names_the_parameter() {
        let text = DEMO_TOML.replace("beta = [0.015, 0.025]", "beta = [0.025, 0.015]");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("params.beta"), "unhelpful error: {err}");
    }

    #[test]
    fn out_of_range_exponent_is_rejected() {
        let text = DEMO_TOML.replace("k = 0.5", "k = 1.5");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("1.5"), "unhelpful error: {err}");
    }

    #[test]
    fn initial_control_outside_bounds_is_rejected() {
        let text = DEMO_TOML.replace("u_hi = 1.0", "u_hi = 1.0\ninitial = 1.2");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("control.initial"), "unhelpful error: {err}");
    }

    #[test]
    fn interior_exponent_on_zero_based_interval_is_a_config_error() {
        let text = DEMO_TOML.replace("delta = [0.01, 0.04]", "delta = [0.0, 0.04]");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("positive lower endpoint"), "unhelpful error: {err}");
    }

    #[test]
    fn regression_mode_parses() {
        let text = DEMO_TOML.replace(
            "mode = \"certainty_equivalent\"",
            "mode = \"regression\"",
        );
        let s = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(s.sweep.mode, AdjointMode::Regression);
    }
}

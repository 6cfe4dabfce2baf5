//! Near-optimal control of a stochastic SICA epidemic model whose rates are
//! known only up to intervals.
//!
//! The crate simulates ensembles of the controlled SICA dynamics under
//! multiplicative transmission noise, solves the associated backward costate
//! equations, improves bounded treatment controls with a relaxed
//! forward-backward sweep, and reports computable near-optimality
//! diagnostics. Interval-valued rates are collapsed to scalars through a
//! single realization exponent, which makes worst/best-case and sweep
//! studies cheap and reproducible.
//!
//! Everything downstream of a `base_seed` is deterministic, including under
//! parallel execution.

pub mod adjoint;
pub mod control;
pub mod cost;
pub mod diagnostics;
pub mod error;
pub mod fbsm;
pub mod grid;
pub mod interval;
pub mod model;
pub mod output;
pub mod scenario;
pub mod sde;
pub mod stats;

pub use adjoint::{
    adjoint_backward, adjoint_ensemble, adjoint_moment_check, control_gradient,
    discrete_cost_adjoint_ensemble, mean_costates, AdjointMode, AdjointPath,
};
pub use control::{control_metric, ControlGrid};
pub use cost::{estimate_j, CostWeights};
pub use diagnostics::{
    candidate_agreement_fraction, epsilon_optimality_gap, k_sweep, necessary_condition_residual,
    state_lipschitz_estimate, sufficient_condition_check, KSweepRow, LipschitzEstimate,
    NearOptReport,
};
pub use error::{Error, Result};
pub use fbsm::{
    fbsm_optimize, multistart_value_estimate, MultistartResult, SweepConfig, SweepReport,
};
pub use grid::TimeGrid;
pub use interval::{realize_set, ImpreciseParameterSet, IntervalNumber, ParameterSet};
pub use model::{OmegaBounds, StatePoint};
pub use scenario::ScenarioConfig;
pub use sde::{simulate_ensemble, simulate_path, Ensemble};
pub use stats::Estimate;

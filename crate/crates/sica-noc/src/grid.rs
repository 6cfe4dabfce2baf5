//! Uniform time grid shared by trajectories, controls, and adjoints.

use crate::error::{Error, Result};

/// A uniform partition of `[0, t_end]` into `n_steps` cells.
///
/// Nodes are indexed `0..=n_steps`; cell `i` spans `[t_i, t_{i+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Creates a grid over `[0, t_end]` with `n_steps >= 1` uniform cells.
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::domain(format!(
                "horizon t_end must be positive and finite, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::domain("grid needs at least one step"));
        }
        Ok(Self { t_end, n_steps })
    }

    /// Final time of the horizon.
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of cells.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes (`n_steps + 1`).
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Cell width `t_end / n_steps`.
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Time of node `i` (`i * dt`).
    pub fn time(&self, node: usize) -> f64 {
        node as f64 * self.dt()
    }
}

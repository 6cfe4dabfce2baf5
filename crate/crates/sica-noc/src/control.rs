//! Deterministic piecewise-constant controls and the disagreement metric.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// A piecewise-constant control on a [`TimeGrid`], one value per cell,
/// bounded to `[u_lo, u_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    grid: TimeGrid,
    values: Vec<f64>,
    u_lo: f64,
    u_hi: f64,
}

impl ControlGrid {
    /// Creates a control, checking bounds ordering and per-cell containment.
    pub fn new(grid: TimeGrid, values: Vec<f64>, u_lo: f64, u_hi: f64) -> Result<Self> {
        if !u_lo.is_finite() || !u_hi.is_finite() || u_lo > u_hi {
            return Err(Error::domain(format!(
                "control bounds must be finite and ordered, got [{u_lo}, {u_hi}]"
            )));
        }
        if values.len() != grid.n_steps() {
            return Err(Error::GridMismatch(format!(
                "control has {} cells but the grid has {} steps",
                values.len(),
                grid.n_steps()
            )));
        }
        for (cell, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < u_lo || v > u_hi {
                return Err(Error::domain(format!(
                    "control value {v} in cell {cell} lies outside [{u_lo}, {u_hi}]"
                )));
            }
        }
        Ok(Self {
            grid,
            values,
            u_lo,
            u_hi,
        })
    }

    /// A constant control at `value`.
    pub fn constant(grid: TimeGrid, value: f64, u_lo: f64, u_hi: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_steps()], u_lo, u_hi)
    }

    /// A constant control at the midpoint of the bounds.
    pub fn midpoint(grid: TimeGrid, u_lo: f64, u_hi: f64) -> Result<Self> {
        Self::constant(grid, 0.5 * (u_lo + u_hi), u_lo, u_hi)
    }

    /// The underlying time grid.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Control bounds `(u_lo, u_hi)`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.u_lo, self.u_hi)
    }

    /// Per-cell values, in cell order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value applied on cell `cell`.
    pub fn value_at_cell(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// Value associated with a node: the cell starting there, with the final
    /// node repeating the last cell (used when tabulating node-wise output).
    pub fn value_at_node(&self, node: usize) -> f64 {
        let cell = node.min(self.values.len() - 1);
        self.values[cell]
    }

    /// Clamps `v` into the control bounds.
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.u_lo, self.u_hi)
    }

    /// Default per-cell agreement tolerance: `1e-6` of the bound width.
    pub fn default_cell_tol(&self) -> f64 {
        1e-6 * (self.u_hi - self.u_lo)
    }

    /// A control over the same grid and bounds with replaced values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, values, self.u_lo, self.u_hi)
    }
}

/// Time measure of the set where two controls disagree by more than
/// `cell_tol` per cell: `dt * #{cells with |u_i - v_i| > cell_tol}`.
pub fn control_metric(u: &ControlGrid, v: &ControlGrid, cell_tol: f64) -> Result<f64> {
    if u.grid != v.grid {
        return Err(Error::GridMismatch(format!(
            "controls live on different grids: {:?} vs {:?}",
            u.grid, v.grid
        )));
    }
    if !cell_tol.is_finite() || cell_tol < 0.0 {
        return Err(Error::domain(format!(
            "cell tolerance must be nonnegative, got {cell_tol}"
        )));
    }
    let disagreements = u
        .values
        .iter()
        .zip(&v.values)
        .filter(|(a, b)| (**a - **b).abs() > cell_tol)
        .count();
    Ok(disagreements as f64 * u.grid.dt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        // Power-of-two spacing keeps dt multiples exact in floating point.
        TimeGrid::new(8.0, 16).unwrap()
    }

    #[test]
    fn new_rejects_out_of_bounds_values() {
        let err = ControlGrid::new(grid(), vec![0.5; 15], 0.0, 1.0);
        assert!(matches!(err, Err(Error::GridMismatch(_))));
        let mut values = vec![0.5; 16];
        values[7] = 1.5;
        assert!(ControlGrid::new(grid(), values, 0.0, 1.0).is_err());
        assert!(ControlGrid::constant(grid(), 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn midpoint_control_sits_between_bounds() {
        let u = ControlGrid::midpoint(grid(), 0.2, 0.8).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn node_values_repeat_last_cell() {
        let mut values = vec![0.0; 16];
        values[15] = 1.0;
        let u = ControlGrid::new(grid(), values, 0.0, 1.0).unwrap();
        assert_eq!(u.value_at_node(15), 1.0);
        assert_eq!(u.value_at_node(16), 1.0);
        assert_eq!(u.value_at_node(0), 0.0);
    }

    #[test]
    fn metric_counts_disagreeing_cells_in_time_units() {
        let u = ControlGrid::constant(grid(), 0.25, 0.0, 1.0).unwrap();
        let mut values = vec![0.25; 16];
        values[3] = 0.75;
        values[10] = 1.0;
        let v = u.with_values(values).unwrap();
        // Two cells differ, each of width 0.5.
        assert_eq!(control_metric(&u, &v, u.default_cell_tol()).unwrap(), 1.0);
        assert_eq!(control_metric(&u, &u, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn metric_ignores_differences_below_tolerance() {
        let u = ControlGrid::constant(grid(), 0.5, 0.0, 1.0).unwrap();
        let mut values = vec![0.5; 16];
        values[0] = 0.5 + 1e-9;
        let v = u.with_values(values).unwrap();
        assert_eq!(control_metric(&u, &v, 1e-6).unwrap(), 0.0);
        assert_eq!(control_metric(&u, &v, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn metric_rejects_mismatched_grids_and_negative_tolerance() {
        let u = ControlGrid::constant(grid(), 0.5, 0.0, 1.0).unwrap();
        let other = TimeGrid::new(8.0, 32).unwrap();
        let v = ControlGrid::constant(other, 0.5, 0.0, 1.0).unwrap();
        assert!(matches!(
            control_metric(&u, &v, 0.0),
            Err(Error::GridMismatch(_))
        ));
        assert!(control_metric(&u, &u, -1.0).is_err());
    }

    #[test]
    fn metric_is_symmetric_and_triangular_on_lattice_controls() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid();
        let tol = 1e-6;
        for _ in 0..50 {
            // Values on a coarse lattice so per-cell equality is exact and
            // disagreement sets obey the inclusion argument.
            let mut sample = || {
                let values = (0..16)
                    .map(|_| rng.random_range(0u8..=4) as f64 * 0.25)
                    .collect();
                ControlGrid::new(g, values, 0.0, 1.0).unwrap()
            };
            let (u, v, w) = (sample(), sample(), sample());
            let duv = control_metric(&u, &v, tol).unwrap();
            let dvw = control_metric(&v, &w, tol).unwrap();
            let duw = control_metric(&u, &w, tol).unwrap();
            assert_eq!(duv, control_metric(&v, &u, tol).unwrap());
            assert!(duw <= duv + dvw, "triangle violated: {duw} > {duv} + {dvw}");
        }
    }
}

//! Euler–Maruyama integration of the controlled SICA dynamics.
//!
//! Every Brownian path is generated by a ChaCha8 stream seeded from a fixed
//! mixing function of `(base_seed, path_index)`, so ensembles are
//! reproducible, order-independent, and safe to evaluate in parallel. Two
//! ensembles built from the same `base_seed` share their driving noise
//! path-for-path (common random numbers), which keeps cost comparisons
//! between controls low-variance.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::control::ControlGrid;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::interval::ParameterSet;
use crate::model::{diffusion, drift, StatePoint};
use crate::stats::Estimate;

/// Derives the RNG seed of path `path_index` from `base_seed`.
///
/// The mixing is the splitmix64 finalizer applied to
/// `base_seed XOR (path_index + 1) * 0x9E3779B97F4A7C15`, giving
/// well-separated streams for consecutive indices.
pub fn derive_path_seed(base_seed: u64, path_index: u64) -> u64 {
    let stamp = (path_index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut z = base_seed ^ stamp;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Brownian increments over one grid, one increment per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    seed: u64,
    increments: Vec<f64>,
}

impl BrownianPath {
    /// The grid the increments live on.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Seed that generated this path.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increments `dB_i ~ Normal(0, dt)`, in cell order.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
}

/// Samples a Brownian path on `grid` from `seed`, deterministically.
pub fn sample_brownian(grid: &TimeGrid, seed: u64) -> BrownianPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = grid.dt().sqrt();
    let increments = (0..grid.n_steps())
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * sqrt_dt
        })
        .collect();
    BrownianPath {
        grid: *grid,
        seed,
        increments,
    }
}

/// One simulated trajectory with its clamp-event count.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPath {
    grid: TimeGrid,
    states: Vec<StatePoint>,
    clamp_events: u64,
}

impl TrajectoryPath {
    /// The grid the states live on.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Node-wise states, `n_steps + 1` of them.
    pub fn states(&self) -> &[StatePoint] {
        &self.states
    }

    /// State at node `node`.
    pub fn state(&self, node: usize) -> &StatePoint {
        &self.states[node]
    }

    /// Terminal state.
    pub fn terminal(&self) -> &StatePoint {
        self.states.last().expect("trajectory has at least one node")
    }

    /// How many components were clamped to zero during integration.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }
}

/// One forward Euler–Maruyama step; negative components are clamped to zero
/// and counted. Returns the next state and the number of clamped components.
///
/// Non-finite raw values are not clamped; they are left for the caller to
/// detect so an informative integration error can name the component.
pub fn euler_maruyama_step(
    x: &StatePoint,
    ctrl_value: f64,
    params: &ParameterSet,
    dt: f64,
    db: f64,
) -> (StatePoint, u32) {
    let f = drift(x, ctrl_value, params);
    let sigma = diffusion(x, params);
    let current = x.as_array();
    let mut next = [0.0f64; 4];
    let mut clamped = 0u32;
    for j in 0..4 {
        let raw = current[j] + f[j] * dt + sigma[j] * db;
        // Only finite negatives are clamped; NaN and -inf pass through
        // unchanged so the caller can report a diagnosable integration error.
        next[j] = if raw < 0.0 && raw.is_finite() {
            clamped += 1;
            0.0
        } else {
            raw
        };
    }
    (StatePoint::from_array(next), clamped)
}

/// Integrates a single path from `x0` under `ctrl`, driven by `noise`.
pub fn simulate_path(
    x0: &StatePoint,
    ctrl: &ControlGrid,
    params: &ParameterSet,
    noise: &BrownianPath,
) -> Result<TrajectoryPath> {
    if ctrl.grid() != noise.grid() {
        return Err(Error::GridMismatch(format!(
            "control grid {:?} differs from noise grid {:?}",
            ctrl.grid(),
            noise.grid()
        )));
    }
    for (j, v) in x0.as_array().into_iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::domain(format!(
                "initial state component {} must be finite and nonnegative, got {v}",
                StatePoint::LABELS[j]
            )));
        }
    }
    let grid = *ctrl.grid();
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_nodes());
    states.push(*x0);
    let mut clamp_events = 0u64;
    let mut x = *x0;
    for step in 0..grid.n_steps() {
        let (next, clamped) = euler_maruyama_step(
            &x,
            ctrl.value_at_cell(step),
            params,
            dt,
            noise.increments()[step],
        );
        for (j, v) in next.as_array().into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteState {
                    component: StatePoint::LABELS[j],
                    step,
                });
            }
        }
        clamp_events += u64::from(clamped);
        states.push(next);
        x = next;
    }
    Ok(TrajectoryPath {
        grid,
        states,
        clamp_events,
    })
}

/// A reproducible collection of paths driven by seeds derived from
/// `(base_seed, path_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    base_seed: u64,
    paths: Vec<TrajectoryPath>,
}

impl Ensemble {
    /// Seed the per-path streams were derived from.
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// The simulated paths, in path-index order.
    pub fn paths(&self) -> &[TrajectoryPath] {
        &self.paths
    }

    /// Number of paths.
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// The shared time grid.
    pub fn grid(&self) -> &TimeGrid {
        self.paths[0].grid()
    }

    /// Node-wise ensemble mean states, reduced in path order.
    pub fn mean_states(&self) -> Vec<StatePoint> {
        let n_nodes = self.grid().n_nodes();
        let mut sums = vec![[0.0f64; 4]; n_nodes];
        for path in &self.paths {
            for (node, state) in path.states().iter().enumerate() {
                let x = state.as_array();
                for j in 0..4 {
                    sums[node][j] += x[j];
                }
            }
        }
        let inv = 1.0 / self.paths.len() as f64;
        sums.into_iter()
            .map(|s| StatePoint::from_array([s[0] * inv, s[1] * inv, s[2] * inv, s[3] * inv]))
            .collect()
    }

    /// Total clamp events across all paths.
    pub fn total_clamp_events(&self) -> u64 {
        self.paths.iter().map(TrajectoryPath::clamp_events).sum()
    }
}

/// Simulates `n_paths` trajectories in parallel; results are identical for
/// any thread count because each path depends only on `(base_seed, index)`.
pub fn simulate_ensemble(
    x0: &StatePoint,
    ctrl: &ControlGrid,
    params: &ParameterSet,
    n_paths: usize,
    base_seed: u64,
) -> Result<Ensemble> {
    if n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let noise = sample_brownian(ctrl.grid(), derive_path_seed(base_seed, i as u64));
            simulate_path(x0, ctrl, params, &noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { base_seed, paths })
}

/// Estimates `E sup_t (|S|^theta + |I|^theta + |C|^theta + |A|^theta)`
/// over the ensemble: the path-wise supremum over nodes of the summed
/// component powers, averaged across paths.
pub fn empirical_sup_moment(ensemble: &Ensemble, theta: f64) -> Estimate {
    let samples: Vec<f64> = ensemble
        .paths()
        .iter()
        .map(|path| {
            path.states()
                .iter()
                .map(|x| {
                    x.as_array()
                        .into_iter()
                        .map(|v| v.abs().powf(theta))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Estimate::from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

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
    fn path_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|i| derive_path_seed(42, i)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len(), "seed collision in first 1000");
        assert_eq!(derive_path_seed(42, 17), derive_path_seed(42, 17));
        assert_ne!(derive_path_seed(42, 17), derive_path_seed(43, 17));
    }

    #[test]
    fn brownian_sampling_is_reproducible() {
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let a = sample_brownian(&grid, 9);
        let b = sample_brownian(&grid, 9);
        assert_eq!(a.increments(), b.increments());
        let c = sample_brownian(&grid, 10);
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn brownian_increments_have_expected_moments() {
        let grid = TimeGrid::new(1000.0, 1_000_000).unwrap();
        let path = sample_brownian(&grid, 2024);
        let n = path.increments().len() as f64;
        let dt = grid.dt();
        let mean = path.increments().iter().sum::<f64>() / n;
        assert!(
            mean.abs() <= 4.0 * (dt / n).sqrt(),
            "increment mean {mean} outside 4-sigma band"
        );
        let var = path.increments().iter().map(|x| x * x).sum::<f64>() / n;
        assert!(
            (var - dt).abs() <= 5.0 * dt * (2.0 / n).sqrt(),
            "increment variance {var} too far from dt = {dt}"
        );
    }

    #[test]
    fn step_matches_hand_computed_update() {
        // Unit transmission and noise only: S' = 1 - 1*0.1 - 1*0.2 = 0.7.
        let p = ParameterSet {
            lambda: 0.0,
            beta: 1.0,
            mu: 0.0,
            eta_c: 0.0,
            eta_a: 0.0,
            phi: 0.0,
            e: 0.0,
            alpha: 0.0,
            omega: 0.0,
            d: 0.0,
            delta: 1.0,
            m: 0.0,
            gamma: 0.0,
        };
        let x = StatePoint {
            s: 1.0,
            i: 1.0,
            c: 0.0,
            a: 0.0,
        };
        let (next, clamped) = euler_maruyama_step(&x, 0.0, &p, 0.1, 0.2);
        assert_relative_eq!(next.s, 0.7, max_relative = 1e-15);
        assert_relative_eq!(next.i, 1.3, max_relative = 1e-15);
        assert_eq!((next.c, next.a), (0.0, 0.0));
        assert_eq!(clamped, 0);
    }

    #[test]
    fn step_clamps_negative_excursions_to_zero() {
        let p = params();
        let x = StatePoint {
            s: 10.0,
            i: 0.5,
            c: 0.0,
            a: 0.0,
        };
        // sigma_I = delta*I*S = 0.1, so dB = -10 contributes -1 to I and
        // pushes it below zero; the other components stay positive.
        let (next, clamped) = euler_maruyama_step(&x, 0.0, &p, 0.1, -10.0);
        assert_eq!(next.i, 0.0);
        assert_eq!(clamped, 1);
        assert!(next.s > 0.0);
    }

    #[test]
    fn simulate_path_reports_non_finite_component_and_step() {
        let mut p = params();
        // Large enough that the infection force overflows on the first step.
        p.beta = 1e308;
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let ctrl = ControlGrid::constant(grid, 0.0, 0.0, 1.0).unwrap();
        let noise = sample_brownian(&grid, 3);
        let err = simulate_path(&x0(), &ctrl, &p, &noise).unwrap_err();
        match err {
            Error::NonFiniteState { component, step } => {
                assert_eq!(component, "S");
                assert_eq!(step, 0);
            }
            other => panic!("expected a non-finite state error, got {other}"),
        }
    }

    #[test]
    fn simulate_path_rejects_mismatched_noise_grid() {
        let ctrl = ControlGrid::constant(TimeGrid::new(1.0, 8).unwrap(), 0.0, 0.0, 1.0).unwrap();
        let noise = sample_brownian(&TimeGrid::new(1.0, 16).unwrap(), 3);
        assert!(matches!(
            simulate_path(&x0(), &ctrl, &params(), &noise),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn noiseless_paths_coincide_for_any_seed() {
        let mut p = params();
        p.delta = 0.0;
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let ctrl = ControlGrid::constant(grid, 0.3, 0.0, 1.0).unwrap();
        let a = simulate_path(&x0(), &ctrl, &p, &sample_brownian(&grid, 1)).unwrap();
        let b = simulate_path(&x0(), &ctrl, &p, &sample_brownian(&grid, 99)).unwrap();
        assert_eq!(a.states(), b.states());
    }

    #[test]
    fn ensembles_share_noise_across_controls() {
        let grid = TimeGrid::new(2.0, 100).unwrap();
        let off = ControlGrid::constant(grid, 0.0, 0.0, 1.0).unwrap();
        let on = ControlGrid::constant(grid, 1.0, 0.0, 1.0).unwrap();
        let p = params();
        let e_off = simulate_ensemble(&x0(), &off, &p, 8, 42).unwrap();
        let e_on = simulate_ensemble(&x0(), &on, &p, 8, 42).unwrap();
        // An effective control separates the trajectories...
        assert_ne!(e_off.paths()[0].states(), e_on.paths()[0].states());
        // ...but with the treatment scale zeroed the control is inert, so
        // shared noise must reproduce the ensemble bit-for-bit.
        let mut inert = p;
        inert.m = 0.0;
        let i_off = simulate_ensemble(&x0(), &off, &inert, 8, 42).unwrap();
        let i_on = simulate_ensemble(&x0(), &on, &inert, 8, 42).unwrap();
        for (a, b) in i_off.paths().iter().zip(i_on.paths()) {
            assert_eq!(a.states(), b.states());
        }
    }

    #[test]
    fn ensemble_is_reproducible_and_order_independent() {
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let ctrl = ControlGrid::constant(grid, 0.5, 0.0, 1.0).unwrap();
        let p = params();
        let a = simulate_ensemble(&x0(), &ctrl, &p, 32, 7).unwrap();
        let b = simulate_ensemble(&x0(), &ctrl, &p, 32, 7).unwrap();
        assert_eq!(a, b);
        // A single path simulated standalone matches its slot in the ensemble.
        let noise = sample_brownian(&grid, derive_path_seed(7, 19));
        let solo = simulate_path(&x0(), &ctrl, &p, &noise).unwrap();
        assert_eq!(&solo, &a.paths()[19]);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let ctrl = ControlGrid::constant(grid, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            simulate_ensemble(&x0(), &ctrl, &params(), 0, 1),
            Err(Error::EmptyEnsemble)
        ));
    }

    #[test]
    fn clamp_events_decrease_as_the_grid_refines() {
        let mut p = params();
        // With phi = e = 0 and C = A = 0 the noise is purely multiplicative
        // in I, so the exact process never crosses zero and clamps can only
        // come from coarse-step overshoot, which dies out as dt shrinks.
        // (With an additive noise floor at the boundary, paths would pin at
        // zero and clamp on a fixed fraction of steps at every resolution.)
        p.phi = 0.0;
        p.e = 0.0;
        p.delta = 0.25;
        let start = StatePoint {
            s: 12.0,
            i: 1.0,
            c: 0.0,
            a: 0.0,
        };
        let mut counts = Vec::new();
        for n_steps in [100, 1_000, 10_000] {
            let grid = TimeGrid::new(10.0, n_steps).unwrap();
            let ctrl = ControlGrid::constant(grid, 0.0, 0.0, 1.0).unwrap();
            let ensemble = simulate_ensemble(&start, &ctrl, &p, 64, 11).unwrap();
            counts.push(ensemble.total_clamp_events());
        }
        assert!(
            counts[0] > counts[1] && counts[1] > counts[2],
            "clamp counts did not decrease with dt: {counts:?}"
        );
        assert!(counts[0] > 0, "coarse grid produced no clamp events");
    }

    #[test]
    fn sup_moment_with_zero_exponent_is_component_count() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let ctrl = ControlGrid::constant(grid, 0.2, 0.0, 1.0).unwrap();
        let ensemble = simulate_ensemble(&x0(), &ctrl, &params(), 16, 5).unwrap();
        let est = empirical_sup_moment(&ensemble, 0.0);
        assert_eq!(est.mean, 4.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn sup_moment_is_stable_under_grid_refinement() {
        let p = params();
        let mut estimates = Vec::new();
        for n_steps in [250, 500, 1_000] {
            let grid = TimeGrid::new(5.0, n_steps).unwrap();
            let ctrl = ControlGrid::constant(grid, 0.5, 0.0, 1.0).unwrap();
            let ensemble = simulate_ensemble(&x0(), &ctrl, &p, 64, 3).unwrap();
            estimates.push(empirical_sup_moment(&ensemble, 2.0).mean);
        }
        for pair in estimates.windows(2) {
            assert!(
                pair[1] < 2.0 * pair[0] && pair[0] < 2.0 * pair[1],
                "sup-moment estimate unstable across refinement: {estimates:?}"
            );
        }
    }
}

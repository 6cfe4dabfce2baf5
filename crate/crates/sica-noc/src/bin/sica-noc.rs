//! Command-line front end: scenario files in, deterministic artifacts out.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration error,
//! 3 runtime/integration error, 4 non-convergence under `--strict`.

use clap::{Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sica_noc::adjoint::{adjoint_ensemble, adjoint_moment_check, control_gradient, AdjointMode};
use sica_noc::control::{control_metric, ControlGrid};
use sica_noc::cost::estimate_j;
use sica_noc::diagnostics::{
    epsilon_optimality_gap, k_sweep, necessary_condition_residual, state_lipschitz_estimate,
    NearOptReport,
};
use sica_noc::error::{Error, Result};
use sica_noc::fbsm::{multistart_value_estimate, SweepReport};
use sica_noc::grid::TimeGrid;
use sica_noc::interval::{realize_set, ParameterSet};
use sica_noc::model::{diffusion, drift, in_omega, omega_bounds, StatePoint};
use sica_noc::output::{
    write_adjoint_csv, write_control_csv, write_json, write_ksweep_csv, write_trajectories_csv,
};
use sica_noc::scenario::ScenarioConfig;
use sica_noc::sde::{derive_path_seed, sample_brownian, simulate_ensemble, simulate_path};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

/// Near-optimal treatment control for a stochastic SICA epidemic model with
/// interval-valued rates.
#[derive(Parser)]
#[command(name = "sica-noc", version, about)]
struct Cli {
    /// Worker thread cap (default: all cores; env fallback SICA_NOC_THREADS).
    /// Results are identical for every thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the scenario's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the scenario's realization exponent (must lie in [0, 1]).
    #[arg(long, global = true)]
    k: Option<f64>,

    /// Override the scenario's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble under the scenario's initial control and report
    /// invariant-region containment.
    Simulate {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Optimize the treatment control and write near-optimality diagnostics.
    Optimize {
        /// Scenario file (TOML).
        config: PathBuf,
        /// Exit with code 4 if the sweep does not converge.
        #[arg(long)]
        strict: bool,
    },
    /// Optimize at every realization exponent in the scenario's `ks` grid.
    Ksweep {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Run the structural self-check suite and write a pass/fail summary.
    Verify {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Compare the costate-based cost gradient against central finite
    /// differences in the zero-noise limit.
    Gradcheck {
        /// Scenario file (TOML).
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Simulate { config } => cmd_simulate(&load(config, cli)?),
        Command::Optimize { config, strict } => cmd_optimize(&load(config, cli)?, *strict),
        Command::Ksweep { config } => cmd_ksweep(&load(config, cli)?),
        Command::Verify { config } => cmd_verify(&load(config, cli)?),
        Command::Gradcheck { config } => cmd_gradcheck(&load(config, cli)?),
    }
}

/// Applies `--threads` or the `SICA_NOC_THREADS` fallback to the global
/// rayon pool. Touches nothing when neither is given.
fn configure_threads(flag: Option<usize>) -> Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SICA_NOC_THREADS") {
            Ok(text) => Some(text.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!(
                    "SICA_NOC_THREADS must be a positive integer, got {text:?}"
                ))
            })?),
            Err(std::env::VarError::NotPresent) => None,
            Err(e) => return Err(Error::Config(format!("SICA_NOC_THREADS: {e}"))),
        },
    };
    let Some(n) = requested else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config(
            "thread count must be at least 1".to_string(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))
}

/// Loads the scenario and applies flag overrides (flag > config > default).
fn load(config: &Path, cli: &Cli) -> Result<ScenarioConfig> {
    let mut s = ScenarioConfig::from_path(config)?;
    if let Some(seed) = cli.seed {
        s.base_seed = seed;
        s.sweep.base_seed = seed;
    }
    if let Some(k) = cli.k {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::Config(format!(
                "--k must lie in [0, 1], got {k}"
            )));
        }
        realize_set(&s.imprecise, k).map_err(|e| Error::Config(format!("--k: {e}")))?;
        s.k = k;
    }
    if let Some(dir) = &cli.out_dir {
        s.out_dir = dir.clone();
    }
    Ok(s)
}

#[derive(Serialize)]
struct OmegaSummary {
    omega_low: f64,
    omega_high: f64,
    tolerance: f64,
    n_paths: usize,
    n_nodes_per_path: usize,
    node_violations: u64,
    violation_fraction: f64,
    clamp_events: u64,
    initial_population: f64,
    initial_in_omega: bool,
}

fn cmd_simulate(s: &ScenarioConfig) -> Result<u8> {
    let params = s.realized()?;
    let ctrl = s.initial_control()?;
    let ensemble = simulate_ensemble(&s.x0, &ctrl, &params, s.sim_paths, s.base_seed)?;
    let traj_path = s.out_dir.join("trajectories.csv");
    write_trajectories_csv(&traj_path, &ensemble, &ctrl)?;

    let bounds = omega_bounds(&params)?;
    let tol = s.omega_tol.unwrap_or_else(|| bounds.default_tol());
    let mut violations = 0u64;
    for traj in ensemble.paths() {
        for x in traj.states() {
            if !in_omega(x, &bounds, tol) {
                violations += 1;
            }
        }
    }
    let n_nodes = s.grid.n_nodes();
    let total = (s.sim_paths * n_nodes) as f64;
    let summary = OmegaSummary {
        omega_low: bounds.n_low,
        omega_high: bounds.n_high,
        tolerance: tol,
        n_paths: s.sim_paths,
        n_nodes_per_path: n_nodes,
        node_violations: violations,
        violation_fraction: violations as f64 / total,
        clamp_events: ensemble.total_clamp_events(),
        initial_population: s.x0.total(),
        initial_in_omega: in_omega(&s.x0, &bounds, tol),
    };
    let summary_path = s.out_dir.join("omega_summary.json");
    write_json(&summary_path, &summary)?;

    println!("wrote {}", traj_path.display());
    println!("wrote {}", summary_path.display());
    println!(
        "containment: {} of {} nodes outside [{}, {}] (fraction {})",
        summary.node_violations,
        s.sim_paths * n_nodes,
        summary.omega_low,
        summary.omega_high,
        summary.violation_fraction
    );
    Ok(0)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    n_starts: usize,
    best_index: usize,
    value: f64,
    best: &'a SweepReport,
    all_converged: bool,
}

fn cmd_optimize(s: &ScenarioConfig, strict: bool) -> Result<u8> {
    let params = s.realized()?;
    let ms = multistart_value_estimate(
        &s.x0, s.grid, s.u_lo, s.u_hi, &params, &s.weights, &s.sweep, s.n_starts,
    )?;
    let best = &ms.reports[ms.best_index];

    let control_path = s.out_dir.join("control.csv");
    write_control_csv(&control_path, &ms.best_control)?;

    let ensemble = simulate_ensemble(&s.x0, &ms.best_control, &params, s.sweep.n_paths, s.base_seed)?;
    let adjoints = adjoint_ensemble(&ensemble, &ms.best_control, &params, &s.weights, s.sweep.mode)?;
    let adjoint_path = s.out_dir.join("adjoint.csv");
    write_adjoint_csv(&adjoint_path, &adjoints)?;

    let sweep_path = s.out_dir.join("sweep_report.json");
    write_json(
        &sweep_path,
        &SweepSummary {
            n_starts: s.n_starts,
            best_index: ms.best_index,
            value: ms.value,
            best,
            all_converged: ms.reports.iter().all(|r| r.converged),
        },
    )?;

    let gap = epsilon_optimality_gap(
        &s.x0,
        &ms.best_control,
        &params,
        &s.weights,
        s.sweep.n_paths,
        s.base_seed,
        ms.value,
    )?;
    let residual =
        necessary_condition_residual(&ensemble, &adjoints, &ms.best_control, &params, &s.weights)?;
    let scales = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];
    let order_fit = state_lipschitz_estimate(
        &s.x0,
        &ms.best_control,
        &scales,
        1.0,
        0.5,
        &params,
        s.sweep.n_paths,
        s.base_seed,
    )?;
    let report = NearOptReport::new(gap, residual, &order_fit);
    let nearopt_path = s.out_dir.join("nearopt_report.json");
    write_json(&nearopt_path, &report)?;

    for p in [&control_path, &adjoint_path, &sweep_path, &nearopt_path] {
        println!("wrote {}", p.display());
    }
    let j = best.final_j();
    println!(
        "J = {} (stderr {}), iterations = {}, converged = {}, residual = {}",
        j.mean, j.stderr, best.iterations, best.converged, report.necessary_residual
    );
    if strict && !best.converged {
        eprintln!(
            "sweep did not converge within {} iterations (last step distance {})",
            s.sweep.max_iters,
            best.d_history.last().copied().unwrap_or(f64::NAN)
        );
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(0)
}

fn cmd_ksweep(s: &ScenarioConfig) -> Result<u8> {
    let ctrl = s.initial_control()?;
    let rows = k_sweep(&s.x0, &s.imprecise, &s.ks, &ctrl, &s.weights, &s.sweep)?;
    let path = s.out_dir.join("ksweep.csv");
    write_ksweep_csv(&path, &rows)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(0)
}

#[derive(Serialize)]
struct CheckOutcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct VerifyReport {
    checks: Vec<CheckOutcome>,
    all_pass: bool,
}

/// Draws a random valid parameter set for structural checks.
fn random_params(rng: &mut ChaCha8Rng) -> ParameterSet {
    ParameterSet {
        lambda: rng.random_range(0.1..5.0),
        beta: rng.random_range(0.001..0.5),
        mu: rng.random_range(0.01..1.0),
        eta_c: rng.random_range(0.01..2.0),
        eta_a: rng.random_range(0.01..2.0),
        phi: rng.random_range(0.01..1.0),
        e: rng.random_range(0.01..1.0),
        alpha: rng.random_range(0.01..1.0),
        omega: rng.random_range(0.01..1.0),
        d: rng.random_range(0.01..1.0),
        delta: rng.random_range(0.0..0.5),
        m: rng.random_range(0.0..1.0),
        gamma: rng.random_range(0.0..2.0),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> StatePoint {
    StatePoint {
        s: rng.random_range(0.0..30.0),
        i: rng.random_range(0.0..30.0),
        c: rng.random_range(0.0..30.0),
        a: rng.random_range(0.0..30.0),
    }
}

/// Population balance: the drift components must sum to the closed-form
/// population rate, and the diffusion must cancel in the population exactly.
fn check_conservation(s: &ScenarioConfig) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(s.base_seed ^ 0x636f6e73); // "cons"
    let n_triples = 1000;
    let mut max_rel = 0.0f64;
    let mut structural_ok = true;
    for _ in 0..n_triples {
        let params = random_params(&mut rng);
        let x = random_state(&mut rng);
        let u = rng.random_range(0.0..1.0);
        let f = drift(&x, u, &params);
        let total_rate = f[0] + f[1] + f[2] + f[3];
        let expected = params.lambda - params.mu * x.total() - params.d * x.a;
        // The identity holds by cancellation of large component terms, so
        // the honest relative scale includes the component magnitudes.
        let scale = f
            .iter()
            .fold(expected.abs(), |acc, v| acc.max(v.abs()))
            .max(1.0);
        let rel = (total_rate - expected).abs() / scale;
        max_rel = max_rel.max(rel);
        let sigma = diffusion(&x, &params);
        if sigma[0] + sigma[1] != 0.0 || sigma[2] != 0.0 || sigma[3] != 0.0 {
            structural_ok = false;
        }
    }
    let pass = structural_ok && max_rel <= 1e-12;
    CheckOutcome {
        name: "conservation",
        pass,
        detail: format!(
            "max relative population-rate deviation {max_rel} over {n_triples} random triples; \
             diffusion cancellation exact: {structural_ok}"
        ),
    }
}

/// Ensemble containment in the invariant population region.
fn check_population_bounds(s: &ScenarioConfig) -> Result<CheckOutcome> {
    let params = s.realized()?;
    let ctrl = s.initial_control()?;
    let bounds = omega_bounds(&params)?;
    let tol = s.omega_tol.unwrap_or_else(|| bounds.default_tol());
    let ensemble = simulate_ensemble(&s.x0, &ctrl, &params, s.sim_paths, s.base_seed)?;
    let mut violations = 0u64;
    let mut nodes = 0u64;
    for traj in ensemble.paths() {
        for x in traj.states() {
            nodes += 1;
            if !in_omega(x, &bounds, tol) {
                violations += 1;
            }
        }
    }
    let fraction = violations as f64 / nodes as f64;
    let initial_inside = in_omega(&s.x0, &bounds, tol);
    let pass = initial_inside && fraction <= 0.01;
    Ok(CheckOutcome {
        name: "population_bounds",
        pass,
        detail: format!(
            "initial population {} in [{}, {}]: {initial_inside}; \
             node-violation fraction {fraction} (tolerance {tol})",
            s.x0.total(),
            bounds.n_low,
            bounds.n_high
        ),
    })
}

/// Costate boundedness: finite moment estimates, and an exactly zero noise
/// costate in certainty-equivalent mode.
fn check_costate_moments(s: &ScenarioConfig) -> Result<CheckOutcome> {
    let params = s.realized()?;
    let ctrl = s.initial_control()?;
    let ensemble = simulate_ensemble(&s.x0, &ctrl, &params, s.sweep.n_paths, s.base_seed)?;
    let ce = adjoint_ensemble(
        &ensemble,
        &ctrl,
        &params,
        &s.weights,
        AdjointMode::CertaintyEquivalent,
    )?;
    let (p_ce, q_ce) = adjoint_moment_check(&ce)?;
    let mut pass = p_ce.mean.is_finite() && q_ce.mean == 0.0;
    let mut detail = format!(
        "certainty-equivalent: state-costate moment {}, noise-costate moment {}",
        p_ce.mean, q_ce.mean
    );
    if s.sweep.mode == AdjointMode::Regression {
        let reg = adjoint_ensemble(&ensemble, &ctrl, &params, &s.weights, AdjointMode::Regression)?;
        let (p_reg, q_reg) = adjoint_moment_check(&reg)?;
        pass = pass && p_reg.mean.is_finite() && q_reg.mean.is_finite();
        detail.push_str(&format!(
            "; regression: state-costate moment {}, noise-costate moment {}",
            p_reg.mean, q_reg.mean
        ));
    }
    Ok(CheckOutcome {
        name: "costate_moments",
        pass,
        detail,
    })
}

/// Metric axioms, checked exactly. The grid uses a power-of-two cell width
/// so every disagreement measure is an exact float and the triangle
/// inequality can be asserted without slack.
fn check_metric_axioms(s: &ScenarioConfig) -> Result<CheckOutcome> {
    let grid = TimeGrid::new(8.0, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.base_seed ^ 0x6d657472); // "metr"
    let random_ctrl = |rng: &mut ChaCha8Rng| -> Result<ControlGrid> {
        let values = (0..grid.n_steps())
            .map(|_| rng.random_range(s.u_lo..=s.u_hi))
            .collect();
        ControlGrid::new(grid, values, s.u_lo, s.u_hi)
    };
    let n_triples = 100;
    let mut failures = Vec::new();
    for t in 0..n_triples {
        let u = random_ctrl(&mut rng)?;
        let v = random_ctrl(&mut rng)?;
        let w = random_ctrl(&mut rng)?;
        let duu = control_metric(&u, &u, 0.0)?;
        let duv = control_metric(&u, &v, 0.0)?;
        let dvu = control_metric(&v, &u, 0.0)?;
        let dvw = control_metric(&v, &w, 0.0)?;
        let duw = control_metric(&u, &w, 0.0)?;
        if duu != 0.0 {
            failures.push(format!("triple {t}: d(u,u) = {duu}"));
        }
        if duv != dvu {
            failures.push(format!("triple {t}: asymmetry {duv} vs {dvu}"));
        }
        if !(duv >= 0.0 && dvw >= 0.0 && duw >= 0.0) {
            failures.push(format!("triple {t}: negative distance"));
        }
        if duw > duv + dvw {
            failures.push(format!(
                "triple {t}: triangle violation {duw} > {duv} + {dvw}"
            ));
        }
    }
    let pass = failures.is_empty();
    Ok(CheckOutcome {
        name: "metric_axioms",
        pass,
        detail: if pass {
            format!("identity, symmetry, nonnegativity, triangle exact on {n_triples} triples")
        } else {
            failures.join("; ")
        },
    })
}

fn cmd_verify(s: &ScenarioConfig) -> Result<u8> {
    let checks = vec![
        check_conservation(s),
        check_population_bounds(s)?,
        check_costate_moments(s)?,
        check_metric_axioms(s)?,
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let path = s.out_dir.join("verify.json");
    write_json(&path, &VerifyReport { checks, all_pass })?;
    println!("wrote {}", path.display());
    if !all_pass {
        eprintln!("failed checks: {}", failed.join(", "));
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(0)
}

#[derive(Serialize)]
struct GradcheckReport {
    n_cells: usize,
    control_level: f64,
    fd_step: f64,
    max_rel_error: f64,
    threshold: f64,
    pass: bool,
}

fn cmd_gradcheck(s: &ScenarioConfig) -> Result<u8> {
    // Zero-noise limit: the certainty-equivalent costates are exact there,
    // so the comparison isolates the backward pass from Monte-Carlo error.
    let mut params = s.realized()?;
    params.delta = 0.0;

    let range = s.u_hi - s.u_lo;
    let h = 1e-5 * range;
    // Central differences need two-sided room inside the bounds.
    let level = s.initial_level.clamp(s.u_lo + h, s.u_hi - h);
    let ctrl = ControlGrid::constant(s.grid, level, s.u_lo, s.u_hi)?;

    let noise = sample_brownian(&s.grid, derive_path_seed(s.base_seed, 0));
    let traj = simulate_path(&s.x0, &ctrl, &params, &noise)?;
    let grad = control_gradient(&traj, &ctrl, &params, &s.weights)?;

    let threshold = 1e-3;
    let floor = 1e-8;
    let mut max_rel = 0.0f64;
    for cell in 0..s.grid.n_steps() {
        let mut up = ctrl.values().to_vec();
        up[cell] += h;
        let mut down = ctrl.values().to_vec();
        down[cell] -= h;
        let j_up = estimate_j(&s.x0, &ctrl.with_values(up)?, &params, &s.weights, 1, s.base_seed)?;
        let j_down =
            estimate_j(&s.x0, &ctrl.with_values(down)?, &params, &s.weights, 1, s.base_seed)?;
        let fd = (j_up.mean - j_down.mean) / (2.0 * h);
        let rel = (grad[cell] - fd).abs() / fd.abs().max(floor);
        max_rel = max_rel.max(rel);
    }
    let pass = max_rel <= threshold;
    let report = GradcheckReport {
        n_cells: s.grid.n_steps(),
        control_level: level,
        fd_step: h,
        max_rel_error: max_rel,
        threshold,
        pass,
    };
    let path = s.out_dir.join("gradcheck.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    println!(
        "gradient check: max relative error {} over {} cells (threshold {}): {}",
        max_rel,
        report.n_cells,
        threshold,
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        eprintln!("check gradcheck failed: max relative error {max_rel} > {threshold}");
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(0)
}

//! Deterministic artifact writers.
//!
//! Every writer builds the complete byte content in memory, writes it to a
//! sibling `<name>.partial` file, and atomically renames it into place, so an
//! interrupted run never leaves a truncated file under a final name. Floats
//! use Rust's shortest round-trip notation, text is UTF-8 with `\n` line
//! endings, and rows follow input order, which together make artifacts
//! byte-identical across reruns and thread counts.

use crate::adjoint::AdjointPath;
use crate::control::ControlGrid;
use crate::diagnostics::KSweepRow;
use crate::error::{Error, Result};
use crate::sde::Ensemble;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Writes `bytes` to `path` atomically via a `.partial` sibling.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    fs::write(&partial, bytes)?;
    fs::rename(&partial, path)?;
    Ok(())
}

/// Serializes `value` as pretty JSON (with a trailing newline) and writes it
/// atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes every path of an ensemble as `t,S,I,C,A,u` rows, one row per grid
/// node, paths concatenated in path order.
pub fn write_trajectories_csv(path: &Path, ensemble: &Ensemble, ctrl: &ControlGrid) -> Result<()> {
    let grid = ensemble.grid();
    let mut text = String::from("t,S,I,C,A,u\n");
    for traj in ensemble.paths() {
        for (node, x) in traj.states().iter().enumerate() {
            let t = grid.time(node);
            let u = ctrl.value_at_node(node);
            writeln!(text, "{t},{},{},{},{},{u}", x.s, x.i, x.c, x.a)
                .expect("string write cannot fail");
        }
    }
    write_atomic(path, text.as_bytes())
}

/// Writes a control as `t,u` rows, one row per grid node.
pub fn write_control_csv(path: &Path, ctrl: &ControlGrid) -> Result<()> {
    let grid = ctrl.grid();
    let mut text = String::from("t,u\n");
    for node in 0..grid.n_nodes() {
        writeln!(text, "{},{}", grid.time(node), ctrl.value_at_node(node))
            .expect("string write cannot fail");
    }
    write_atomic(path, text.as_bytes())
}

/// Writes node-wise ensemble-mean costates as `t,p1,p2,p3,p4,q1,q2` rows.
///
/// Only the first two noise costate components appear because the diffusion
/// never loads on the chronic and AIDS compartments.
pub fn write_adjoint_csv(path: &Path, adjoints: &[AdjointPath]) -> Result<()> {
    let p = crate::adjoint::mean_costates(adjoints)?;
    let q = crate::adjoint::mean_noise_costates(adjoints)?;
    let grid = *adjoints[0].grid();
    let mut text = String::from("t,p1,p2,p3,p4,q1,q2\n");
    for node in 0..grid.n_nodes() {
        let pr = p[node];
        let qr = q[node];
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            grid.time(node),
            pr[0],
            pr[1],
            pr[2],
            pr[3],
            qr[0],
            qr[1]
        )
        .expect("string write cannot fail");
    }
    write_atomic(path, text.as_bytes())
}

/// Writes a realization sweep as
/// `k,J_mean,J_stderr,omega_low,omega_high,u_mean,u_max` rows, preserving
/// input order.
pub fn write_ksweep_csv(path: &Path, rows: &[KSweepRow]) -> Result<()> {
    let mut text = String::from("k,J_mean,J_stderr,omega_low,omega_high,u_mean,u_max\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.k, r.j_mean, r.j_stderr, r.omega_low, r.omega_high, r.u_mean, r.u_max
        )
        .expect("string write cannot fail");
    }
    write_atomic(path, text.as_bytes())
}

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, simulation, and optimization.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input violates its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that must share a time grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The state became non-finite during forward integration.
    #[error("non-finite state in component {component} at step {step}")]
    NonFiniteState {
        /// Compartment label (`S`, `I`, `C`, or `A`).
        component: &'static str,
        /// Index of the step that produced the non-finite value.
        step: usize,
    },

    /// A costate became non-finite during the backward pass.
    #[error("non-finite adjoint in component p{component} at node {node}")]
    NonFiniteAdjoint {
        /// Costate index, 1-based to match the usual p1..p4 naming.
        component: usize,
        /// Grid node at which the value blew up.
        node: usize,
    },

    /// An ensemble operation was requested with zero paths.
    #[error("ensemble must contain at least one path")]
    EmptyEnsemble,

    /// The scenario configuration is missing a key or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Builds a [`Error::Domain`] from anything displayable.
    pub fn domain(msg: impl std::fmt::Display) -> Self {
        Error::Domain(msg.to_string())
    }
}

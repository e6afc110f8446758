//! Quasi-1D numerical laboratory for orbital-free density functional models
//! of the Thomas-Fermi-von Weiszäcker (TFW) family.
//!
//! All fields vary along a single out-of-plane coordinate `z` on a periodic
//! box `[-L, L)`. The crate computes ground-state electron densities by a
//! staggered augmented-Lagrangian iteration, evaluates the relative (surface)
//! energy of a quasi-planar nuclear perturbation against the perfect crystal,
//! and provides locality diagnostics: truncated-energy convergence, the
//! charge-neutrality identity, exponential decay fits of the perturbation
//! fields, and a direct constrained-minimization cross-check of the relative
//! energy.
//!
//! Module map:
//! - [`grid`]: periodic mesh, trapezoid quadrature, finite-difference stencils
//! - [`nuclear`]: nuclear charge densities (jellium, mollified Dirac comb,
//!   uniform bump, Gaussian perturbation) and superposition
//! - [`poisson`]: deterministic direct solver for the periodic 1D Poisson
//!   problem with zero-mean gauge
//! - [`functional`]: TFW/TFWD energy, augmented Lagrangian, and its exact
//!   discrete gradient
//! - [`solver`]: staggered augmented-Lagrangian ground-state solver
//! - [`analysis`]: defect energetics and decay diagnostics
//! - [`cli`]: experiment runner (config parsing, CSV/JSON emission)

pub mod analysis;
pub mod cli;
pub mod functional;
pub mod grid;
pub mod nuclear;
pub mod poisson;
pub mod solver;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A constructor or operation received an invalid argument.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A field sample was NaN or infinite.
    #[error("non-finite sample at index {index}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    NonFinite {
        index: usize,
        context: Option<String>,
    },

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The backtracking line search could not find an acceptable step.
    #[error(
        "line search stalled: step {step:.3e} below floor with gradient sup-norm {grad_sup:.3e} \
         after {inner_steps} inner steps"
    )]
    LineSearchStall {
        step: f64,
        grad_sup: f64,
        inner_steps: usize,
    },

    /// A solve that must converge for the requested analysis did not.
    #[error("solve did not converge: {0}")]
    NotConverged(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

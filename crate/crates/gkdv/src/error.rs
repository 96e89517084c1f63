//! Error types shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong, from bad arguments to numerical blow-up.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The flux degenerates (a'(u) = 0) where a coefficient map needs 1/a'.
    #[error("degenerate flux: a'(u) = 0 at u = {u}")]
    DegenerateFlux { u: f64 },

    /// Time integration produced non-finite values or lost a conserved
    /// quantity; `last_valid_time` is the last snapshot that was still sane.
    #[error("solver divergence after t = {last_valid_time}: {reason}")]
    SolverDivergence { last_valid_time: f64, reason: String },

    /// The advective CFL condition failed at runtime.
    #[error("CFL violation at t = {t}: dt = {dt:.3e} exceeds limit {limit:.3e}")]
    CflViolation { t: f64, dt: f64, limit: f64 },

    /// Characteristic foot-point iteration did not reach tolerance.
    #[error("Newton iteration for the characteristic at x = {x} stalled (residual {residual:.3e})")]
    NewtonNonconvergence { x: f64, residual: f64 },

    /// A pre-breaking formula was evaluated at or past the gradient catastrophe.
    #[error("past gradient catastrophe: requested t = {t} is not before breaking")]
    PastBreaking { t: f64 },

    /// The quasi-Miura first-correction formula needs |v0_x| bounded away from 0.
    #[error("non-monotone data: min |v0_x| = {min_slope:.3e} is below floor {floor:.3e}")]
    NonmonotoneData { min_slope: f64, floor: f64 },

    /// An integrand left its domain (e.g. log of a non-positive argument).
    #[error("domain error: {0}")]
    Domain(String),

    /// A field no longer fits on the grid: too much energy near the cut-off.
    #[error("under-resolved field: spectral tail fraction {tail:.3e} exceeds {limit:.3e}")]
    Resolution { tail: f64, limit: f64 },

    /// Step-size control gave up.
    #[error(
        "step doubling did not converge after {halvings} halvings \
         (estimate {estimate:.3e}, tolerance {tol:.3e})"
    )]
    Nonconvergence {
        halvings: usize,
        estimate: f64,
        tol: f64,
    },

    /// Regression/fitting input was unusable.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A config file could not be understood.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad
    /// arguments or I/O); used by the CLI to pick exit codes.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateFlux { .. }
                | Error::SolverDivergence { .. }
                | Error::CflViolation { .. }
                | Error::NewtonNonconvergence { .. }
                | Error::PastBreaking { .. }
                | Error::NonmonotoneData { .. }
                | Error::Domain(_)
                | Error::Resolution { .. }
                | Error::Nonconvergence { .. }
                | Error::DegenerateInput(_)
        )
    }
}

//! Pseudospectral tools for generalized KdV equations
//! `u_t = a(u) u_x + sum_i eps_i d_x^{2i+1} u`, their dispersionless limit
//! `u_t = a(u) u_x`, and the small-dispersion expansion hierarchy that links
//! the two.
//!
//! The crate is organized around six modules:
//!
//! - [`spectral`]: periodic grid, FFT differentiation, Sobolev norms,
//!   dealiasing;
//! - [`flux`]: the nonlinearity `a(u)`, its Hamiltonian potential, the
//!   perturbation data `(c, p, s)`, and exact conserved quantities;
//! - [`solver`]: integrating-factor / ETDRK4 time stepping for the full
//!   dispersive equation;
//! - [`hopf`]: method of characteristics for the limit conservation law and
//!   the gradient-catastrophe time;
//! - [`transport`]: the expansion coefficients `v^0, v^1, ...` (transport
//!   equations, closed forms, the log-functional);
//! - [`harness`]: epsilon sweeps, Sobolev remainders, convergence-order fits,
//!   and structured reports (plus [`export`] for CSV/binary snapshots).

pub mod error;
pub mod export;
pub mod flux;
pub mod harness;
pub mod hopf;
pub mod solver;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};

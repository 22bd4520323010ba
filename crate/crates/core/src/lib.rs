//! Least squares shadowing (LSS) sensitivity of long-time averages for
//! chaotic discrete maps.
//!
//! Given a parameterized map `u_{i+1} = f(u_i, s)` and an objective `J(u, s)`,
//! the derivative of the ergodic average `<J>` with respect to `s` is
//! approximated by
//!
//! ```text
//!   d<J>/ds ~ 1/n * sum_i ( DJ(u_i, s) v_i + dJ/ds(u_i, s) )
//! ```
//!
//! where `v_1..v_n` minimizes `1/2 sum |v_i|^2` subject to the inhomogeneous
//! tangent recurrence `v_{i+1} = Df(u_i, s) v_i + df/ds(u_i, s)`.
//!
//! The crate is `no_std` (it needs `alloc`). Layout:
//! - [`dynsys`]: the [`MapSystem`] contract and a finite-difference checker.
//! - [`maps`]: the solenoid benchmark and two closed-form controls.
//! - [`solver`]: the optimality system, its block-tridiagonal Schur form and
//!   a dense KKT reference solver.
//! - [`pipeline`]: trajectory generation and the derivative estimator.
//! - [`fd`]: ensemble finite-difference reference derivatives.
//! - [`stats`]: small statistics helpers (log-log slope fits, seed splitting).
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynsys;
pub mod error;
pub mod fd;
pub mod linalg;
pub mod maps;
pub mod pipeline;
pub mod solver;
pub mod stats;

pub use dynsys::{verify_derivatives, DerivativeReport, MapSystem, ObjectiveGradient, State};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use maps::{AffineContractionMap, BundledMap, ShiftedCatMap, SolenoidMap};
pub use pipeline::{compute_sensitivity, generate_trajectory, RunConfig, Sensitivity, Trajectory};
pub use solver::{BlockTridiagonalSystem, LssProblem, TangentSolution};

//! Self-similar profiles, reduced ODE systems and a finite-volume solver for
//! the radially symmetric doubly nonlinear degenerate parabolic equation
//!
//! ```text
//! |x|^(-n) u_t = u^q div(|x|^n1 u^(m-1) |grad u^k|^(p-2) grad u) + eps |x|^(-n) t^l u^beta
//! ```
//!
//! for radial data, `x` in `R^N`, `eps = +1` (source) or `-1` (absorption).
//! Everything below works in `v = u^(1-q)`.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ode;
pub mod params;
pub mod profiles;
pub mod solver;
pub mod tridiag;
pub mod verify;

pub use error::{Error, Result};
pub use ode::{
    integrate_system, integrate_system_capped, integrate_with, FarField, IntegrateOptions,
    NearFront, OdeState, PlanarSystem, Trajectory, TrajectoryEnd,
};
pub use params::{derive, DerivedConstants, Diffusion, ProblemParams, Regime, Solvability};
pub use profiles::{Profile, ProfileKind};
pub use solver::{
    run, Grid, GridState, Relaxation, SolveReport, Solver, SolverConfig, Termination,
};
pub use verify::{CheckResult, Outcome};

//! Adaptive stochastic primal-dual hybrid gradient (A-SPDHG) methods.
//!
//! Solves `min_x Σ_i f_i(A_i x) + g(x)` through its saddle-point form,
//! updating one randomly chosen dual block per iteration. Step sizes are
//! either fixed or tuned online by one of two balancing rules that keep the
//! product `τσ` inside the convergence bound while moving the ratio `τ/σ`.
//!
//! Modules:
//! - [`linop`]: matrix-free operators, norm estimation, row partitioning and a
//!   parallel-beam projector;
//! - [`prox`]: closed-form proximal maps;
//! - [`problem`]: saddle-point instances and the TV tomography generator;
//! - [`control`]: step-size state and controllers;
//! - [`solver`]: the iteration itself and its trace;
//! - [`diag`]: reference solutions and convergence diagnostics;
//! - [`io`]: PGM and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod control;
pub mod diag;
pub mod error;
pub mod io;
pub mod linop;
pub mod problem;
pub mod prox;
pub mod solver;
pub mod vecops;

pub use control::{ControlSchedule, Controller, Mode, Rule, StepSizeState};
pub use error::{Error, Result};
pub use linop::LinearMap;
pub use problem::{CtConfig, CtInstance, Preset, SaddleProblem};
pub use solver::{run, IterationTrace, RunOutput, SolverConfig};

//! Total energy shaping for mechanical systems in port-Hamiltonian form,
//! with closed-form ∞-norm reduction of the kinetic shaping terms.
//!
//! * [`mechmodel`]: plant models (Pendubot, Geomagic Touch) and the
//!   Hamiltonian vector field.
//! * [`linfshape`]: closed-form `min ‖Ax − b‖∞` over `A + Aᵀ ⪯ 0`, plus an
//!   independent bisection oracle.
//! * [`idapbc`]: the plain, ∞-norm-augmented and reduced control laws, the
//!   matching residuals and the shipped shaping designs.
//! * [`sim`]: fixed-step RK4 closed-loop integration and trajectory metrics.
//! * [`config`], [`cli`], [`verify`]: TOML experiments, the command-line
//!   front end and the invariant verification suite.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod idapbc;
pub mod linalg;
pub mod linfshape;
pub mod mechmodel;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use idapbc::{
    u_ida, u_kinetic, u_reduced, u_th1, Branch, ControlBreakdown, Controller, PendubotDesign,
    PendubotGains, ShapingDesign, TouchDesign,
};
pub use linalg::{Matrix, Vector};
pub use linfshape::{check_feasible, oracle_phi, solve, ShapeSolution};
pub use mechmodel::{hamiltonian, plant_rhs, MechanicalModel, Pendubot, State, Touch};
pub use sim::{integrate, metrics, Metrics, SimConfig, Trajectory};

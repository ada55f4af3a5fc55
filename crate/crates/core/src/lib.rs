//! Constrained tracking control of strict-feedback nonlinear systems with
//! barrier Lyapunov functions.
//!
//! The crate provides:
//!
//! - [`barrier`]: four barrier-function families (standard log, zone log,
//!   and the progressive log/rational forms) with exact gradients;
//! - [`plant`]: strict-feedback system models and reference trajectories,
//!   evaluable over derivative-carrying scalars ([`jet::Jet`]);
//! - [`controller`]: backstepping control laws for output-constrained and
//!   full-state-constrained designs, with exact forward-propagated total
//!   derivatives of the stabilizing functions;
//! - [`sim`]: fixed-step RK4 / adaptive RKF45 closed-loop simulation in
//!   state space and directly in error coordinates;
//! - [`verify`]: empirical checks of the boundedness, invariance, and
//!   convergence claims against recorded trajectories.

pub mod barrier;
pub mod controller;
mod error;
pub mod jet;
pub mod plant;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};

//! Observer-based event-triggered boundary control of 2x2 linear hyperbolic
//! systems by backstepping.
//!
//! The crate solves the backstepping kernels, simulates plant and observer
//! with an upwind scheme and decides sampling instants with continuous
//! (CETC), periodic (PETC) or self-triggered (STC) rules. The
//! [`saint_venant`] module maps a linearized open-channel model onto the
//! canonical system and [`experiment`] drives complete runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gains;
pub mod grid;
pub mod kernels;
pub mod output;
pub mod petc;
pub mod plant;
pub mod saint_venant;
pub mod sim;
pub mod stc;
pub mod trigger;

pub use error::{Error, Result};

//! Inverse-dynamics learning with a spiking liquid state machine.
//!
//! Joint states are delta-encoded into spike trains, fed through a frozen
//! leaky integrate-and-fire liquid, and the liquid's spike counts (plus the
//! previous torque) are regressed onto joint torques by an MLP. The liquid's
//! structure can be searched with a particle swarm, and a learned model can
//! drive a two-link arm in closed loop.

// `!(x > 0.0)` style guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dataset;
pub mod encoding;
mod error;
pub mod experiment;
pub mod pipeline;
pub mod pso;
pub mod readout;
pub mod seed;
pub mod snn;
pub mod trajectory;

pub use error::{Error, Result};

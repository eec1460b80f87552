//! Saddle-node toy model, low-rank rate networks and their latent dynamics.
//!
//! * [`toy`]: the saddle-node model `dx/dt = x^2 + r`, its closed-form loss and
//!   naive gradient descent on it.
//! * [`rnn`]: low-rank rate networks trained with exact BPTT.
//! * [`latent`]: the one-dimensional latent circuit of rank-one networks, with
//!   fixed points, ghosts and bifurcation tracking.
//! * [`protocol`]: training loop, logging, stuck detection and the
//!   confidence-lowering intervention.
//! * [`experiments`]: figure presets, sweeps, output files and the CLI.

pub mod error;
pub mod experiments;
pub mod latent;
pub mod output;
pub mod protocol;
pub mod rnn;
pub mod toy;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::Trajectory;

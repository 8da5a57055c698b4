//! Differential evolution whose per-individual scale factors and crossover
//! rates come from an LSTM controller trained by policy gradient.
//!
//! The pieces, bottom up:
//!
//! - [`benchfn`]: shifted/rotated benchmark instances and suites.
//! - [`de`]: population, current-to-pbest/1 mutation, binomial crossover, selection.
//! - [`state`]: controller input features (normalized fitness and histograms).
//! - [`neural`]: the LSTM controller, forward pass and BPTT gradients.
//! - [`policy`]: Gaussian action sampling and the improvement reward.
//! - [`trainer`]: REINFORCE training over a suite of functions.
//! - [`runner`]: the learned DE and fixed-parameter baselines under a shared budget.
//! - [`stats`]: rank-sum tests, significance marks and APS ranking.

pub mod benchfn;
pub mod de;
pub mod error;
pub mod neural;
mod par;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod state;
pub mod stats;
pub mod trainer;
pub mod weightfile;

pub use error::{LdeError, Result};

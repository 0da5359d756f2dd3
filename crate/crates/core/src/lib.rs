//! Gait event detection from a single waist-worn IMU sensor.
//!
//! The pipeline runs in stages: raw pelvis and foot signals are band-pass
//! filtered ([`signal`]), groundtruth heel-strike / toe-off events are
//! extracted from the foot gyros and encoded as stance/swing phase signals
//! ([`events`]), sliding-window one-step-ahead training pairs are built
//! ([`dataset`]), sequence models regress the phase pair ([`neuralnet`],
//! [`zoo`]), raw outputs are cleaned by pulse validation ([`postprocess`]),
//! and predictions are scored against groundtruth with tolerance-window
//! accuracy and event MAE ([`eval`]). A parametric generator ([`synthgait`])
//! produces desk-scale cohorts with exact known event times.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod events;
pub mod neuralnet;
pub mod postprocess;
pub mod signal;
pub mod synthgait;
pub mod zoo;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

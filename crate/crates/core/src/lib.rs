//! Available bandwidth estimation with the variable packet size method.
//!
//! Probe packets of two sizes traverse the same path. Size-independent delay
//! terms (propagation, per-packet processing) cancel in the difference of the
//! mean delays, leaving the serialization term that carries the bandwidth:
//!
//! ```text
//! B = 8 * (W2 - W1) / (mean(D2) - mean(D1))      [bit/s, W in bytes]
//! ```
//!
//! The crate is split by concern:
//!
//! - [`model`]: shared value types and the CSV sample format
//! - [`estimator`]: pair and batch estimation, error and applicability bounds
//! - [`sim`]: Monte-Carlo delay generation with exponential variable delay
//! - [`planner`]: number of measurements needed for a target error
//! - [`testbox`]: Test-Box style sender/receiver log parsing and pairing
//! - [`prober`]: live UDP two-size probing against an echo reflector

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod model;
pub mod planner;
pub mod prober;
pub mod sim;
pub mod testbox;

pub use error::{Error, Result};
pub use model::{
    Bandwidth, BandwidthEstimate, Delay, DelaySample, Direction, Hop, PacketSize, PathModel,
    ProbePair, VariableDelay,
};

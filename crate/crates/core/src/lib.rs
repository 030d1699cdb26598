//! Deadline-aware bandwidth allocation for tiled VR video flows that share a
//! single bottleneck link.
//!
//! The crate is split along the path a frame takes through the bottleneck:
//!
//! * [`video`] and [`wire`] describe frames and the header marks the server
//!   attaches to them;
//! * [`delay`] turns those marks into per-frame queuing delay bounds;
//! * [`queue`] keeps each flow's frames ordered by importance and slack;
//! * [`lt`] and [`st`] compute the long- and short-timescale allocations;
//! * [`forwarder`] spends the allocations with a frame-level DWRR;
//! * [`baselines`] holds RR, EDF and the ablation variants;
//! * [`sim`] and [`traffic`] drive everything from a deterministic
//!   discrete-event model of a dumbbell topology.
//!
//! The queueing math is generic over the scalar type (see [`Scalar`]); the
//! simulator itself runs on `f64` through the aliases below.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod delay;
pub mod error;
pub mod forwarder;
pub mod lt;
pub mod metrics;
pub mod queue;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod st;
pub mod time;
pub mod traffic;
pub mod video;
pub mod wire;

pub use error::{CodecError, ConfigError, DomainError, TraceError};
pub use scalar::Scalar;
pub use time::Micros;

/// Exponentially weighted mean/variance tracker over `f64` samples.
pub type EwmaStat = delay::Ewma<f64>;
/// Single-precision variant of [`EwmaStat`].
pub type EwmaStat32 = delay::Ewma<f32>;
/// Arrival/service moments feeding the Kingman inversion.
pub type ArrivalServiceStats = lt::ArrivalServiceStats<f64>;
/// Single-precision variant of [`ArrivalServiceStats`].
pub type ArrivalServiceStats32 = lt::ArrivalServiceStats<f32>;

//! Scheduling of shared residential battery fleets under a distribution
//! transformer limit.
//!
//! The crate builds five battery sharing schemes (individual, individual with
//! uneven transformer allocation, joint, hybrid, dynamic partitioning) as
//! convex QPs, runs them under perfect foresight or receding-horizon control,
//! bills the resulting meters under time-of-use tariffs and tracks transformer
//! insulation aging with a top-oil / hottest-spot thermal model.

pub mod app;
pub mod error;
pub mod forecast;
pub mod mpc;
pub mod qp;
pub mod schemes;
pub mod study;
pub mod thermal;
pub mod timeseries;

pub use error::{Error, Result};

//! DC power-system state estimation, chi-squared bad-data detection and the
//! analysis of stealth data attacks against it.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; randomness always comes from an explicit seed.
//!
//! Module map:
//!
//! * [`linalg`] / [`stats`]: dense kernels and chi-squared distributions.
//! * [`grid`]: network, measurement placement and the measurement model.
//! * [`estimation`]: weighted least squares, residual test, noise simulation.
//! * [`synthesis`]: stealth attacks and the exact minimum-cardinality search.
//! * [`detection`]: imperfect-model adversaries and detection probability.
//! * [`impact`]: load-estimate impact and resource-limited optimal attacks.
//!
//! Measurement and state indices are zero-based throughout this crate.

#![no_std]

extern crate alloc;

pub mod detection;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod impact;
pub mod linalg;
pub mod stats;
pub mod synthesis;

pub use error::{Error, Result};

//! Simulation and estimation toolkit for microring photon-pair sources.
//!
//! The crate generates time-tagged photon streams from a down-conversion
//! source model ([`sourcesim`]), runs them through a detector model
//! ([`detchain`]), histograms coincidences ([`tcspc`]) and recovers the source
//! parameters by fitting analytic correlation models ([`fitmodels`]).
//! [`ringdesign`] holds the resonator design arithmetic and [`scenario`] wires
//! everything into reproducible end-to-end runs.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detchain;
pub mod error;
pub mod fitmodels;
pub mod ringdesign;
pub mod rng;
pub mod scenario;
pub mod sourcesim;
pub mod special;
pub mod stream;
pub mod tcspc;

pub use error::{Error, Result};
pub use stream::TimeTagStream;

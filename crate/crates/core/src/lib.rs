//! Error-cascade dynamics for multi-agent message-passing graphs.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece:
//!
//! - [`graph`]: topology presets, validation, and spectral analysis.
//! - [`dynamics`]: the individual-based mean-field update, coverage, false
//!   consensus detection, and the spectral risk diagnostic.
//! - [`montecarlo`]: independent-cascade trials that act as the empirical
//!   reference for the mean-field model.
//! - [`calibration`]: two-stage grid search for `(beta, delta)`.
//! - [`adversary`]: seed claims, packaging policies, and placement.
//! - [`governance`]: the lineage-based message interceptor and offline replay.
//! - [`run`]: a single message-level run with an optional gate on the
//!   message path, plus the per-run metrics.
//!
//! IO, configuration files, parallel orchestration, and the CLI live in the
//! `cascade-harness` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adversary;
pub mod calibration;
pub mod dynamics;
mod error;
pub mod governance;
pub mod graph;
pub mod montecarlo;
pub mod rng;
pub mod run;

pub use crate::error::{Error, Result};
pub use crate::graph::{DirectedGraph, SpectralSummary, TopologyConfig, TopologyKind};

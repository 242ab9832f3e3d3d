//! Deterministic discrete-event simulator of PDCP-anchored multi-connectivity.
//!
//! A single PDCP anchor splits (or duplicates) traffic across one or more
//! radio paths, each with its own backhaul, CQI-driven capacity, queue and
//! loss. The receiver either delivers on arrival or restores order with a
//! t-Reordering window. TCP NewReno and constant-bit-rate UDP sit on top.
//!
//! Start with [`scenario::run_scenario`] for one configuration, or
//! [`matrix::run_matrix`] for a sweep.

pub mod config;
pub mod matrix;
pub mod metrics;
pub mod path;
pub mod pdcp;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod transport;

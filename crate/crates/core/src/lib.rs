//! Incentive-compatible navigation recommendations on congestible road networks, and
//! fabricated-demand attacks against them.
//!
//! - [`network`]: graph, latencies, path enumeration, flow aggregation.
//! - [`behavior`]: logit route choice of drivers who ignore recommendations.
//! - [`equilibrium`]: Wardrop and best-response solvers with equilibrium certificates.
//! - [`attack`]: optimal and baseline demand fabrication, sensitivity checks.
//! - [`scenario`]: scenario files, built-in instances, pipelines and reports.
//! - [`verify`]: the property suite.

pub mod attack;
pub mod behavior;
pub mod equilibrium;
pub mod error;
pub mod network;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};

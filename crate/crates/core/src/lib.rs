//! Downlink/uplink decoupled association and resource allocation for
//! multi-access edge computing in two-tier cellular networks.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod matching;
pub mod mec_model;
pub mod power_opt;
pub mod topology;
pub mod units;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

//! Analytic and simulation models of fronthaul rate adaptation for a cluster
//! of remote radio units sharing one aggregation link.

pub mod aggregator;
pub mod cli;
pub mod config;
pub mod ctmc;
pub mod error;
pub mod math;
pub mod rru;
pub mod sim;

pub use error::{Error, Result};

//! Monte-Carlo harness: scenarios, metrics, configuration, sweeps and
//! result files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sweep;

//! Batch front-end for the partial-hedging solvers: JSON configuration
//! in, JSON or CSV report out.

pub mod config;
pub mod report;
pub mod run;

//! Batch front end for the `markov-gap` library: JSON experiment configs in,
//! CSV or JSON reports out.

pub mod config;
pub mod report;
pub mod runner;

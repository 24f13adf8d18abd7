//! Structured pruning by complementary separation.
//!
//! Each prunable layer is described by a separability space (one row per
//! component), its rows are clustered with k-medoids for every subset size,
//! the knee of the resulting MSS curve picks the subset size, and one
//! representative per cluster survives. A small built-in network engine
//! provides models to prune.

pub mod cli;
pub mod cluster;
pub mod datagen;
pub mod error;
pub mod knee;
pub mod planner;
pub mod report;
pub mod rng;
pub mod sepspace;
pub mod tensio;
pub mod toynet;

pub use error::{Error, Result};

//! Experiment harness around the restoration core: TOML-configured grids,
//! paired statistics, metrics CSV and image artifacts.

pub mod config;
pub mod priors;
pub mod runner;
pub mod stats;

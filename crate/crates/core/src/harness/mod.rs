//! Experiment configuration, data generators, baselines, parameter sweeps and
//! the self-verification suites behind the command-line tool.

pub mod baselines;
pub mod config;
pub mod generators;
pub mod sweep;
pub mod verify;

//! Discrete-time Markov models of edge computing queueing networks.

pub mod config;
pub mod error;
pub mod kpi;
pub mod markov;
pub mod oracle;
pub mod pipeline;
pub mod simulator;
pub mod subsystems;
pub mod sweep;

pub use error::{Error, Result};

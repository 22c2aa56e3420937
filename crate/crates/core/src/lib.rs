//! Fiber drawing plant simulator and control workbench.

pub mod agent;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod kv;
pub mod nn;
pub mod par;
pub mod plant;
pub mod seed;
pub mod trajectories;

pub use error::{Error, Result};

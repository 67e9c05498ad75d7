//! Kernelized episodic reinforcement learning: GP-UCRL and PSRL over
//! discretized continuous MDPs, with the Gaussian-process, information-gain
//! and confidence-set machinery they rest on.

pub mod agents;
pub mod confidence;
pub mod domain;
pub mod envs;
pub mod error;
pub mod gp;
pub mod harness;
pub mod infogain;
pub mod kernels;
pub mod planners;
pub mod rng;

pub use error::{Error, Result};

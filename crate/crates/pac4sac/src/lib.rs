//! PAC-Bayes-trained soft actor-critic with a randomized critic, a twin-critic
//! SAC baseline, classic-control environments, and a tabular verification lab
//! for the underlying value-error bound and policy-improvement guarantees.

pub mod agents;
pub mod boundlab;
pub mod diffmath;
pub mod envs;
pub mod nets;
pub mod replay;
pub mod error;
pub mod exec;
pub mod harness;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};

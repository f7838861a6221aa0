//! Classic-control environments with deterministic dynamics and seeded
//! resets. Truncation (time limit) is reported separately from termination;
//! value bootstrapping keys off termination only, keeping the value function
//! stationary under the infinite-horizon objective.

mod cartpole;
mod pendulum;

pub use cartpole::CartpoleSwingup;
pub use pendulum::Pendulum;

use rand::RngCore;

use crate::error::{Error, Result};

/// Static description of an environment's interface and reward range.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub reward_min: f64,
    pub reward_max: f64,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

pub trait Env {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode; initial conditions are drawn from `rng`.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advance one step. Out-of-box actions are clipped. Stepping a finished
    /// episode without a reset is a contract error.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
}

/// Environment registry keyed by name.
pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "cartpole-swingup" => Ok(Box::new(CartpoleSwingup::new())),
        other => Err(Error::Config(format!(
            "unknown environment {other:?}; expected \"pendulum\" or \"cartpole-swingup\""
        ))),
    }
}

/// Wrap an angle to (-pi, pi].
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
        - std::f64::consts::PI;
    if wrapped == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        wrapped
    }
}

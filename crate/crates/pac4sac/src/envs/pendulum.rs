//! Torque-controlled pendulum with the standard published dynamics:
//! semi-implicit Euler, quadratic cost on angle, velocity, and torque.

use rand::{Rng, RngCore};

use super::{wrap_angle, Env, EnvSpec, StepOutcome};
use crate::error::{Error, Result};

const DT: f64 = 0.05;
const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const MAX_TORQUE: f64 = 2.0;
const MAX_SPEED: f64 = 8.0;
const MAX_STEPS: usize = 200;

pub struct Pendulum {
    spec: EnvSpec,
    pub(crate) theta: f64,
    pub(crate) theta_dot: f64,
    steps: usize,
    needs_reset: bool,
}

impl Pendulum {
    pub fn new() -> Pendulum {
        Pendulum {
            spec: EnvSpec {
                name: "pendulum",
                obs_dim: 3,
                action_dim: 1,
                action_low: vec![-MAX_TORQUE],
                action_high: vec![MAX_TORQUE],
                // Extremes of the quadratic cost: angle pi, speed 8, torque 2.
                reward_min: -(std::f64::consts::PI * std::f64::consts::PI
                    + 0.1 * MAX_SPEED * MAX_SPEED
                    + 0.001 * MAX_TORQUE * MAX_TORQUE),
                reward_max: 0.0,
                max_episode_steps: MAX_STEPS,
            },
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            needs_reset: true,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    #[cfg(test)]
    pub(crate) fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
        self.needs_reset = false;
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.steps = 0;
        self.needs_reset = false;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.needs_reset {
            return Err(Error::Contract("step on a finished episode; call reset first".into()));
        }
        let torque = action[0].clamp(-MAX_TORQUE, MAX_TORQUE);

        // Cost of the pre-step state under the applied (clipped) torque.
        let angle = wrap_angle(self.theta);
        let cost =
            angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque;

        // Semi-implicit Euler.
        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * torque;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;

        self.steps += 1;
        let truncated = self.steps >= MAX_STEPS;
        if truncated {
            self.needs_reset = true;
        }
        Ok(StepOutcome { obs: self.observation(), reward: -cost, terminal: false, truncated })
    }
}

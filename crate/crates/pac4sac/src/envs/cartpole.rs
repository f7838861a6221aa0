//! Cart-pole swingup: the classic cart-pole rigid-body equations integrated
//! with explicit Euler, started hanging down, rewarded by the cosine of the
//! pole angle. Terminates when the cart leaves the track.

use rand::{Rng, RngCore};

use super::{wrap_angle, Env, EnvSpec, StepOutcome};
use crate::error::{Error, Result};

const DT: f64 = 0.02;
const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const HALF_LENGTH: f64 = 0.5;
const FORCE_SCALE: f64 = 10.0;
const X_LIMIT: f64 = 2.4;
const MAX_STEPS: usize = 500;
// Velocities are clamped to keep observations bounded under extreme inputs.
const MAX_X_DOT: f64 = 10.0;
const MAX_THETA_DOT: f64 = 10.0;

pub struct CartpoleSwingup {
    spec: EnvSpec,
    pub(crate) x: f64,
    pub(crate) x_dot: f64,
    pub(crate) theta: f64,
    pub(crate) theta_dot: f64,
    steps: usize,
    needs_reset: bool,
}

impl CartpoleSwingup {
    pub fn new() -> CartpoleSwingup {
        CartpoleSwingup {
            spec: EnvSpec {
                name: "cartpole-swingup",
                obs_dim: 5,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                reward_min: -1.0,
                reward_max: 1.0,
                max_episode_steps: MAX_STEPS,
            },
            x: 0.0,
            x_dot: 0.0,
            theta: std::f64::consts::PI,
            theta_dot: 0.0,
            steps: 0,
            needs_reset: true,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    #[cfg(test)]
    pub(crate) fn set_state(&mut self, x: f64, x_dot: f64, theta: f64, theta_dot: f64) {
        self.x = x;
        self.x_dot = x_dot;
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
        self.needs_reset = false;
    }
}

impl Default for CartpoleSwingup {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for CartpoleSwingup {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.x = 0.0;
        self.x_dot = 0.0;
        // Hanging down, with a small perturbation.
        self.theta = std::f64::consts::PI + rng.random_range(-0.05..0.05);
        self.theta_dot = rng.random_range(-0.05..0.05);
        self.steps = 0;
        self.needs_reset = false;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.needs_reset {
            return Err(Error::Contract("step on a finished episode; call reset first".into()));
        }
        let force = FORCE_SCALE * action[0].clamp(-1.0, 1.0);

        let total_mass = MASS_CART + MASS_POLE;
        let polemass_length = MASS_POLE * HALF_LENGTH;
        let (sin_t, cos_t) = self.theta.sin_cos();
        let temp = (force + polemass_length * self.theta_dot * self.theta_dot * sin_t) / total_mass;
        let theta_acc = (GRAVITY * sin_t - cos_t * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

        // Explicit Euler with pre-update derivatives.
        self.x += DT * self.x_dot;
        self.x_dot = (self.x_dot + DT * x_acc).clamp(-MAX_X_DOT, MAX_X_DOT);
        self.theta = wrap_angle(self.theta + DT * self.theta_dot);
        self.theta_dot = (self.theta_dot + DT * theta_acc).clamp(-MAX_THETA_DOT, MAX_THETA_DOT);

        self.steps += 1;
        let terminal = self.x.abs() > X_LIMIT;
        let truncated = !terminal && self.steps >= MAX_STEPS;
        if terminal || truncated {
            self.needs_reset = true;
        }
        Ok(StepOutcome {
            obs: self.observation(),
            reward: self.theta.cos(),
            terminal,
            truncated,
        })
    }
}

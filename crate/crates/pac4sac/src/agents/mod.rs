//! Training agents: the PAC-Bayes-trained randomized-critic algorithm and a
//! standard twin-critic SAC baseline, sharing the environment, replay, and
//! network substrate.
//!
//! Per environment step both agents act, store the transition, and (after
//! warmup) run one critic update, one actor update, and one Polyak update of
//! the target critic, in that order.

mod adam;
mod pac4sac;
mod sac;

pub use adam::Adam;
pub use pac4sac::Pac4SacAgent;
pub use sac::SacAgent;

use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::nets::{Binder, CriticNet, Param, SquashedGaussianPolicy, DEFAULT_HIDDEN};
use crate::replay::Transition;

/// Which critic-loss terms are active (for the ablation study). The data-fit
/// term is the regression backbone; the complexity penalty and overestimation
/// correction are the two regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossToggles {
    pub data_fit: bool,
    pub complexity: bool,
    pub correction: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles { data_fit: true, complexity: true, correction: true }
    }
}

/// Hyperparameters shared by both agents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Reward discount, in (0, 1].
    pub discount: f64,
    /// Entropy coefficient, > 0. Fixed; no automatic tuning.
    pub entropy_coef: f64,
    /// Polyak rate for target updates, in (0, 1).
    pub polyak_rate: f64,
    /// Adam learning rate.
    pub learning_rate: f64,
    /// Minibatch size.
    pub batch_size: usize,
    /// Candidate count for critic-guided random action search, >= 1.
    pub search_samples: usize,
    /// Overestimation-correction coefficient, in (0, 1].
    pub correction_coef: f64,
    /// Prior std of the critic weight posterior.
    pub prior_std: f64,
    /// Replay capacity.
    pub buffer_capacity: usize,
    /// Environment steps to train for.
    pub total_steps: usize,
    /// Initial steps with uniform actions and no updates.
    pub warmup_steps: usize,
    /// Critic-loss term toggles.
    pub toggles: LossToggles,
    /// Keep the entropy term in the policy loss (disable for
    /// pure value-maximization policy updates).
    pub entropy_in_policy_loss: bool,
    /// Trunk width.
    pub hidden: usize,
    /// Run seed; every random stream derives from it.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            discount: 0.99,
            entropy_coef: 0.2,
            polyak_rate: 0.005,
            learning_rate: 1e-3,
            batch_size: 32,
            search_samples: 500,
            correction_coef: 0.01,
            prior_std: 1.0,
            buffer_capacity: 25_000,
            total_steps: 10_000,
            warmup_steps: 1_000,
            toggles: LossToggles::default(),
            entropy_in_policy_loss: true,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.discount > 0.0 && self.discount <= 1.0, "discount must be in (0, 1]"),
            (self.entropy_coef > 0.0, "entropy coefficient must be positive"),
            (self.polyak_rate > 0.0 && self.polyak_rate < 1.0, "polyak rate must be in (0, 1)"),
            (self.learning_rate >= 0.0, "learning rate must be nonnegative"),
            (self.batch_size >= 1, "batch size must be at least 1"),
            (self.search_samples >= 1, "search sample count must be at least 1"),
            (
                self.correction_coef > 0.0 && self.correction_coef <= 1.0,
                "correction coefficient must be in (0, 1]",
            ),
            (self.prior_std > 0.0, "prior std must be positive"),
            (self.buffer_capacity >= 1, "buffer capacity must be at least 1"),
            (self.hidden >= 1, "hidden width must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}

/// Diagnostics from one gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub kl: f64,
    pub variance: f64,
}

/// Outcome of one environment step (plus the update, once past warmup).
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub env_step: usize,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
    pub update: Option<UpdateReport>,
}

/// A training algorithm the harness can drive step by step.
pub trait Agent {
    fn train_step(&mut self, env: &mut dyn Env) -> Result<StepReport>;

    /// Parameters to persist in a checkpoint.
    fn checkpoint_params(&self) -> Vec<&Param>;
}

/// Algorithm registry keyed by CLI name.
pub fn make_agent(algo: &str, spec: &EnvSpec, config: &TrainingConfig) -> Result<Box<dyn Agent>> {
    match algo {
        "pac4sac" => Ok(Box::new(Pac4SacAgent::new(spec, config.clone())?)),
        "sac" => Ok(Box::new(SacAgent::new(spec, config.clone())?)),
        other => Err(Error::Config(format!(
            "unknown algorithm {other:?}; expected \"pac4sac\" or \"sac\""
        ))),
    }
}

/// Soft Bellman targets `ŷᵢ = rᵢ + (1 − terminalᵢ)·γ·(qᵢ − α·log πᵢ)` over a
/// minibatch, with the discounted grouping covering both the value and the
/// entropy term.
pub fn soft_bellman_targets(
    rewards: &[f64],
    terminals: &[bool],
    next_values: &[f64],
    next_log_probs: &[f64],
    entropy_coef: f64,
    discount: f64,
) -> Vec<f64> {
    rewards
        .iter()
        .zip(terminals)
        .zip(next_values.iter().zip(next_log_probs))
        .map(|((r, &terminal), (q, logp))| {
            let mask = if terminal { 0.0 } else { 1.0 };
            r + mask * discount * (q - entropy_coef * logp)
        })
        .collect()
}

/// Population variance `(1/M)Σq² − ((1/M)Σq)²` of a prediction vector,
/// differentiable through `q`.
pub fn empirical_variance(q: &Tensor) -> Tensor {
    q.square().mean().sub(&q.mean().square()).expect("scalar shapes agree")
}

/// Plain-value population variance.
pub fn empirical_variance_values(q: &[f64]) -> f64 {
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    q.iter().map(|v| v * v).sum::<f64>() / q.len() as f64 - mean * mean
}

/// Critic loss: data-fit Bellman regression, plus `sqrt(kl/N)` complexity
/// penalty, minus the `γ·ξ`-scaled predictive variance. Disabled toggles
/// contribute zero.
pub fn pac_critic_loss(
    q: &Tensor,
    targets: &[f64],
    kl: &Tensor,
    buffer_len: usize,
    discount: f64,
    correction_coef: f64,
    toggles: LossToggles,
) -> Result<Tensor> {
    if buffer_len == 0 {
        return Err(Error::Contract("critic loss needs a nonempty replay buffer".into()));
    }
    if targets.len() != q.len() {
        return Err(Error::ShapeMismatch {
            left: q.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    let mut loss = Tensor::scalar(0.0);
    if toggles.data_fit {
        let target = Tensor::from_values(targets.to_vec(), q.shape())?;
        loss = loss.add(&q.sub(&target)?.square().mean())?;
    }
    if toggles.complexity {
        loss = loss.add(&kl.scale(1.0 / buffer_len as f64).sqrt()?)?;
    }
    if toggles.correction {
        loss = loss.sub(&empirical_variance(q).scale(discount * correction_coef))?;
    }
    Ok(loss)
}

/// Policy-improvement loss `mean(α·log π − q)`; minimizing it ascends the
/// entropy-regularized value. Gradients flow through the reparameterized
/// action inside `q`, not through critic parameters (the caller freezes them).
pub fn policy_improvement_loss(
    log_prob: &Tensor,
    q_values: &Tensor,
    entropy_coef: f64,
) -> Result<Tensor> {
    Ok(log_prob.scale(entropy_coef).sub(q_values)?.mean())
}

/// Polyak update `target ← rate·online + (1 − rate)·target` across aligned
/// parameter lists.
pub fn polyak_update(target: &mut [&mut Param], online: &[&Param], rate: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::Contract(format!(
            "parameter count mismatch: {} vs {}",
            target.len(),
            online.len()
        )));
    }
    for (t, o) in target.iter_mut().zip(online) {
        if t.shape() != o.shape() {
            return Err(Error::ShapeMismatch {
                left: t.shape().to_vec(),
                right: o.shape().to_vec(),
            });
        }
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = rate * ov + (1.0 - rate) * *tv;
        }
    }
    Ok(())
}

/// Candidate actions with their sampled-critic scores.
pub struct SearchCandidates {
    pub actions: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
}

/// Index of the best-scoring candidate (first maximum on ties).
pub fn argmax_candidate(candidates: &SearchCandidates) -> usize {
    let mut best = 0;
    for (i, s) in candidates.scores.iter().enumerate() {
        if *s > candidates.scores[best] {
            best = i;
        }
    }
    best
}

/// Draw `count` candidate actions from the actor and score each with an
/// independent critic weight sample.
pub fn search_candidates(
    state: &[f64],
    policy: &SquashedGaussianPolicy,
    critic: &CriticNet,
    count: usize,
    actor_rng: &mut impl rand::Rng,
    critic_rng: &mut impl rand::Rng,
) -> Result<SearchCandidates> {
    let state_dim = state.len();
    let action_dim = policy.action_dim();
    let mut batch = Vec::with_capacity(count * state_dim);
    for _ in 0..count {
        batch.extend_from_slice(state);
    }
    let states = Tensor::from_values(batch, &[count, state_dim])?;
    let actor_noise = crate::rng::normal_block(actor_rng, count * action_dim);
    let mut bind = Binder::frozen();
    let (actions, _) = policy.sample(&states, &actor_noise, &mut bind)?;

    let critic_noise = crate::rng::normal_block(critic_rng, count * critic.noise_len()?);
    let scores = critic.forward_sampled(&states.concat_cols(&actions)?, &critic_noise, &mut bind)?;

    let actions = actions
        .values()
        .chunks(action_dim)
        .map(|chunk| chunk.to_vec())
        .collect();
    Ok(SearchCandidates { actions, scores: scores.values().to_vec() })
}

/// Critic-guided random action search: act with the best of `count` actor
/// samples as scored by sampled critic weights. `count == 1` degenerates to
/// plain actor sampling and leaves the critic stream untouched.
pub fn select_action_random_search(
    state: &[f64],
    policy: &SquashedGaussianPolicy,
    critic: &CriticNet,
    count: usize,
    actor_rng: &mut impl rand::Rng,
    critic_rng: &mut impl rand::Rng,
) -> Result<Vec<f64>> {
    if count == 1 {
        let states = Tensor::from_values(state.to_vec(), &[1, state.len()])?;
        let noise = crate::rng::normal_block(actor_rng, policy.action_dim());
        let mut bind = Binder::frozen();
        let (action, _) = policy.sample(&states, &noise, &mut bind)?;
        return Ok(action.values().to_vec());
    }
    let candidates = search_candidates(state, policy, critic, count, actor_rng, critic_rng)?;
    let best = argmax_candidate(&candidates);
    Ok(candidates.actions[best].clone())
}

/// Uniform action in the box, for warmup exploration.
pub(crate) fn uniform_action(spec: &EnvSpec, rng: &mut impl rand::Rng) -> Vec<f64> {
    spec.action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(&lo, &hi)| rng.random_range(lo..hi))
        .collect()
}

/// Minibatch assembled into flat row-major blocks.
pub(crate) struct Batch {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn gather(transitions: &[&Transition]) -> Batch {
        let size = transitions.len();
        let mut batch = Batch {
            states: Vec::with_capacity(size * transitions[0].state.len()),
            actions: Vec::with_capacity(size * transitions[0].action.len()),
            rewards: Vec::with_capacity(size),
            next_states: Vec::with_capacity(size * transitions[0].next_state.len()),
            terminals: Vec::with_capacity(size),
        };
        for t in transitions {
            batch.states.extend_from_slice(&t.state);
            batch.actions.extend_from_slice(&t.action);
            batch.rewards.push(t.reward);
            batch.next_states.extend_from_slice(&t.next_state);
            batch.terminals.push(t.terminal);
        }
        batch
    }
}

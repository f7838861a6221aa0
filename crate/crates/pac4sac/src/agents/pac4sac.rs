//! Randomized-critic agent: a single critic whose output layer carries a
//! weight posterior, trained on the data-fit + complexity − correction loss,
//! acting through critic-guided random action search.

use super::{
    empirical_variance_values, pac_critic_loss, policy_improvement_loss, polyak_update,
    select_action_random_search, soft_bellman_targets, uniform_action, Adam, Agent, Batch,
    StepReport, TrainingConfig, UpdateReport,
};
use crate::diffmath::{Tape, Tensor};
use crate::envs::{Env, EnvSpec};
use crate::error::Result;
use crate::nets::{copy_params, Binder, CriticNet, Param, SquashedGaussianPolicy};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{normal_block, RunStreams};

pub struct Pac4SacAgent {
    config: TrainingConfig,
    actor: SquashedGaussianPolicy,
    critic: CriticNet,
    target_critic: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    streams: RunStreams,
    env_step: usize,
    current_obs: Option<Vec<f64>>,
}

impl Pac4SacAgent {
    pub fn new(spec: &EnvSpec, config: TrainingConfig) -> Result<Pac4SacAgent> {
        config.validate()?;
        let mut streams = RunStreams::new(config.seed);
        let actor = SquashedGaussianPolicy::new(
            &mut streams.init,
            spec.obs_dim,
            &spec.action_low,
            &spec.action_high,
            config.hidden,
        );
        let critic = CriticNet::new_probabilistic(
            &mut streams.init,
            "critic",
            spec.obs_dim,
            spec.action_dim,
            config.hidden,
            config.prior_std,
        );
        let mut target_critic = CriticNet::new_probabilistic(
            &mut streams.init,
            "target_critic",
            spec.obs_dim,
            spec.action_dim,
            config.hidden,
            config.prior_std,
        );
        copy_params(&mut target_critic.params_mut(), &critic.params())?;

        let actor_opt =
            Adam::new(config.learning_rate, &actor.params().iter().map(|p| p.len()).collect::<Vec<_>>());
        let critic_opt = Adam::new(
            config.learning_rate,
            &critic.params().iter().map(|p| p.len()).collect::<Vec<_>>(),
        );
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Ok(Pac4SacAgent {
            config,
            actor,
            critic,
            target_critic,
            actor_opt,
            critic_opt,
            buffer,
            streams,
            env_step: 0,
            current_obs: None,
        })
    }

    pub fn actor(&self) -> &SquashedGaussianPolicy {
        &self.actor
    }

    pub fn critic(&self) -> &CriticNet {
        &self.critic
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn target_critic_params(&self) -> Vec<&Param> {
        self.target_critic.params()
    }

    fn in_warmup(&self) -> bool {
        self.env_step < self.config.warmup_steps
    }

    fn update(&mut self) -> Result<UpdateReport> {
        let cfg = &self.config;
        let m = cfg.batch_size;
        let indices = self.buffer.sample_indices(m, &mut self.streams.buffer)?;
        let transitions: Vec<&Transition> = indices.iter().map(|&i| self.buffer.get(i)).collect();
        let batch = Batch::gather(&transitions);
        let state_dim = transitions[0].state.len();
        let action_dim = transitions[0].action.len();
        let noise_len = self.critic.noise_len()?;

        // Soft Bellman targets from the target posterior; plain values, so
        // they are gradient-detached by construction.
        let mut frozen = Binder::frozen();
        let next_states = Tensor::from_values(batch.next_states.clone(), &[m, state_dim])?;
        let next_noise = normal_block(&mut self.streams.actor, m * action_dim);
        let (next_actions, next_log_probs) =
            self.actor.sample(&next_states, &next_noise, &mut frozen)?;
        let target_noise = normal_block(&mut self.streams.critic, m * noise_len);
        let next_q = self.target_critic.forward_sampled(
            &next_states.concat_cols(&next_actions)?,
            &target_noise,
            &mut frozen,
        )?;
        let targets = soft_bellman_targets(
            &batch.rewards,
            &batch.terminals,
            next_q.values(),
            next_log_probs.values(),
            cfg.entropy_coef,
            cfg.discount,
        );

        // Policy evaluation: one reparameterized weight draw per batch row.
        let tape = Tape::new();
        let mut bind = Binder::tracked(&tape);
        let states = Tensor::from_values(batch.states.clone(), &[m, state_dim])?;
        let actions = Tensor::from_values(batch.actions.clone(), &[m, action_dim])?;
        let q_noise = normal_block(&mut self.streams.critic, m * noise_len);
        let q = self.critic.forward_sampled(&states.concat_cols(&actions)?, &q_noise, &mut bind)?;
        let kl = self.critic.gauss_head()?.kl_to_prior(&mut bind)?;
        let critic_loss = pac_critic_loss(
            &q,
            &targets,
            &kl,
            self.buffer.len(),
            cfg.discount,
            cfg.correction_coef,
            cfg.toggles,
        )?;
        critic_loss.backward()?;
        let grads: Vec<Option<Vec<f64>>> =
            self.critic.params().iter().map(|p| bind.grad(p)).collect();
        self.critic_opt.step(&mut self.critic.params_mut(), &grads);

        // Policy improvement: fresh reparameterized actions, critic frozen so
        // gradients reach the actor only through the sampled action.
        let actor_tape = Tape::new();
        let mut actor_bind = Binder::tracked(&actor_tape);
        let actor_noise = normal_block(&mut self.streams.actor, m * action_dim);
        let (new_actions, log_probs) = self.actor.sample(&states, &actor_noise, &mut actor_bind)?;
        let pi_noise = normal_block(&mut self.streams.critic, m * noise_len);
        let mut critic_frozen = Binder::frozen();
        let q_pi = self.critic.forward_sampled(
            &states.concat_cols(&new_actions)?,
            &pi_noise,
            &mut critic_frozen,
        )?;
        let entropy_coef = if cfg.entropy_in_policy_loss { cfg.entropy_coef } else { 0.0 };
        let actor_loss = policy_improvement_loss(&log_probs, &q_pi, entropy_coef)?;
        actor_loss.backward()?;
        let actor_grads: Vec<Option<Vec<f64>>> =
            self.actor.params().iter().map(|p| actor_bind.grad(p)).collect();
        self.actor_opt.step(&mut self.actor.params_mut(), &actor_grads);

        polyak_update(
            &mut self.target_critic.params_mut(),
            &self.critic.params(),
            self.config.polyak_rate,
        )?;

        Ok(UpdateReport {
            critic_loss: critic_loss.item(),
            actor_loss: actor_loss.item(),
            kl: kl.item(),
            variance: empirical_variance_values(q.values()),
        })
    }
}

impl Agent for Pac4SacAgent {
    fn train_step(&mut self, env: &mut dyn Env) -> Result<StepReport> {
        let obs = match self.current_obs.take() {
            Some(obs) => obs,
            None => env.reset(&mut self.streams.env),
        };

        let action = if self.in_warmup() {
            uniform_action(env.spec(), &mut self.streams.actor)
        } else {
            select_action_random_search(
                &obs,
                &self.actor,
                &self.critic,
                self.config.search_samples,
                &mut self.streams.actor,
                &mut self.streams.critic,
            )?
        };

        let out = env.step(&action)?;
        self.buffer.push(Transition {
            state: obs,
            action,
            reward: out.reward,
            next_state: out.obs.clone(),
            terminal: out.terminal,
        });

        let update = if !self.in_warmup() && self.buffer.len() >= self.config.batch_size {
            Some(self.update()?)
        } else {
            None
        };

        self.current_obs = if out.terminal || out.truncated {
            Some(env.reset(&mut self.streams.env))
        } else {
            Some(out.obs)
        };

        let report = StepReport {
            env_step: self.env_step,
            reward: out.reward,
            terminal: out.terminal,
            truncated: out.truncated,
            update,
        };
        self.env_step += 1;
        Ok(report)
    }

    fn checkpoint_params(&self) -> Vec<&Param> {
        let mut params = self.actor.params();
        params.extend(self.critic.params());
        params
    }
}

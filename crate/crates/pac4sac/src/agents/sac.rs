//! Twin-critic SAC baseline: two deterministic critics with Polyak-averaged
//! target copies, the minimum of the two targets in the Bellman backup, and
//! the minimum of the two online critics in the policy loss.

use super::{
    policy_improvement_loss, polyak_update, soft_bellman_targets, uniform_action, Adam, Agent,
    Batch, StepReport, TrainingConfig, UpdateReport,
};
use crate::diffmath::{Tape, Tensor};
use crate::envs::{Env, EnvSpec};
use crate::error::Result;
use crate::nets::{copy_params, Binder, CriticNet, Param, SquashedGaussianPolicy};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{normal_block, RunStreams};

pub struct SacAgent {
    config: TrainingConfig,
    actor: SquashedGaussianPolicy,
    critics: [CriticNet; 2],
    targets: [CriticNet; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    buffer: ReplayBuffer,
    streams: RunStreams,
    env_step: usize,
    current_obs: Option<Vec<f64>>,
}

impl SacAgent {
    pub fn new(spec: &EnvSpec, config: TrainingConfig) -> Result<SacAgent> {
        config.validate()?;
        let mut streams = RunStreams::new(config.seed);
        let actor = SquashedGaussianPolicy::new(
            &mut streams.init,
            spec.obs_dim,
            &spec.action_low,
            &spec.action_high,
            config.hidden,
        );
        let new_critic = |rng: &mut rand_chacha::ChaCha8Rng, name: &str| {
            CriticNet::new_deterministic(rng, name, spec.obs_dim, spec.action_dim, config.hidden)
        };
        let critics = [new_critic(&mut streams.init, "critic1"), new_critic(&mut streams.init, "critic2")];
        let mut targets =
            [new_critic(&mut streams.init, "target1"), new_critic(&mut streams.init, "target2")];
        for (target, critic) in targets.iter_mut().zip(&critics) {
            copy_params(&mut target.params_mut(), &critic.params())?;
        }

        let actor_opt =
            Adam::new(config.learning_rate, &actor.params().iter().map(|p| p.len()).collect::<Vec<_>>());
        let critic_opts = [
            Adam::new(
                config.learning_rate,
                &critics[0].params().iter().map(|p| p.len()).collect::<Vec<_>>(),
            ),
            Adam::new(
                config.learning_rate,
                &critics[1].params().iter().map(|p| p.len()).collect::<Vec<_>>(),
            ),
        ];
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Ok(SacAgent {
            config,
            actor,
            critics,
            targets,
            actor_opt,
            critic_opts,
            buffer,
            streams,
            env_step: 0,
            current_obs: None,
        })
    }

    pub fn critics(&self) -> (&CriticNet, &CriticNet) {
        (&self.critics[0], &self.critics[1])
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

        // Targets under the minimum of the two target critics.
        let mut frozen = Binder::frozen();
        let next_states = Tensor::from_values(batch.next_states.clone(), &[m, state_dim])?;
        let next_noise = normal_block(&mut self.streams.actor, m * action_dim);
        let (next_actions, next_log_probs) =
            self.actor.sample(&next_states, &next_noise, &mut frozen)?;
        let next_sa = next_states.concat_cols(&next_actions)?;
        let q1 = self.targets[0].forward(&next_sa, &mut frozen)?;
        let q2 = self.targets[1].forward(&next_sa, &mut frozen)?;
        let min_q = q1.minimum(&q2)?;
        let targets = soft_bellman_targets(
            &batch.rewards,
            &batch.terminals,
            min_q.values(),
            next_log_probs.values(),
            cfg.entropy_coef,
            cfg.discount,
        );

        // Both critics regress to the shared target.
        let tape = Tape::new();
        let mut bind = Binder::tracked(&tape);
        let states = Tensor::from_values(batch.states.clone(), &[m, state_dim])?;
        let actions = Tensor::from_values(batch.actions.clone(), &[m, action_dim])?;
        let sa = states.concat_cols(&actions)?;
        let target_tensor = Tensor::from_values(targets, &[m])?;
        let mut critic_loss_total = 0.0;
        for i in 0..2 {
            let q = self.critics[i].forward(&sa, &mut bind)?;
            let loss = q.sub(&target_tensor)?.square().mean();
            loss.backward()?;
            let grads: Vec<Option<Vec<f64>>> =
                self.critics[i].params().iter().map(|p| bind.grad(p)).collect();
            self.critic_opts[i].step(&mut self.critics[i].params_mut(), &grads);
            critic_loss_total += loss.item();
        }

        // Actor ascends the minimum critic with entropy regularization.
        let actor_tape = Tape::new();
        let mut actor_bind = Binder::tracked(&actor_tape);
        let actor_noise = normal_block(&mut self.streams.actor, m * action_dim);
        let (new_actions, log_probs) = self.actor.sample(&states, &actor_noise, &mut actor_bind)?;
        let sa_pi = states.concat_cols(&new_actions)?;
        let mut critic_frozen = Binder::frozen();
        let q1_pi = self.critics[0].forward(&sa_pi, &mut critic_frozen)?;
        let q2_pi = self.critics[1].forward(&sa_pi, &mut critic_frozen)?;
        let q_min = q1_pi.minimum(&q2_pi)?;
        let entropy_coef = if cfg.entropy_in_policy_loss { cfg.entropy_coef } else { 0.0 };
        let actor_loss = policy_improvement_loss(&log_probs, &q_min, entropy_coef)?;
        actor_loss.backward()?;
        let actor_grads: Vec<Option<Vec<f64>>> =
            self.actor.params().iter().map(|p| actor_bind.grad(p)).collect();
        self.actor_opt.step(&mut self.actor.params_mut(), &actor_grads);

        for i in 0..2 {
            polyak_update(
                &mut self.targets[i].params_mut(),
                &self.critics[i].params(),
                self.config.polyak_rate,
            )?;
        }

        Ok(UpdateReport {
            critic_loss: critic_loss_total / 2.0,
            actor_loss: actor_loss.item(),
            kl: 0.0,
            variance: 0.0,
        })
    }
}

impl Agent for SacAgent {
    fn train_step(&mut self, env: &mut dyn Env) -> Result<StepReport> {
        let obs = match self.current_obs.take() {
            Some(obs) => obs,
            None => env.reset(&mut self.streams.env),
        };

        let action = if self.in_warmup() {
            uniform_action(env.spec(), &mut self.streams.actor)
        } else {
            let states = Tensor::from_values(obs.clone(), &[1, obs.len()])?;
            let noise = normal_block(&mut self.streams.actor, self.actor.action_dim());
            let mut bind = Binder::frozen();
            let (action, _) = self.actor.sample(&states, &noise, &mut bind)?;
            action.values().to_vec()
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
        params.extend(self.critics[0].params());
        params.extend(self.critics[1].params());
        params
    }
}

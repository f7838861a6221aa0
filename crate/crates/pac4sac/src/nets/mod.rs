//! Actor and critic architectures.
//!
//! Both networks share a three-block trunk of (linear, layer-norm, silu)
//! layers, 256 units wide. The actor ends in a squashed-Gaussian head that
//! emits bounded actions with an exact log-density; the critic ends either in
//! a plain linear head (SAC baseline) or in a layer whose weights follow
//! independent normal posteriors (randomized critic).

pub mod checkpoint;

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::diffmath::{Tape, Tensor};
use crate::error::{Error, Result};

/// Trunk width from the reference architecture.
pub const DEFAULT_HIDDEN: usize = 256;

/// Actor head log-std clamp interval; the usual stabilizer for
/// squashed-Gaussian policies.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Additive constant inside the squash-correction log, avoiding -inf at
/// action saturation.
pub const SQUASH_EPS: f64 = 1e-6;

const LN_2PI: f64 = 1.837877066409345483560659472811235279723;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(0);

/// A named trainable buffer. The value lives behind `Rc` so binding it to a
/// tape or snapshotting it for inference never copies the data.
#[derive(Clone)]
pub struct Param {
    id: u64,
    name: String,
    shape: Vec<usize>,
    value: Rc<Vec<f64>>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Param {
        assert_eq!(value.len(), shape.iter().product::<usize>(), "param shape mismatch");
        Param {
            id: NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            shape: shape.to_vec(),
            value: Rc::new(value),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.value
    }

    pub fn data_mut(&mut self) -> &mut Vec<f64> {
        Rc::make_mut(&mut self.value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Binds parameters into a forward pass: either as tracked tape leaves
/// (training) or as detached constants (inference, frozen critics). Binding
/// the same parameter twice returns the same tensor, so gradient
/// contributions from repeated use accumulate in one place.
pub struct Binder<'t> {
    tape: Option<&'t Tape>,
    cache: HashMap<u64, Tensor>,
}

impl<'t> Binder<'t> {
    pub fn tracked(tape: &'t Tape) -> Binder<'t> {
        Binder { tape: Some(tape), cache: HashMap::new() }
    }

    pub fn frozen() -> Binder<'static> {
        Binder { tape: None, cache: HashMap::new() }
    }

    pub fn bind(&mut self, param: &Param) -> Tensor {
        if let Some(t) = self.cache.get(&param.id) {
            return t.clone();
        }
        let tensor = match self.tape {
            Some(tape) => tape
                .leaf_shared(param.value.clone(), &param.shape)
                .expect("param buffer matches its shape"),
            None => Tensor::from_shared(param.value.clone(), &param.shape)
                .expect("param buffer matches its shape"),
        };
        self.cache.insert(param.id, tensor.clone());
        tensor
    }

    /// Gradient accumulated for `param` on this binder's tape.
    pub fn grad(&self, param: &Param) -> Option<Vec<f64>> {
        self.cache.get(&param.id).and_then(|t| t.grad())
    }
}

fn fan_in_uniform(rng: &mut impl Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Fully connected layer, weight `[in×out]` applied as `x·W + b`.
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            weight: Param::new(
                format!("{name}.weight"),
                &[in_dim, out_dim],
                fan_in_uniform(rng, in_dim, in_dim * out_dim),
            ),
            bias: Param::new(format!("{name}.bias"), &[out_dim], fan_in_uniform(rng, in_dim, out_dim)),
        }
    }

    pub fn forward(&self, x: &Tensor, bind: &mut Binder) -> Result<Tensor> {
        x.matmul(&bind.bind(&self.weight))?.add_row(&bind.bind(&self.bias))
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Layer normalization with learned gain and bias.
pub struct LayerNorm {
    pub gain: Param,
    pub bias: Param,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(name: &str, width: usize) -> LayerNorm {
        LayerNorm {
            gain: Param::new(format!("{name}.gain"), &[width], vec![1.0; width]),
            bias: Param::new(format!("{name}.bias"), &[width], vec![0.0; width]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor, bind: &mut Binder) -> Result<Tensor> {
        x.layer_norm(self.eps)?.mul_row(&bind.bind(&self.gain))?.add_row(&bind.bind(&self.bias))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gain, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gain, &mut self.bias]
    }
}

/// Three blocks of (linear, layer-norm, silu).
pub struct MlpTrunk {
    blocks: Vec<(Linear, LayerNorm)>,
}

impl MlpTrunk {
    pub fn new(rng: &mut impl Rng, name: &str, in_dim: usize, hidden: usize) -> MlpTrunk {
        let mut blocks = Vec::with_capacity(3);
        let mut width = in_dim;
        for i in 0..3 {
            let linear = Linear::new(rng, &format!("{name}.block{i}.linear"), width, hidden);
            let norm = LayerNorm::new(&format!("{name}.block{i}.norm"), hidden);
            blocks.push((linear, norm));
            width = hidden;
        }
        MlpTrunk { blocks }
    }

    pub fn forward(&self, x: &Tensor, bind: &mut Binder) -> Result<Tensor> {
        let mut h = x.clone();
        for (linear, norm) in &self.blocks {
            h = norm.forward(&linear.forward(&h, bind)?, bind)?.silu();
        }
        Ok(h)
    }

    fn params(&self) -> Vec<&Param> {
        self.blocks
            .iter()
            .flat_map(|(l, n)| l.params().into_iter().chain(n.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks
            .iter_mut()
            .flat_map(|(l, n)| l.params_mut().into_iter().chain(n.params_mut()))
            .collect()
    }
}

/// Actor: trunk plus a `[hidden → 2·d_a]` head read as (mean, log-std), with
/// a tanh squash mapped onto the environment's action box.
pub struct SquashedGaussianPolicy {
    trunk: MlpTrunk,
    pub head: Linear,
    action_dim: usize,
    action_scale: Vec<f64>,
    action_offset: Vec<f64>,
}

impl SquashedGaussianPolicy {
    pub fn new(
        rng: &mut impl Rng,
        state_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        hidden: usize,
    ) -> SquashedGaussianPolicy {
        assert_eq!(action_low.len(), action_high.len());
        let action_dim = action_low.len();
        SquashedGaussianPolicy {
            trunk: MlpTrunk::new(rng, "actor.trunk", state_dim, hidden),
            head: Linear::new(rng, "actor.head", hidden, 2 * action_dim),
            action_dim,
            action_scale: action_low
                .iter()
                .zip(action_high)
                .map(|(lo, hi)| (hi - lo) / 2.0)
                .collect(),
            action_offset: action_low
                .iter()
                .zip(action_high)
                .map(|(lo, hi)| (hi + lo) / 2.0)
                .collect(),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Head outputs before squashing: per-row mean and clamped log-std.
    pub fn distribution_params(&self, states: &Tensor, bind: &mut Binder) -> Result<(Tensor, Tensor)> {
        let h = self.trunk.forward(states, bind)?;
        let out = self.head.forward(&h, bind)?;
        let mean = out.narrow_cols(0, self.action_dim)?;
        let log_std = out.narrow_cols(self.action_dim, self.action_dim)?.clamp(LOG_STD_MIN, LOG_STD_MAX);
        Ok((mean, log_std))
    }

    /// Reparameterized sample: `u = mean + std·noise`, `action =
    /// scale·tanh(u) + offset`, with the exact squashed log-density. `noise`
    /// is a `[batch·d_a]` standard-normal block drawn by the caller.
    pub fn sample(
        &self,
        states: &Tensor,
        noise: &[f64],
        bind: &mut Binder,
    ) -> Result<(Tensor, Tensor)> {
        let batch = states.shape()[0];
        if noise.len() != batch * self.action_dim {
            return Err(Error::Contract(format!(
                "noise block of length {} does not match batch {batch} × action dim {}",
                noise.len(),
                self.action_dim
            )));
        }
        let (mean, log_std) = self.distribution_params(states, bind)?;
        let std = log_std.exp();
        let eps = Tensor::from_values(noise.to_vec(), &[batch, self.action_dim])?;
        let u = mean.add(&std.mul(&eps)?)?;
        let tanh_u = u.tanh();

        let scale = Tensor::from_values(self.action_scale.clone(), &[self.action_dim])?;
        let offset = Tensor::from_values(self.action_offset.clone(), &[self.action_dim])?;
        let action = tanh_u.mul_row(&scale)?.add_row(&offset)?;

        // Gaussian log-density of u. With u = mean + std·eps the quadratic
        // term reduces to -eps²/2, leaving the tracked -log_std.
        let gauss = eps.square().scale(-0.5).sub(&log_std)?.add_scalar(-0.5 * LN_2PI);
        // Change-of-variables correction for the squash.
        let one_minus_t2 = tanh_u.square().scale(-1.0).add_scalar(1.0);
        let correction = one_minus_t2.mul_row(&scale)?.add_scalar(SQUASH_EPS).log()?;
        let log_prob = gauss.sub(&correction)?.row_sum()?;
        Ok((action, log_prob))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.trunk.params();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}

/// Fully connected output layer whose weights follow independent normal
/// posteriors with a zero-mean normal prior of std `prior_std`.
pub struct GaussianLinearLayer {
    pub weight_mean: Param,
    pub weight_log_std: Param,
    pub bias_mean: Param,
    pub bias_log_std: Param,
    prior_std: f64,
    in_dim: usize,
}

/// Initial posterior log-std: near-deterministic output, small initial KL.
const INIT_LOG_STD: f64 = -5.0;

impl GaussianLinearLayer {
    pub fn new(rng: &mut impl Rng, name: &str, in_dim: usize, prior_std: f64) -> GaussianLinearLayer {
        assert!(prior_std > 0.0, "prior std must be positive");
        GaussianLinearLayer {
            weight_mean: Param::new(
                format!("{name}.weight_mean"),
                &[in_dim, 1],
                fan_in_uniform(rng, in_dim, in_dim),
            ),
            weight_log_std: Param::new(
                format!("{name}.weight_log_std"),
                &[in_dim, 1],
                vec![INIT_LOG_STD; in_dim],
            ),
            bias_mean: Param::new(format!("{name}.bias_mean"), &[1], fan_in_uniform(rng, in_dim, 1)),
            bias_log_std: Param::new(format!("{name}.bias_log_std"), &[1], vec![INIT_LOG_STD]),
            prior_std,
            in_dim,
        }
    }

    /// Number of standard-normal draws one weight sample consumes.
    pub fn noise_len(&self) -> usize {
        self.in_dim + 1
    }

    /// Forward with the posterior means as the weights.
    pub fn forward_mean(&self, h: &Tensor, bind: &mut Binder) -> Result<Tensor> {
        let batch = h.shape()[0];
        h.matmul(&bind.bind(&self.weight_mean))?
            .add_row(&bind.bind(&self.bias_mean).reshape(&[1])?)?
            .reshape(&[batch])
    }

    /// Forward with one reparameterized weight draw per batch row. `noise` is
    /// a `[batch·(in+1)]` standard-normal block: `in` weight draws plus one
    /// bias draw per row.
    pub fn forward_sampled(&self, h: &Tensor, noise: &[f64], bind: &mut Binder) -> Result<Tensor> {
        let batch = h.shape()[0];
        if noise.len() != batch * self.noise_len() {
            return Err(Error::Contract(format!(
                "noise block of length {} does not match batch {batch} × weight count {}",
                noise.len(),
                self.noise_len()
            )));
        }
        let mut weight_noise = Vec::with_capacity(batch * self.in_dim);
        let mut bias_noise = Vec::with_capacity(batch);
        for row in noise.chunks(self.noise_len()) {
            weight_noise.extend_from_slice(&row[..self.in_dim]);
            bias_noise.push(row[self.in_dim]);
        }
        let eps_w = Tensor::from_values(weight_noise, &[batch, self.in_dim])?;
        let eps_b = Tensor::from_values(bias_noise, &[batch, 1])?;

        let base = h.matmul(&bind.bind(&self.weight_mean))?;
        let w_std = bind.bind(&self.weight_log_std).reshape(&[self.in_dim])?.exp();
        let w_noise_term =
            h.mul(&eps_w)?.mul_row(&w_std)?.row_sum()?.reshape(&[batch, 1])?;
        let b_std = bind.bind(&self.bias_log_std).exp().reshape(&[1])?;
        let b_noise_term = eps_b.mul_row(&b_std)?;

        base.add(&w_noise_term)?
            .add_row(&bind.bind(&self.bias_mean).reshape(&[1])?)?
            .add(&b_noise_term)?
            .reshape(&[batch])
    }

    /// Closed-form KL from the diagonal-Gaussian posterior to the prior:
    /// per weight `log(σ₀/σ) + (σ² + μ²)/(2σ₀²) − 1/2`.
    pub fn kl_to_prior(&self, bind: &mut Binder) -> Result<Tensor> {
        let half_inv_var = 1.0 / (2.0 * self.prior_std * self.prior_std);
        let mut total: Option<Tensor> = None;
        for (mean, log_std) in [
            (&self.weight_mean, &self.weight_log_std),
            (&self.bias_mean, &self.bias_log_std),
        ] {
            let count = mean.len() as f64;
            let mu = bind.bind(mean);
            let ls = bind.bind(log_std);
            let part = ls
                .sum()
                .scale(-1.0)
                .add(&ls.scale(2.0).exp().sum().scale(half_inv_var))?
                .add(&mu.square().sum().scale(half_inv_var))?
                .add_scalar(count * (self.prior_std.ln() - 0.5));
            total = Some(match total {
                Some(t) => t.add(&part)?,
                None => part,
            });
        }
        Ok(total.expect("at least one parameter group"))
    }

    /// KL as a plain number, off-tape.
    pub fn kl_value(&self) -> f64 {
        let mut bind = Binder::frozen();
        self.kl_to_prior(&mut bind).expect("kl closed form").item()
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight_mean, &self.weight_log_std, &self.bias_mean, &self.bias_log_std]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.weight_mean,
            &mut self.weight_log_std,
            &mut self.bias_mean,
            &mut self.bias_log_std,
        ]
    }
}

/// Critic output head: plain linear for the SAC baseline, Gaussian-posterior
/// layer for the randomized critic.
pub enum CriticHead {
    Deterministic(Linear),
    Probabilistic(GaussianLinearLayer),
}

/// State-action value network over concatenated `[state, action]` rows.
pub struct CriticNet {
    trunk: MlpTrunk,
    pub head: CriticHead,
}

impl CriticNet {
    pub fn new_deterministic(
        rng: &mut impl Rng,
        name: &str,
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
    ) -> CriticNet {
        CriticNet {
            trunk: MlpTrunk::new(rng, &format!("{name}.trunk"), state_dim + action_dim, hidden),
            head: CriticHead::Deterministic(Linear::new(rng, &format!("{name}.head"), hidden, 1)),
        }
    }

    pub fn new_probabilistic(
        rng: &mut impl Rng,
        name: &str,
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        prior_std: f64,
    ) -> CriticNet {
        CriticNet {
            trunk: MlpTrunk::new(rng, &format!("{name}.trunk"), state_dim + action_dim, hidden),
            head: CriticHead::Probabilistic(GaussianLinearLayer::new(
                rng,
                &format!("{name}.head"),
                hidden,
                prior_std,
            )),
        }
    }

    /// Value prediction `[batch]` with deterministic weights (posterior means
    /// for a probabilistic head).
    pub fn forward(&self, state_action: &Tensor, bind: &mut Binder) -> Result<Tensor> {
        let h = self.trunk.forward(state_action, bind)?;
        match &self.head {
            CriticHead::Deterministic(linear) => {
                let batch = state_action.shape()[0];
                linear.forward(&h, bind)?.reshape(&[batch])
            }
            CriticHead::Probabilistic(gauss) => gauss.forward_mean(&h, bind),
        }
    }

    /// Value prediction with one posterior weight draw per batch row.
    pub fn forward_sampled(
        &self,
        state_action: &Tensor,
        noise: &[f64],
        bind: &mut Binder,
    ) -> Result<Tensor> {
        let h = self.trunk.forward(state_action, bind)?;
        match &self.head {
            CriticHead::Deterministic(_) => Err(Error::Contract(
                "sampled forward on a deterministic-head critic; use forward".into(),
            )),
            CriticHead::Probabilistic(gauss) => gauss.forward_sampled(&h, noise, bind),
        }
    }

    /// Standard-normal draws one sampled forward consumes per batch row.
    pub fn noise_len(&self) -> Result<usize> {
        match &self.head {
            CriticHead::Deterministic(_) => Err(Error::Contract(
                "deterministic-head critic has no weight posterior".into(),
            )),
            CriticHead::Probabilistic(gauss) => Ok(gauss.noise_len()),
        }
    }

    pub fn gauss_head(&self) -> Result<&GaussianLinearLayer> {
        match &self.head {
            CriticHead::Deterministic(_) => Err(Error::Contract(
                "deterministic-head critic has no weight posterior".into(),
            )),
            CriticHead::Probabilistic(gauss) => Ok(gauss),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.trunk.params();
        match &self.head {
            CriticHead::Deterministic(linear) => p.extend(linear.params()),
            CriticHead::Probabilistic(gauss) => p.extend(gauss.params()),
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.trunk.params_mut();
        match &mut self.head {
            CriticHead::Deterministic(linear) => p.extend(linear.params_mut()),
            CriticHead::Probabilistic(gauss) => p.extend(gauss.params_mut()),
        }
        p
    }
}

/// Copy every parameter value of `src` into `dst` (shapes must match).
pub fn copy_params(dst: &mut [&mut Param], src: &[&Param]) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Contract(format!(
            "parameter count mismatch: {} vs {}",
            dst.len(),
            src.len()
        )));
    }
    for (d, s) in dst.iter_mut().zip(src) {
        if d.shape() != s.shape() {
            return Err(Error::ShapeMismatch { left: d.shape().to_vec(), right: s.shape().to_vec() });
        }
        d.data_mut().copy_from_slice(s.data());
    }
    Ok(())
}

#[cfg(test)]
mod tests;

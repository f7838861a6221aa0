//! Numerical verification suites: finite-difference gradient integrity for
//! the primitives and both training losses, the value-error bound sweep, the
//! random-search policy-improvement sweep, bound monotonicity, and the
//! closed-form KL against Monte-Carlo estimation.
//!
//! These back the `verify` CLI subcommand and the acceptance test suite.
//! Failing property instances are serialized as JSON next to the report so
//! they can be replayed.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::agents::{
    pac_critic_loss, policy_improvement_loss, LossToggles,
};
use crate::boundlab::{
    check_lemma1, check_policy_improvement_r, compute_pac_bound, random_mdp, random_policy,
    BoundInputs, BoundVariant, Counterexample,
};
use crate::diffmath::gradcheck::{central_difference_at, compare};
use crate::diffmath::{Tape, Tensor};
use crate::exec;
use crate::nets::{Binder, CriticNet, SquashedGaussianPolicy};
use crate::rng::normal_block;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> CheckResult {
        CheckResult { name, passed: true, detail }
    }

    fn fail(name: &'static str, detail: String) -> CheckResult {
        CheckResult { name, passed: false, detail }
    }
}

/// Every diffmath primitive against central finite differences on random
/// inputs in [-2, 2], `instances` instances per primitive.
pub fn check_gradient_primitives(instances: usize) -> CheckResult {
    const NAME: &str = "gradient-primitives";
    type OpFn = fn(&Tensor) -> Tensor;
    let unary: &[(&str, OpFn, f64, f64)] = &[
        ("silu", |x| x.silu(), -2.0, 2.0),
        ("tanh", |x| x.tanh(), -2.0, 2.0),
        ("square", |x| x.square(), -2.0, 2.0),
        ("exp", |x| x.exp(), -2.0, 2.0),
        ("log", |x| x.log().unwrap(), 0.05, 2.0),
        ("sqrt", |x| x.sqrt().unwrap(), 0.05, 2.0),
        ("clamp", |x| x.clamp(-1.0, 1.0), -0.95, 0.95),
        ("scale", |x| x.scale(1.3), -2.0, 2.0),
        ("layer_norm", |x| x.layer_norm(1e-5).unwrap(), -2.0, 2.0),
        ("mean", |x| x.mean().reshape(&[1, 1]).unwrap(), -2.0, 2.0),
    ];
    let mut checked = 0usize;
    for seed in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for (name, op, lo, hi) in unary {
            let x_vals: Vec<f64> = (0..8).map(|_| rng.random_range(*lo..*hi)).collect();
            let w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tape = Tape::new();
            let x = tape.leaf(x_vals.clone(), &[2, 4]).unwrap();
            let out = op(&x);
            let w_t = Tensor::from_values(w[..out.len()].to_vec(), out.shape()).unwrap();
            out.mul(&w_t).unwrap().sum().backward().unwrap();
            let analytic = x.grad().unwrap();
            let mut f = |v: &[f64]| {
                let x = Tensor::from_values(v.to_vec(), &[2, 4]).unwrap();
                let out = op(&x);
                let w_t = Tensor::from_values(w[..out.len()].to_vec(), out.shape()).unwrap();
                out.mul(&w_t).unwrap().sum().item()
            };
            let numeric: Vec<f64> =
                (0..8).map(|i| central_difference_at(&mut f, &x_vals, i, 1e-5)).collect();
            if let Err(e) = compare(&analytic, &numeric, 1e-4, 1e-6) {
                return CheckResult::fail(NAME, format!("{name} (seed {seed}): {e}"));
            }
            checked += 1;
        }
        // matmul with both operands tracked.
        let a_vals: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b_vals: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tape = Tape::new();
        let a = tape.leaf(a_vals.clone(), &[3, 4]).unwrap();
        let b = tape.leaf(b_vals.clone(), &[4, 2]).unwrap();
        a.matmul(&b).unwrap().square().sum().backward().unwrap();
        let mut analytic = a.grad().unwrap();
        analytic.extend(b.grad().unwrap());
        let joint: Vec<f64> = a_vals.iter().chain(&b_vals).copied().collect();
        let mut f = |v: &[f64]| {
            let a = Tensor::from_values(v[..12].to_vec(), &[3, 4]).unwrap();
            let b = Tensor::from_values(v[12..].to_vec(), &[4, 2]).unwrap();
            a.matmul(&b).unwrap().square().sum().item()
        };
        let numeric: Vec<f64> =
            (0..20).map(|i| central_difference_at(&mut f, &joint, i, 1e-5)).collect();
        if let Err(e) = compare(&analytic, &numeric, 1e-4, 1e-6) {
            return CheckResult::fail(NAME, format!("matmul (seed {seed}): {e}"));
        }
        checked += 1;
    }
    CheckResult::pass(NAME, format!("{checked} primitive instances within tolerance"))
}

fn critic_loss_instance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut critic = CriticNet::new_probabilistic(&mut rng, "critic", 3, 1, 8, 1.0);
    // Jitter the posterior away from its near-deterministic initialization.
    for p in critic.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let m = 4;
    let sa_vals: Vec<f64> = (0..m * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = normal_block(&mut rng, m * critic.noise_len().unwrap());
    let targets: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();

    let tape = Tape::new();
    let mut bind = Binder::tracked(&tape);
    let sa = Tensor::from_values(sa_vals.clone(), &[m, 4]).unwrap();
    let q = critic.forward_sampled(&sa, &noise, &mut bind).unwrap();
    let kl = critic.gauss_head().unwrap().kl_to_prior(&mut bind).unwrap();
    pac_critic_loss(&q, &targets, &kl, 256, 0.99, 0.01, LossToggles::default())
        .map_err(|e| e.to_string())?
        .backward()
        .map_err(|e| e.to_string())?;

    let param_count = critic.params().len();
    for pi in 0..param_count {
        let analytic = bind.grad(critic.params()[pi]).unwrap();
        let orig = critic.params()[pi].data().to_vec();
        let stride = (orig.len() / 6).max(1);
        let indices: Vec<usize> = (0..orig.len()).step_by(stride).collect();
        let mut f = |w: &[f64]| {
            critic.params_mut()[pi].data_mut().copy_from_slice(w);
            let mut bind = Binder::frozen();
            let sa = Tensor::from_values(sa_vals.clone(), &[m, 4]).unwrap();
            let q = critic.forward_sampled(&sa, &noise, &mut bind).unwrap();
            let kl = critic.gauss_head().unwrap().kl_to_prior(&mut bind).unwrap();
            pac_critic_loss(&q, &targets, &kl, 256, 0.99, 0.01, LossToggles::default())
                .unwrap()
                .item()
        };
        let numeric: Vec<f64> =
            indices.iter().map(|&i| central_difference_at(&mut f, &orig, i, 1e-5)).collect();
        critic.params_mut()[pi].data_mut().copy_from_slice(&orig);
        let picked: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
        let name = critic.params()[pi].name().to_string();
        compare(&picked, &numeric, 1e-3, 1e-7).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(())
}

/// Full critic loss (data fit + complexity + correction) against finite
/// differences on `instances` random instances.
pub fn check_critic_loss_gradients(instances: usize) -> CheckResult {
    const NAME: &str = "gradient-critic-loss";
    let failures: Vec<String> = exec::map((0..instances as u64).collect(), |seed| {
        critic_loss_instance(2000 + seed).err().map(|e| format!("instance {seed}: {e}"))
    })
    .into_iter()
    .flatten()
    .collect();
    if failures.is_empty() {
        CheckResult::pass(NAME, format!("{instances} instances within 1e-3"))
    } else {
        CheckResult::fail(NAME, failures.join("; "))
    }
}

fn policy_loss_instance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = SquashedGaussianPolicy::new(&mut rng, 3, &[-2.0], &[2.0], 8);
    let critic = CriticNet::new_probabilistic(&mut rng, "critic", 3, 1, 8, 1.0);
    let m = 4;
    let state_vals: Vec<f64> = (0..m * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let actor_noise = normal_block(&mut rng, m);
    let critic_noise = normal_block(&mut rng, m * critic.noise_len().unwrap());
    let alpha = 0.2;

    let tape = Tape::new();
    let mut bind = Binder::tracked(&tape);
    let states = Tensor::from_values(state_vals.clone(), &[m, 3]).unwrap();
    let (actions, log_probs) = policy.sample(&states, &actor_noise, &mut bind).unwrap();
    let mut frozen = Binder::frozen();
    let q = critic
        .forward_sampled(&states.concat_cols(&actions).unwrap(), &critic_noise, &mut frozen)
        .unwrap();
    policy_improvement_loss(&log_probs, &q, alpha)
        .map_err(|e| e.to_string())?
        .backward()
        .map_err(|e| e.to_string())?;

    let param_count = policy.params().len();
    for pi in 0..param_count {
        let analytic = bind.grad(policy.params()[pi]).unwrap();
        let orig = policy.params()[pi].data().to_vec();
        let stride = (orig.len() / 6).max(1);
        let indices: Vec<usize> = (0..orig.len()).step_by(stride).collect();
        let mut f = |w: &[f64]| {
            policy.params_mut()[pi].data_mut().copy_from_slice(w);
            let mut bind = Binder::frozen();
            let states = Tensor::from_values(state_vals.clone(), &[m, 3]).unwrap();
            let (actions, log_probs) = policy.sample(&states, &actor_noise, &mut bind).unwrap();
            let q = critic
                .forward_sampled(&states.concat_cols(&actions).unwrap(), &critic_noise, &mut bind)
                .unwrap();
            policy_improvement_loss(&log_probs, &q, alpha).unwrap().item()
        };
        let numeric: Vec<f64> =
            indices.iter().map(|&i| central_difference_at(&mut f, &orig, i, 1e-5)).collect();
        policy.params_mut()[pi].data_mut().copy_from_slice(&orig);
        let picked: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
        let name = policy.params()[pi].name().to_string();
        compare(&picked, &numeric, 1e-3, 1e-7).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(())
}

/// Policy-improvement loss against finite differences on `instances` random
/// instances.
pub fn check_policy_loss_gradients(instances: usize) -> CheckResult {
    const NAME: &str = "gradient-policy-loss";
    let failures: Vec<String> = exec::map((0..instances as u64).collect(), |seed| {
        policy_loss_instance(3000 + seed).err().map(|e| format!("instance {seed}: {e}"))
    })
    .into_iter()
    .flatten()
    .collect();
    if failures.is_empty() {
        CheckResult::pass(NAME, format!("{instances} instances within 1e-3"))
    } else {
        CheckResult::fail(NAME, failures.join("; "))
    }
}

/// Value-error bound on `instances` random MDPs and Q tables; any violation
/// is dumped as a JSON counterexample under `artifact_dir`.
pub fn check_lemma1_sweep(instances: usize, artifact_dir: Option<&Path>) -> CheckResult {
    const NAME: &str = "lemma1-sweep";
    let outcomes = exec::map((0..instances as u64).collect(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let mdp = random_mdp(&mut rng, 6, 3, &[0.5, 0.9, 0.95]);
        let policy = random_policy(&mut rng, mdp.n_states, mdp.n_actions);
        let q_hat: Vec<f64> = (0..mdp.n_states * mdp.n_actions)
            .map(|_| rng.random_range(-10.0..10.0))
            .collect();
        let alpha = rng.random_range(0.0..0.5);
        let report = check_lemma1(&mdp, &policy, &q_hat, alpha).expect("valid instance");
        (seed, mdp, policy, q_hat, report)
    });
    let mut violations = 0usize;
    let mut first_detail = String::new();
    for (seed, mdp, policy, q_hat, report) in outcomes {
        if !report.holds {
            violations += 1;
            if violations == 1 {
                first_detail =
                    format!("seed {seed}: lhs {} > rhs {}", report.lhs, report.rhs);
                if let Some(dir) = artifact_dir {
                    let example = Counterexample {
                        context: format!("{NAME}: lhs {} rhs {}", report.lhs, report.rhs),
                        seed,
                        mdp,
                        policy,
                        extra: serde_json::json!({ "q_hat": q_hat }),
                    };
                    let _ = example.dump(&dir.join(format!("lemma1_seed{seed}.json")));
                }
            }
        }
    }
    if violations == 0 {
        CheckResult::pass(NAME, format!("{instances} instances, 0 violations"))
    } else {
        CheckResult::fail(NAME, format!("{violations} violations; first: {first_detail}"))
    }
}

/// Random-search policy improvement on `instances` random MDPs across the
/// given sample counts: per-state exact improvement plus ensemble
/// monotonicity of the mean value in R.
pub fn check_policy_improvement_sweep(
    instances: usize,
    r_values: &[usize],
    artifact_dir: Option<&Path>,
) -> CheckResult {
    const NAME: &str = "policy-improvement";
    let per_instance = exec::map((0..instances as u64).collect(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let mdp = random_mdp(&mut rng, 6, 3, &[0.5, 0.9, 0.95]);
        let policy = random_policy(&mut rng, mdp.n_states, mdp.n_actions);
        let mut means = Vec::with_capacity(r_values.len());
        let mut worst_gap = f64::INFINITY;
        for &r in r_values {
            let report =
                check_policy_improvement_r(&mdp, &policy, r, 2, &mut rng).expect("valid instance");
            worst_gap = worst_gap.min(report.min_gap);
            means.push(
                report.search_values.iter().sum::<f64>() / report.search_values.len() as f64,
            );
        }
        (seed, mdp, policy, worst_gap, means)
    });

    let mut violations = 0usize;
    let mut first_detail = String::new();
    let mut ensemble = vec![0.0; r_values.len()];
    for (seed, mdp, policy, worst_gap, means) in &per_instance {
        if *worst_gap < -1e-9 {
            violations += 1;
            if violations == 1 {
                first_detail = format!("seed {seed}: min gap {worst_gap}");
                if let Some(dir) = artifact_dir {
                    let example = Counterexample {
                        context: format!("{NAME}: min gap {worst_gap}"),
                        seed: *seed,
                        mdp: mdp.clone(),
                        policy: policy.clone(),
                        extra: serde_json::json!({ "r_values": r_values }),
                    };
                    let _ = example.dump(&dir.join(format!("improvement_seed{seed}.json")));
                }
            }
        }
        for (acc, m) in ensemble.iter_mut().zip(means) {
            *acc += m / instances as f64;
        }
    }
    for window in ensemble.windows(2) {
        if window[1] < window[0] - 1e-9 {
            violations += 1;
            first_detail = format!("ensemble mean decreased across R: {ensemble:?}");
        }
    }
    if violations == 0 {
        CheckResult::pass(
            NAME,
            format!(
                "{instances} MDPs × R ∈ {:?}: no per-state violation, ensemble mean nondecreasing",
                r_values
            ),
        )
    } else {
        CheckResult::fail(NAME, format!("{violations} violations; first: {first_detail}"))
    }
}

/// Bound monotonicity over a grid of (kl, N, δ) points plus the frozen
/// regression value.
pub fn check_bound_behavior() -> CheckResult {
    const NAME: &str = "bound-behavior";
    let baseline = BoundInputs {
        empirical_risk: 0.0,
        kl: 5.0,
        n: 10_000,
        reward_min: 0.0,
        reward_max: 1.0,
        delta: 0.05,
        c1: 1.0,
        c2: 1.0,
        q_max: None,
        correction: 0.0,
    };
    let expected = 0.041482277450584437_f64;
    let frozen = compute_pac_bound(&baseline, BoundVariant::Appendix).expect("baseline valid");
    if (frozen.complexity_term - expected).abs() > 1e-12 {
        return CheckResult::fail(
            NAME,
            format!("frozen regression value {} != {expected}", frozen.complexity_term),
        );
    }

    let kls: Vec<f64> = (0..10).map(|i| 0.5 + 3.0 * i as f64).collect();
    let ns: Vec<usize> = (0..10).map(|i| 200 + 4000 * i).collect();
    let deltas: Vec<f64> = (1..11).map(|i| i as f64 * 0.09).collect();
    let mut points = 0usize;
    for &kl in &kls {
        for &n in &ns {
            let mut previous = f64::INFINITY;
            for &delta in &deltas {
                let inputs = BoundInputs { kl, n, delta, ..baseline.clone() };
                let term = match compute_pac_bound(&inputs, BoundVariant::Appendix) {
                    Ok(b) => b.complexity_term,
                    Err(e) => return CheckResult::fail(NAME, format!("grid point failed: {e}")),
                };
                // Larger delta must give a strictly smaller bound.
                if term >= previous {
                    return CheckResult::fail(
                        NAME,
                        format!("not decreasing in delta at kl={kl}, n={n}, delta={delta}"),
                    );
                }
                previous = term;
                points += 1;
            }
        }
    }
    // Monotone in kl and in N along the grid axes.
    for &n in &ns {
        let mut previous = f64::NEG_INFINITY;
        for &kl in &kls {
            let inputs = BoundInputs { kl, n, ..baseline.clone() };
            let term = compute_pac_bound(&inputs, BoundVariant::Appendix)
                .expect("grid point valid")
                .complexity_term;
            if term <= previous {
                return CheckResult::fail(NAME, format!("not increasing in kl at n={n}"));
            }
            previous = term;
        }
    }
    for &kl in &kls {
        let mut previous = f64::INFINITY;
        for &n in &ns {
            let inputs = BoundInputs { kl, n, ..baseline.clone() };
            let term = compute_pac_bound(&inputs, BoundVariant::Appendix)
                .expect("grid point valid")
                .complexity_term;
            if term >= previous {
                return CheckResult::fail(NAME, format!("not decreasing in N at kl={kl}"));
            }
            previous = term;
        }
    }
    CheckResult::pass(NAME, format!("{points} grid points monotone; frozen value reproduced"))
}

/// Closed-form KL against a Monte-Carlo estimate on random posteriors.
pub fn check_kl_monte_carlo(posteriors: usize, samples: usize) -> CheckResult {
    const NAME: &str = "kl-closed-form";
    let worst: Vec<f64> = exec::map((0..posteriors as u64).collect(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        let prior_std = rng.random_range(0.5..2.0);
        let mut layer =
            crate::nets::GaussianLinearLayer::new(&mut rng, "head", 24, prior_std);
        for v in layer.weight_mean.data_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        for v in layer.weight_log_std.data_mut() {
            *v = rng.random_range(-1.5..0.5);
        }
        let closed = layer.kl_value();

        let mus: Vec<f64> = layer
            .weight_mean
            .data()
            .iter()
            .chain(layer.bias_mean.data())
            .copied()
            .collect();
        let sigmas: Vec<f64> = layer
            .weight_log_std
            .data()
            .iter()
            .chain(layer.bias_log_std.data())
            .map(|ls| ls.exp())
            .collect();
        let mut total = 0.0;
        for _ in 0..samples {
            let mut log_ratio = 0.0;
            for (mu, sigma) in mus.iter().zip(&sigmas) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let theta = mu + sigma * eps;
                log_ratio += -0.5 * eps * eps - sigma.ln()
                    + prior_std.ln()
                    + 0.5 * theta * theta / (prior_std * prior_std);
            }
            total += log_ratio;
        }
        let mc = total / samples as f64;
        (mc - closed).abs() / closed.abs().max(1.0)
    });
    let max_rel = worst.into_iter().fold(0.0f64, f64::max);
    if max_rel <= 0.01 {
        CheckResult::pass(
            NAME,
            format!("{posteriors} posteriors × {samples} samples, max relative error {max_rel:.5}"),
        )
    } else {
        CheckResult::fail(NAME, format!("max relative error {max_rel:.5} exceeds 1%"))
    }
}

/// The full verification battery at CLI scale.
pub fn run_all(artifact_dir: Option<&Path>) -> Vec<CheckResult> {
    vec![
        check_gradient_primitives(20),
        check_critic_loss_gradients(20),
        check_policy_loss_gradients(20),
        check_lemma1_sweep(500, artifact_dir),
        check_policy_improvement_sweep(100, &[1, 2, 8, 32], artifact_dir),
        check_bound_behavior(),
        check_kl_monte_carlo(10, 1_000_000),
    ]
}

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::diffmath::gradcheck::{central_difference_at, compare};
use crate::diffmath::Tape;

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
}

fn normal_block(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn pendulum_like_policy(rng: &mut ChaCha8Rng, hidden: usize) -> SquashedGaussianPolicy {
    SquashedGaussianPolicy::new(rng, 3, &[-2.0], &[2.0], hidden)
}

#[test]
fn zero_noise_zero_mean_head_gives_offset_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut policy = SquashedGaussianPolicy::new(&mut rng, 3, &[-1.0], &[3.0], 16);
    // Zero the head so mean = 0 and log-std = 0 for every state.
    for p in policy.head.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let states = Tensor::from_values(vec![0.3, -0.2, 0.9], &[1, 3]).unwrap();
    let mut bind = Binder::frozen();
    let (action, log_prob) = policy.sample(&states, &[0.0], &mut bind).unwrap();
    // Box [-1, 3]: scale 2, offset 1.
    assert_close(action.values()[0], 1.0, 1e-12);
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - (2.0f64 + 1e-6).ln();
    assert_close(log_prob.values()[0], expected, 1e-12);
}

#[test]
fn squashed_density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let policy = pendulum_like_policy(&mut rng, 16);
    let states = Tensor::from_values(vec![0.5, -0.1, 0.2], &[1, 3]).unwrap();
    let mut bind = Binder::frozen();
    let (mean, log_std) = policy.distribution_params(&states, &mut bind).unwrap();
    let (mu, sigma) = (mean.values()[0], log_std.values()[0].exp());

    // Uniform Monte-Carlo estimate of the density integral over the box.
    let (lo, hi, scale) = (-2.0, 2.0, 2.0);
    let n = 100_000;
    let mut total = 0.0;
    for _ in 0..n {
        let a: f64 = rng.random_range(lo..hi);
        let t = a / scale;
        let u = t.atanh();
        let log_gauss =
            -0.5 * ((u - mu) / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let log_corr = (scale * (1.0 - t * t) + SQUASH_EPS).ln();
        total += (log_gauss - log_corr).exp();
    }
    let integral = (hi - lo) * total / n as f64;
    assert!(
        (0.98..=1.02).contains(&integral),
        "density integral {integral} outside [0.98, 1.02]"
    );
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut policy = pendulum_like_policy(&mut rng, 8);
    let state_vals = vec![0.4, -0.7, 1.1, 0.0, 0.3, -0.2];
    let noise = normal_block(&mut rng, 2);

    let tape = Tape::new();
    let mut bind = Binder::tracked(&tape);
    let states = Tensor::from_values(state_vals.clone(), &[2, 3]).unwrap();
    let (_, log_prob) = policy.sample(&states, &noise, &mut bind).unwrap();
    log_prob.sum().backward().unwrap();

    let head_weight = policy.head.weight.data().to_vec();
    let analytic = bind.grad(&policy.head.weight).unwrap();

    let mut f = |w: &[f64]| {
        policy.head.weight.data_mut().copy_from_slice(w);
        let mut bind = Binder::frozen();
        let states = Tensor::from_values(state_vals.clone(), &[2, 3]).unwrap();
        let (_, log_prob) = policy.sample(&states, &noise, &mut bind).unwrap();
        log_prob.sum().item()
    };
    let indices: Vec<usize> = (0..head_weight.len()).step_by(3).collect();
    let numeric: Vec<f64> =
        indices.iter().map(|&i| central_difference_at(&mut f, &head_weight, i, 1e-5)).collect();
    policy.head.weight.data_mut().copy_from_slice(&head_weight);
    let picked: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
    compare(&picked, &numeric, 1e-3, 1e-7).unwrap();
}

#[test]
fn actions_stay_strictly_inside_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let policy = SquashedGaussianPolicy::new(&mut rng, 2, &[-0.5, 1.0], &[0.5, 5.0], 8);
    for _ in 0..200 {
        let states = Tensor::from_values(
            (0..2).map(|_| rng.random_range(-3.0..3.0)).collect(),
            &[1, 2],
        )
        .unwrap();
        let noise = normal_block(&mut rng, 2).iter().map(|v| v * 4.0).collect::<Vec<_>>();
        let mut bind = Binder::frozen();
        let (action, log_prob) = policy.sample(&states, &noise, &mut bind).unwrap();
        let a = action.values();
        assert!(a[0] > -0.5 && a[0] < 0.5, "action {a:?} left the box");
        assert!(a[1] > 1.0 && a[1] < 5.0, "action {a:?} left the box");
        assert!(log_prob.values()[0].is_finite());
    }
}

#[test]
fn sampled_forward_with_tiny_std_equals_mean_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut critic = CriticNet::new_probabilistic(&mut rng, "critic", 3, 1, 16, 1.0);
    if let CriticHead::Probabilistic(g) = &mut critic.head {
        g.weight_log_std.data_mut().iter_mut().for_each(|v| *v = -40.0);
        g.bias_log_std.data_mut().iter_mut().for_each(|v| *v = -40.0);
    }
    let sa = Tensor::from_values(normal_block(&mut rng, 8), &[2, 4]).unwrap();
    let noise = normal_block(&mut rng, 2 * critic.noise_len().unwrap());
    let mut bind = Binder::frozen();
    let sampled = critic.forward_sampled(&sa, &noise, &mut bind).unwrap();
    let mean = critic.forward(&sa, &mut bind).unwrap();
    for (s, m) in sampled.values().iter().zip(mean.values()) {
        assert_close(*s, *m, 1e-12);
    }
}

#[test]
fn sampled_forward_is_deterministic_given_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let critic = CriticNet::new_probabilistic(&mut rng, "critic", 3, 1, 16, 1.0);
    let sa = Tensor::from_values(normal_block(&mut rng, 12), &[3, 4]).unwrap();
    let noise = normal_block(&mut rng, 3 * critic.noise_len().unwrap());
    let mut bind = Binder::frozen();
    let a = critic.forward_sampled(&sa, &noise, &mut bind).unwrap();
    let b = critic.forward_sampled(&sa, &noise, &mut bind).unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn sampled_forward_rejects_deterministic_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let critic = CriticNet::new_deterministic(&mut rng, "critic", 3, 1, 16);
    let sa = Tensor::from_values(vec![0.0; 4], &[1, 4]).unwrap();
    let mut bind = Binder::frozen();
    assert!(matches!(
        critic.forward_sampled(&sa, &[0.0; 17], &mut bind),
        Err(crate::Error::Contract(_))
    ));
}

#[test]
fn sampled_forward_monte_carlo_mean_matches_mean_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut critic = CriticNet::new_probabilistic(&mut rng, "critic", 3, 1, 16, 1.0);
    if let CriticHead::Probabilistic(g) = &mut critic.head {
        // Moderate posterior spread so the Monte-Carlo error is visible.
        g.weight_log_std.data_mut().iter_mut().for_each(|v| *v = -1.0);
        g.bias_log_std.data_mut().iter_mut().for_each(|v| *v = -1.0);
    }
    let sa = Tensor::from_values(vec![0.4, -0.3, 0.8, 0.1], &[1, 4]).unwrap();
    let mut bind = Binder::frozen();
    let reference = critic.forward(&sa, &mut bind).unwrap().item();

    let n = 10_000;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let noise = normal_block(&mut rng, critic.noise_len().unwrap());
        samples.push(critic.forward_sampled(&sa, &noise, &mut bind).unwrap().item());
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    assert!(
        (mean - reference).abs() <= 3.0 * stderr,
        "MC mean {mean} vs reference {reference} exceeds 3 standard errors ({stderr})"
    );
}

#[test]
fn critic_sample_gradients_flow_to_posterior_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut critic = CriticNet::new_probabilistic(&mut rng, "critic", 2, 1, 8, 1.0);
    let sa_vals = normal_block(&mut rng, 6);
    let noise = normal_block(&mut rng, 2 * critic.noise_len().unwrap());

    let tape = Tape::new();
    let mut bind = Binder::tracked(&tape);
    let sa = Tensor::from_values(sa_vals.clone(), &[2, 3]).unwrap();
    critic.forward_sampled(&sa, &noise, &mut bind).unwrap().sum().backward().unwrap();

    for which in ["mean", "log_std"] {
        let (orig, analytic) = {
            let g = critic.gauss_head().unwrap();
            let p = if which == "mean" { &g.weight_mean } else { &g.weight_log_std };
            (p.data().to_vec(), bind.grad(p).unwrap())
        };
        let mut f = |w: &[f64]| {
            if let CriticHead::Probabilistic(g) = &mut critic.head {
                let p = if which == "mean" { &mut g.weight_mean } else { &mut g.weight_log_std };
                p.data_mut().copy_from_slice(w);
            }
            let mut bind = Binder::frozen();
            let sa = Tensor::from_values(sa_vals.clone(), &[2, 3]).unwrap();
            critic.forward_sampled(&sa, &noise, &mut bind).unwrap().sum().item()
        };
        let numeric: Vec<f64> =
            (0..orig.len()).map(|i| central_difference_at(&mut f, &orig, i, 1e-5)).collect();
        if let CriticHead::Probabilistic(g) = &mut critic.head {
            let p = if which == "mean" { &mut g.weight_mean } else { &mut g.weight_log_std };
            p.data_mut().copy_from_slice(&orig);
        }
        compare(&analytic, &numeric, 1e-4, 1e-7).unwrap_or_else(|e| panic!("{which}: {e}"));
    }
}

#[test]
fn kl_is_zero_exactly_at_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let prior_std = 0.7;
    let mut layer = GaussianLinearLayer::new(&mut rng, "head", 16, prior_std);
    layer.weight_mean.data_mut().iter_mut().for_each(|v| *v = 0.0);
    layer.bias_mean.data_mut().iter_mut().for_each(|v| *v = 0.0);
    layer.weight_log_std.data_mut().iter_mut().for_each(|v| *v = prior_std.ln());
    layer.bias_log_std.data_mut().iter_mut().for_each(|v| *v = prior_std.ln());
    assert_close(layer.kl_value(), 0.0, 1e-12);
}

#[test]
fn kl_single_weight_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut layer = GaussianLinearLayer::new(&mut rng, "head", 1, 1.0);
    layer.weight_mean.data_mut()[0] = 1.0;
    layer.weight_log_std.data_mut()[0] = 0.0;
    // Park the bias at the prior so only the single weight contributes.
    layer.bias_mean.data_mut()[0] = 0.0;
    layer.bias_log_std.data_mut()[0] = 0.0;
    assert_close(layer.kl_value(), 0.5, 1e-12);
}

#[test]
fn kl_closed_form_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut layer = GaussianLinearLayer::new(&mut rng, "head", 8, 1.0);
    for v in layer.weight_mean.data_mut() {
        *v = rng.random_range(-2.0..2.0);
    }
    for v in layer.weight_log_std.data_mut() {
        *v = rng.random_range(-1.5..0.5);
    }
    let closed = layer.kl_value();

    // MC estimate of E_q[log q(θ) − log p(θ)] over full weight vectors.
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
    let n = 1_000_000;
    let mut total = 0.0;
    for _ in 0..n {
        let mut log_ratio = 0.0;
        for (mu, sigma) in mus.iter().zip(&sigmas) {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let theta = mu + sigma * eps;
            // log q − log p for one coordinate, prior std 1.
            log_ratio += -0.5 * eps * eps - sigma.ln() + 0.5 * theta * theta;
        }
        total += log_ratio;
    }
    let mc = total / n as f64;
    assert!(
        (mc - closed).abs() <= 0.01 * closed.abs().max(1.0),
        "MC KL {mc} vs closed form {closed}"
    );
}

#[test]
fn kl_is_nonnegative_for_random_posteriors() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let prior_std = rng.random_range(0.2..3.0);
        let mut layer = GaussianLinearLayer::new(&mut rng, "head", 4, prior_std);
        for p in [&mut layer.weight_mean, &mut layer.bias_mean] {
            for v in p.data_mut() {
                *v = rng.random_range(-3.0..3.0);
            }
        }
        for p in [&mut layer.weight_log_std, &mut layer.bias_log_std] {
            for v in p.data_mut() {
                *v = rng.random_range(-3.0..1.5);
            }
        }
        assert!(layer.kl_value() >= 0.0, "kl must be nonnegative");
    }
}

#[test]
fn parameter_counts_match_reference_architecture() {
    let count = |params: &[&Param]| params.iter().map(|p| p.len()).sum::<usize>();
    let h = DEFAULT_HIDDEN;
    for (ds, da) in [(3usize, 1usize), (5, 1), (17, 6)] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = SquashedGaussianPolicy::new(&mut rng, ds, &vec![-1.0; da], &vec![1.0; da], h);
        let trunk = |input: usize| (input * h + h) + 2 * h + 2 * ((h * h + h) + 2 * h);
        assert_eq!(count(&actor.params()), trunk(ds) + (h * 2 * da + 2 * da));

        let sac_critic = CriticNet::new_deterministic(&mut rng, "c", ds, da, h);
        assert_eq!(count(&sac_critic.params()), trunk(ds + da) + (h + 1));

        let pac_critic = CriticNet::new_probabilistic(&mut rng, "c", ds, da, h, 1.0);
        assert_eq!(count(&pac_critic.params()), trunk(ds + da) + 2 * (h + 1));
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = std::env::temp_dir().join(format!("pac4sac-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("round_trip.ckpt");

    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut critic = CriticNet::new_probabilistic(&mut rng, "critic", 3, 1, 8, 1.0);
    let saved: Vec<Vec<f64>> = critic.params().iter().map(|p| p.data().to_vec()).collect();
    checkpoint::save(&path, &critic.params()).unwrap();

    for p in critic.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = f64::NAN);
    }
    checkpoint::load_into(&path, &mut critic.params_mut()).unwrap();
    for (p, orig) in critic.params().iter().zip(&saved) {
        assert_eq!(p.data(), orig.as_slice());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn copy_params_synchronizes_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let online = CriticNet::new_probabilistic(&mut rng, "online", 3, 1, 8, 1.0);
    let mut target = CriticNet::new_probabilistic(&mut rng, "target", 3, 1, 8, 1.0);
    copy_params(&mut target.params_mut(), &online.params()).unwrap();
    for (t, o) in target.params().iter().zip(online.params().iter()) {
        assert_eq!(t.data(), o.data());
    }
}

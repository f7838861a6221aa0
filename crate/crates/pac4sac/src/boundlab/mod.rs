//! Brute-force verification on finite MDPs: exact soft policy evaluation,
//! stationary distributions, the value-error bound, random-search policy
//! improvement, and numeric evaluation of the PAC-Bayes complexity term.
//!
//! Everything here is a pure function over immutable inputs, so property
//! sweeps parallelize trivially.

mod bound;

pub use bound::{compute_pac_bound, BoundInputs, BoundVariant, PacBound};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// Explicit MDP: transition tensor `P[s][a][s']`, reward table `r[s][a]`,
/// discount in (0, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a][s']`, each `(s, a)` row summing to one.
    pub transition: Vec<f64>,
    /// Row-major `[s][a]`.
    pub reward: Vec<f64>,
    pub discount: f64,
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        if self.discount <= 0.0 || self.discount >= 1.0 {
            return Err(Error::Contract(format!(
                "discount {} outside (0, 1)",
                self.discount
            )));
        }
        if self.transition.len() != self.n_states * self.n_actions * self.n_states
            || self.reward.len() != self.n_states * self.n_actions
        {
            return Err(Error::Contract("MDP tensor sizes do not match dimensions".into()));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::Contract(format!(
                        "transition row (s={s}, a={a}) is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }
}

/// Row-stochastic policy table `π[s][a]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.probs.len() != self.n_states * self.n_actions {
            return Err(Error::Contract("policy table size does not match dimensions".into()));
        }
        for s in 0..self.n_states {
            let row = self.row(s);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Contract(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(())
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> TabularPolicy {
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        TabularPolicy { n_states, n_actions, probs }
    }
}

/// Expected next-state value term of the soft backup:
/// `Σ_a' π(a'|s')·(q(s',a') − α·log π(a'|s'))`, with `0·log 0 = 0`.
fn soft_state_value(policy: &TabularPolicy, q: &[f64], s: usize, entropy_coef: f64) -> f64 {
    policy
        .row(s)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(a, &p)| p * (q[s * policy.n_actions + a] - entropy_coef * p.ln()))
        .sum()
}

/// One application of the soft Bellman backup to an arbitrary Q table:
/// `T q(s,a) = r(s,a) + γ·E_{s'}[E_{a'}[q(s',a') − α·log π(a'|s')]]`.
pub fn soft_backup(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    q: &[f64],
    entropy_coef: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; q.len()];
    let state_values: Vec<f64> =
        (0..mdp.n_states).map(|s| soft_state_value(policy, q, s, entropy_coef)).collect();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let expected: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(&state_values)
                .map(|(p, v)| p * v)
                .sum();
            out[s * mdp.n_actions + a] = mdp.reward_at(s, a) + mdp.discount * expected;
        }
    }
    out
}

/// Fixed point of the soft Bellman backup, by iteration to sup-norm residual
/// below 1e-12. Converges by γ-contraction.
pub fn exact_soft_q(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    entropy_coef: f64,
) -> Result<Vec<f64>> {
    mdp.validate()?;
    policy.validate()?;
    let mut q = vec![0.0; mdp.n_states * mdp.n_actions];
    for _ in 0..MAX_POWER_ITERATIONS {
        let next = soft_backup(mdp, policy, &q, entropy_coef);
        let residual = next
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        q = next;
        if residual < FIXED_POINT_TOL {
            return Ok(q);
        }
    }
    Err(Error::DegenerateChain { iterations: MAX_POWER_ITERATIONS })
}

/// Soft state values `V(s) = E_a[Q(s,a) − α·log π(a|s)]` for a given Q table.
pub fn state_values(policy: &TabularPolicy, q: &[f64], entropy_coef: f64) -> Vec<f64> {
    (0..policy.n_states).map(|s| soft_state_value(policy, q, s, entropy_coef)).collect()
}

/// Stationary distribution of the state chain induced by the policy, by
/// power iteration to L1 residual below 1e-12.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.validate()?;
    policy.validate()?;
    let n = mdp.n_states;
    // Induced chain M[s][s'] = Σ_a π(a|s) P(s'|s,a).
    let mut chain = vec![0.0; n * n];
    for s in 0..n {
        for (a, &p_a) in policy.row(s).iter().enumerate() {
            if p_a == 0.0 {
                continue;
            }
            for (s_next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                chain[s * n + s_next] += p_a * p;
            }
        }
    }
    let mut dist = vec![1.0 / n as f64; n];
    for _ in 0..MAX_POWER_ITERATIONS {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if dist[s] == 0.0 {
                continue;
            }
            for s_next in 0..n {
                next[s_next] += dist[s] * chain[s * n + s_next];
            }
        }
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        let residual: f64 = next.iter().zip(&dist).map(|(a, b)| (a - b).abs()).sum();
        dist = next;
        if residual < FIXED_POINT_TOL {
            return Ok(dist);
        }
    }
    Err(Error::DegenerateChain { iterations: MAX_POWER_ITERATIONS })
}

/// Both sides of the value-error bound for an arbitrary Q table.
#[derive(Debug, Clone, Copy)]
pub struct ValueErrorBoundReport {
    /// Weighted squared value-approximation error `||q − Q^π||²`.
    pub lhs: f64,
    /// `1/(1−γ)²` times the weighted squared Bellman residual of `q`.
    pub rhs: f64,
    pub holds: bool,
}

/// Check `||q̂ − Q^π||² ≤ (1/(1−γ)²)·||T q̂ − q̂||²` under the stationary
/// state-action weighting `p∞(s)·π(a|s)`.
pub fn check_lemma1(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    q_hat: &[f64],
    entropy_coef: f64,
) -> Result<ValueErrorBoundReport> {
    let q_true = exact_soft_q(mdp, policy, entropy_coef)?;
    let backed_up = soft_backup(mdp, policy, q_hat, entropy_coef);
    let stationary = stationary_distribution(mdp, policy)?;

    let mut lhs = 0.0;
    let mut residual = 0.0;
    for (s, &p_state) in stationary.iter().enumerate() {
        for (a, &p_a) in policy.row(s).iter().enumerate() {
            let weight = p_state * p_a;
            let i = s * mdp.n_actions + a;
            lhs += weight * (q_hat[i] - q_true[i]) * (q_hat[i] - q_true[i]);
            residual += weight * (backed_up[i] - q_hat[i]) * (backed_up[i] - q_hat[i]);
        }
    }
    let rhs = residual / ((1.0 - mdp.discount) * (1.0 - mdp.discount));
    Ok(ValueErrorBoundReport { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

/// Exact action distribution of the search policy: sample `r` candidates
/// from `π(·|s)` and keep the one with the best score `q(s,·)`. The selected
/// score is the maximum of `r` i.i.d. draws, so the distribution follows from
/// the `r`-th power of the CDF over score-sorted actions; ties share their
/// group's mass in proportion to `π`.
pub fn search_policy_exact(policy: &TabularPolicy, q: &[f64], r: usize) -> TabularPolicy {
    assert!(r >= 1, "search needs at least one sample");
    let n_actions = policy.n_actions;
    let mut probs = vec![0.0; policy.probs.len()];
    for s in 0..policy.n_states {
        let mut order: Vec<usize> = (0..n_actions).collect();
        order.sort_by(|&a, &b| {
            q[s * n_actions + a]
                .partial_cmp(&q[s * n_actions + b])
                .expect("finite scores")
        });
        let mut cumulative = 0.0;
        let mut i = 0;
        while i < n_actions {
            // Group actions with identical scores.
            let mut j = i;
            let mut group_mass = 0.0;
            while j < n_actions
                && q[s * n_actions + order[j]] == q[s * n_actions + order[i]]
            {
                group_mass += policy.row(s)[order[j]];
                j += 1;
            }
            let next_cumulative = cumulative + group_mass;
            let selected = next_cumulative.powi(r as i32) - cumulative.powi(r as i32);
            if group_mass > 0.0 {
                for &a in &order[i..j] {
                    probs[s * n_actions + a] = selected * policy.row(s)[a] / group_mass;
                }
            }
            cumulative = next_cumulative;
            i = j;
        }
    }
    TabularPolicy { n_states: policy.n_states, n_actions, probs }
}

/// Outcome of the random-search policy-improvement check.
#[derive(Debug, Clone)]
pub struct ImprovementReport {
    pub holds: bool,
    /// `V^π(s)`, classical values of the base policy.
    pub base_values: Vec<f64>,
    /// Exactly evaluated `V^{π^R}(s)` of the exact search policy.
    pub search_values: Vec<f64>,
    /// Smallest per-state gap `V^{π^R}(s) − V^π(s)`.
    pub min_gap: f64,
    /// Trial average of exactly evaluated values of Monte-Carlo search
    /// policies (one deterministic policy per trial).
    pub mc_mean_values: Vec<f64>,
}

/// Verify that acting with the best of `r` policy samples, scored by the
/// exact `Q^π`, never lowers any state value: the exact search policy is
/// evaluated exactly and compared per state at tolerance 1e-9. Monte-Carlo
/// trials additionally evaluate sampled (per-trial deterministic) search
/// policies whose trial mean tracks the exact value.
pub fn check_policy_improvement_r(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    r: usize,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<ImprovementReport> {
    if r < 1 {
        return Err(Error::Contract("search sample count must be at least 1".into()));
    }
    let q_base = exact_soft_q(mdp, policy, 0.0)?;
    let base_values = state_values(policy, &q_base, 0.0);

    let search = search_policy_exact(policy, &q_base, r);
    let q_search = exact_soft_q(mdp, &search, 0.0)?;
    let search_values = state_values(&search, &q_search, 0.0);

    let min_gap = search_values
        .iter()
        .zip(&base_values)
        .map(|(s, b)| s - b)
        .fold(f64::INFINITY, f64::min);

    let mut mc_mean_values = vec![0.0; mdp.n_states];
    for _ in 0..trials {
        let mut chosen = Vec::with_capacity(mdp.n_states);
        for s in 0..mdp.n_states {
            let row = policy.row(s);
            let mut best_action = 0;
            let mut best_score = f64::NEG_INFINITY;
            for _ in 0..r {
                let mut u: f64 = rng.random_range(0.0..1.0);
                let mut action = mdp.n_actions - 1;
                for (a, &p) in row.iter().enumerate() {
                    if u < p {
                        action = a;
                        break;
                    }
                    u -= p;
                }
                let score = q_base[s * mdp.n_actions + action];
                if score > best_score {
                    best_score = score;
                    best_action = action;
                }
            }
            chosen.push(best_action);
        }
        let trial_policy = TabularPolicy::deterministic(mdp.n_states, mdp.n_actions, &chosen);
        let q_trial = exact_soft_q(mdp, &trial_policy, 0.0)?;
        let values = state_values(&trial_policy, &q_trial, 0.0);
        for (acc, v) in mc_mean_values.iter_mut().zip(&values) {
            *acc += v / trials as f64;
        }
    }

    Ok(ImprovementReport {
        holds: min_gap >= -1e-9,
        base_values,
        search_values,
        min_gap,
        mc_mean_values,
    })
}

/// Random ergodic MDP: every transition probability is strictly positive, so
/// the induced chain is irreducible and aperiodic for any policy.
pub fn random_mdp(
    rng: &mut impl Rng,
    max_states: usize,
    max_actions: usize,
    discounts: &[f64],
) -> FiniteMdp {
    let n_states = rng.random_range(2..=max_states);
    let n_actions = rng.random_range(2..=max_actions);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        transition.extend(row);
    }
    let reward = (0..n_states * n_actions).map(|_| rng.random_range(-1.0..1.0)).collect();
    let discount = discounts[rng.random_range(0..discounts.len())];
    FiniteMdp { n_states, n_actions, transition, reward, discount }
}

/// Random policy with strictly positive action probabilities.
pub fn random_policy(rng: &mut impl Rng, n_states: usize, n_actions: usize) -> TabularPolicy {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let mut row: Vec<f64> = (0..n_actions).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        probs.extend(row);
    }
    TabularPolicy { n_states, n_actions, probs }
}

/// A failing property instance, serialized for replay.
#[derive(Debug, Serialize, Deserialize)]
pub struct Counterexample {
    pub context: String,
    pub seed: u64,
    pub mdp: FiniteMdp,
    pub policy: TabularPolicy,
    pub extra: serde_json::Value,
}

impl Counterexample {
    /// Write to `path` as pretty JSON; returns the path for error messages.
    pub fn dump(&self, path: &std::path::Path) -> Result<()> {
        let payload = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
        std::fs::write(path, payload).map_err(|e| Error::io(path, e))
    }
}

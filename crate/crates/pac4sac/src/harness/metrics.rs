//! Episode bookkeeping and run metrics.
//!
//! The learning-speed metric (called AUC in the reports) is the arithmetic
//! mean of per-episode rewards over a training run; asymptotic performance is
//! the highest episode reward. Both are recomputable from `episodes.csv`
//! alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::StepReport;

/// One completed training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Environment step at which the episode ended (1-based count).
    pub env_step: usize,
    pub reward: f64,
    pub length: usize,
}

/// Fold per-step reports into completed episodes. A trailing partial episode
/// is dropped so metrics cover whole episodes only.
pub fn episodes_from_reports(reports: &[StepReport]) -> Vec<EpisodeLog> {
    let mut episodes = Vec::new();
    let mut reward = 0.0;
    let mut length = 0;
    for report in reports {
        reward += report.reward;
        length += 1;
        if report.terminal || report.truncated {
            episodes.push(EpisodeLog {
                episode: episodes.len(),
                env_step: report.env_step + 1,
                reward,
                length,
            });
            reward = 0.0;
            length = 0;
        }
    }
    episodes
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub auc: f64,
    pub highest: f64,
}

pub fn seed_metrics(episodes: &[EpisodeLog]) -> SeedMetrics {
    assert!(!episodes.is_empty(), "metrics need at least one completed episode");
    let auc = episodes.iter().map(|e| e.reward).sum::<f64>() / episodes.len() as f64;
    let highest = episodes.iter().map(|e| e.reward).fold(f64::NEG_INFINITY, f64::max);
    SeedMetrics { auc, highest }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub highest_mean: f64,
    pub highest_sd: f64,
}

/// Cross-seed metrics report, serialized to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub algo: String,
    pub env: String,
    /// Keyed by seed (stringified for stable JSON maps).
    pub per_seed: BTreeMap<String, SeedMetrics>,
    pub aggregate: Aggregate,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (values.len() - 1) as f64)
            .sqrt()
    };
    (mean, sd)
}

pub fn aggregate_metrics(
    algo: &str,
    env: &str,
    per_seed: &[(u64, SeedMetrics)],
) -> MetricsReport {
    let aucs: Vec<f64> = per_seed.iter().map(|(_, m)| m.auc).collect();
    let highs: Vec<f64> = per_seed.iter().map(|(_, m)| m.highest).collect();
    let (auc_mean, auc_sd) = mean_sd(&aucs);
    let (highest_mean, highest_sd) = mean_sd(&highs);
    MetricsReport {
        algo: algo.to_string(),
        env: env.to_string(),
        per_seed: per_seed
            .iter()
            .map(|(seed, m)| (seed.to_string(), *m))
            .collect(),
        aggregate: Aggregate { auc_mean, auc_sd, highest_mean, highest_sd },
    }
}

/// Trailing-window moving average used for the smoothed learning curves.
pub fn trailing_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let start = (i + 1).saturating_sub(window);
        let slice = &values[start..=i];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    out
}

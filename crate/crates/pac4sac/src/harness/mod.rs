//! Experiment harness: seeded multi-run training with CSV/JSON artifacts,
//! the loss-term ablation matrix, the action-search sweep, and the
//! verification battery. Seeds run as independent workers; results are
//! joined in seed order so artifacts are deterministic.

pub mod csvio;
pub mod metrics;
pub mod plot;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{make_agent, LossToggles, TrainingConfig};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::exec;
use crate::nets::checkpoint;
use crate::verify;
use csvio::{AblationRow, CurveRow};
use metrics::{
    aggregate_metrics, episodes_from_reports, seed_metrics, trailing_average, EpisodeLog,
    MetricsReport,
};

/// Smoothing window (episodes) for the learning-curve CSVs.
const SMOOTHING_WINDOW: usize = 10;

/// A complete experiment description: environment, algorithm, shared
/// hyperparameters, seeds, and output location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: String,
    pub algo: String,
    #[serde(default)]
    pub training: TrainingConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        make_env(&self.env)?;
        if self.algo != "pac4sac" && self.algo != "sac" {
            return Err(Error::Config(format!(
                "unknown algorithm {:?}; expected \"pac4sac\" or \"sac\"",
                self.algo
            )));
        }
        self.training.validate()
    }

    /// Load from a JSON file (CLI flags override afterwards).
    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
    }
}

/// Everything produced by one seed's training run.
struct SeedRun {
    seed: u64,
    episodes: Vec<EpisodeLog>,
    /// Named parameter arrays for the checkpoint file.
    checkpoint: Vec<(String, Vec<usize>, Vec<f64>)>,
}

fn train_one_seed(config: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut env = make_env(&config.env)?;
    let mut training = config.training.clone();
    training.seed = seed;
    let mut agent = make_agent(&config.algo, env.spec(), &training)?;
    let mut reports = Vec::with_capacity(training.total_steps);
    for _ in 0..training.total_steps {
        reports.push(agent.train_step(env.as_mut())?);
    }
    let episodes = episodes_from_reports(&reports);
    if episodes.is_empty() {
        return Err(Error::Contract(format!(
            "seed {seed}: no completed episode in {} steps",
            training.total_steps
        )));
    }
    let checkpoint = agent
        .checkpoint_params()
        .iter()
        .map(|p| (p.name().to_string(), p.shape().to_vec(), p.data().to_vec()))
        .collect();
    Ok(SeedRun { seed, episodes, checkpoint })
}

fn write_seed_artifacts(out_dir: &Path, run: &SeedRun) -> Result<()> {
    csvio::write_episodes(
        &out_dir.join(format!("episodes_seed{}.csv", run.seed)),
        run.seed,
        &run.episodes,
    )?;
    let arrays: Vec<(&str, &[usize], &[f64])> = run
        .checkpoint
        .iter()
        .map(|(n, s, d)| (n.as_str(), s.as_slice(), d.as_slice()))
        .collect();
    checkpoint::save_arrays(&out_dir.join(format!("checkpoint_seed{}.ckpt", run.seed)), &arrays)
}

/// Train every seed (in parallel when available), write per-seed episode
/// CSVs and checkpoints plus an aggregate `metrics.json`, and return the
/// metrics report.
pub fn run_training(config: &RunConfig) -> Result<MetricsReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let runs: Vec<Result<SeedRun>> =
        exec::map(config.seeds.clone(), |seed| train_one_seed(config, seed));
    let mut per_seed = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        write_seed_artifacts(&config.out_dir, &run)?;
        per_seed.push((run.seed, seed_metrics(&run.episodes)));
    }
    let report = aggregate_metrics(&config.algo, &config.env, &per_seed);
    let path = config.out_dir.join("metrics.json");
    let payload = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
    std::fs::write(&path, payload).map_err(|e| Error::io(&path, e))?;
    println!(
        "{} on {}: auc {:.1} ± {:.1}, highest {:.1} ± {:.1} over {} seeds",
        report.algo,
        report.env,
        report.aggregate.auc_mean,
        report.aggregate.auc_sd,
        report.aggregate.highest_mean,
        report.aggregate.highest_sd,
        config.seeds.len()
    );
    Ok(report)
}

/// The three ablation rows: data fit alone, plus complexity, plus correction.
pub fn ablation_rows() -> Vec<LossToggles> {
    vec![
        LossToggles { data_fit: true, complexity: false, correction: false },
        LossToggles { data_fit: true, complexity: true, correction: false },
        LossToggles { data_fit: true, complexity: true, correction: true },
    ]
}

fn toggles_label(t: &LossToggles) -> String {
    let mut parts = vec!["fit"];
    if t.complexity {
        parts.push("kl");
    }
    if t.correction {
        parts.push("var");
    }
    parts.join("+")
}

/// Run one training set per loss-toggle row and write a combined table
/// mirroring the loss-term study: one row per configuration with cross-seed
/// mean ± sd columns.
pub fn run_ablation(config: &RunConfig, rows: &[LossToggles]) -> Result<Vec<MetricsReport>> {
    config.validate()?;
    if rows.iter().any(|t| !t.data_fit) {
        return Err(Error::Config("ablation rows must keep the data-fit term on".into()));
    }
    let mut reports = Vec::with_capacity(rows.len());
    let mut table = Vec::with_capacity(rows.len());
    for toggles in rows {
        let mut sub = config.clone();
        sub.algo = "pac4sac".into();
        sub.training.toggles = *toggles;
        sub.out_dir = config.out_dir.join(toggles_label(toggles));
        let report = run_training(&sub)?;
        table.push(AblationRow {
            data_fit: toggles.data_fit,
            complexity: toggles.complexity,
            correction: toggles.correction,
            auc_mean: report.aggregate.auc_mean,
            auc_sd: report.aggregate.auc_sd,
            highest_mean: report.aggregate.highest_mean,
            highest_sd: report.aggregate.highest_sd,
        });
        reports.push(report);
    }
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    csvio::write_ablation(&config.out_dir.join("ablation.csv"), &table)?;
    Ok(reports)
}

/// Run one training set per action-search sample count and write smoothed
/// learning curves for plotting.
pub fn run_shooting_sweep(
    config: &RunConfig,
    r_values: &[usize],
) -> Result<Vec<(usize, MetricsReport)>> {
    config.validate()?;
    if r_values.is_empty() || r_values.iter().any(|&r| r < 1) {
        return Err(Error::Config("search sample counts must be at least 1".into()));
    }
    let mut results = Vec::with_capacity(r_values.len());
    let mut curve_rows = Vec::new();
    for &r in r_values {
        let mut sub = config.clone();
        sub.algo = "pac4sac".into();
        sub.training.search_samples = r;
        sub.out_dir = config.out_dir.join(format!("r{r}"));
        sub.validate()?;
        std::fs::create_dir_all(&sub.out_dir).map_err(|e| Error::io(&sub.out_dir, e))?;

        let runs: Vec<Result<SeedRun>> =
            exec::map(sub.seeds.clone(), |seed| train_one_seed(&sub, seed));
        let mut per_seed = Vec::new();
        for run in runs {
            let run = run?;
            write_seed_artifacts(&sub.out_dir, &run)?;
            let rewards: Vec<f64> = run.episodes.iter().map(|e| e.reward).collect();
            let smoothed = trailing_average(&rewards, SMOOTHING_WINDOW);
            for (e, s) in run.episodes.iter().zip(smoothed) {
                curve_rows.push(CurveRow {
                    search_samples: r,
                    seed: run.seed,
                    episode: e.episode,
                    env_step: e.env_step,
                    reward: e.reward,
                    smoothed: s,
                });
            }
            per_seed.push((run.seed, seed_metrics(&run.episodes)));
        }
        let report = aggregate_metrics(&sub.algo, &sub.env, &per_seed);
        let path = sub.out_dir.join("metrics.json");
        let payload = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
        std::fs::write(&path, payload).map_err(|e| Error::io(&path, e))?;
        results.push((r, report));
    }
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    csvio::write_curves(&config.out_dir.join("curves.csv"), &curve_rows)?;
    Ok(results)
}

/// Run the verification battery, printing one pass/fail line per check.
/// Returns true when everything passed.
pub fn run_verify(artifact_dir: Option<&Path>) -> Result<bool> {
    if let Some(dir) = artifact_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let results = verify::run_all(artifact_dir);
    let mut all_passed = true;
    for check in &results {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} {} — {}", check.name, check.detail);
        all_passed &= check.passed;
    }
    Ok(all_passed)
}

/// Render learning curves from one or more episode CSVs into an SVG.
pub fn plot_episodes(csv_paths: &[PathBuf], out_svg: &Path, title: &str) -> Result<()> {
    let mut curves = Vec::new();
    for path in csv_paths {
        let rows = csvio::read_episodes(path)?;
        let mut by_seed: std::collections::BTreeMap<u64, Vec<(f64, f64)>> = Default::default();
        for (seed, e) in rows {
            by_seed.entry(seed).or_default().push((e.env_step as f64, e.reward));
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("episodes");
        for (seed, points) in by_seed {
            let rewards: Vec<f64> = points.iter().map(|p| p.1).collect();
            let smoothed = trailing_average(&rewards, SMOOTHING_WINDOW);
            curves.push(plot::Curve {
                label: format!("{stem} seed {seed}"),
                points: points
                    .iter()
                    .zip(smoothed)
                    .map(|(&(x, _), s)| (x, s))
                    .collect(),
            });
        }
    }
    plot::write_svg(out_svg, title, "environment step", "episode reward", &curves)
}

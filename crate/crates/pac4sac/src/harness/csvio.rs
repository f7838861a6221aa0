//! CSV writers and readers for run artifacts. The CSV files are the
//! contract; plots are generated from them afterwards.

use std::fmt::Write as _;
use std::path::Path;

use super::metrics::EpisodeLog;
use crate::error::{Error, Result};

pub const EPISODES_HEADER: &str = "seed,episode,env_step,reward,length";

pub fn write_episodes(path: &Path, seed: u64, episodes: &[EpisodeLog]) -> Result<()> {
    let mut out = String::from(EPISODES_HEADER);
    out.push('\n');
    for e in episodes {
        writeln!(out, "{seed},{},{},{},{}", e.episode, e.env_step, e.reward, e.length)
            .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_episodes(path: &Path) -> Result<Vec<(u64, EpisodeLog)>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.lines();
    match lines.next() {
        Some(header) if header == EPISODES_HEADER => {}
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unexpected header {other:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("row {i} has {} fields", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::Format {
            path: path.to_path_buf(),
            reason: format!("row {i}: bad {what}"),
        };
        rows.push((
            fields[0].parse::<u64>().map_err(|_| parse_err("seed"))?,
            EpisodeLog {
                episode: fields[1].parse().map_err(|_| parse_err("episode"))?,
                env_step: fields[2].parse().map_err(|_| parse_err("env_step"))?,
                reward: fields[3].parse().map_err(|_| parse_err("reward"))?,
                length: fields[4].parse().map_err(|_| parse_err("length"))?,
            },
        ));
    }
    Ok(rows)
}

/// One row of the shooting-sweep learning-curve file.
pub struct CurveRow {
    pub search_samples: usize,
    pub seed: u64,
    pub episode: usize,
    pub env_step: usize,
    pub reward: f64,
    pub smoothed: f64,
}

pub const CURVES_HEADER: &str = "search_samples,seed,episode,env_step,reward,smoothed_reward";

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.search_samples, r.seed, r.episode, r.env_step, r.reward, r.smoothed
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row of the ablation table, mirroring the loss-term study layout.
pub struct AblationRow {
    pub data_fit: bool,
    pub complexity: bool,
    pub correction: bool,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub highest_mean: f64,
    pub highest_sd: f64,
}

pub const ABLATION_HEADER: &str =
    "data_fit,complexity,correction,auc_mean,auc_sd,highest_mean,highest_sd";

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.data_fit, r.complexity, r.correction, r.auc_mean, r.auc_sd, r.highest_mean,
            r.highest_sd
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

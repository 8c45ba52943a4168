use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of `metrics.csv`, written after every iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Mean extrinsic return over the last `return_window` episodes.
    pub mean_return: f64,
    pub std_return: f64,
    pub success_rate: f64,
    pub mean_episode_len: f64,
    pub intrinsic_mean: f64,
    pub ppo_policy_loss: f64,
    pub ppo_value_loss: f64,
    pub ppo_entropy: f64,
    pub ppo_mean_ratio: f64,
    pub ppo_clip_fraction: f64,
    pub ppo_approx_kl: f64,
    pub bc_steps: u64,
    pub bc_loss: f64,
    pub buffer_episodes: u64,
    pub buffer_transitions: u64,
    pub score_min: f64,
    pub score_median: f64,
    pub score_max: f64,
    pub distinct_levels: u64,
    pub filter_pass_rate: f64,
    pub sample_entropy: f64,
    pub distinct_states: u64,
    pub max_count: u64,
}

/// Column order of the metrics file.
pub const METRICS_COLUMNS: [&str; 26] = [
    "iteration",
    "env_steps",
    "episodes",
    "mean_return",
    "std_return",
    "success_rate",
    "mean_episode_len",
    "intrinsic_mean",
    "ppo_policy_loss",
    "ppo_value_loss",
    "ppo_entropy",
    "ppo_mean_ratio",
    "ppo_clip_fraction",
    "ppo_approx_kl",
    "bc_steps",
    "bc_loss",
    "buffer_episodes",
    "buffer_transitions",
    "score_min",
    "score_median",
    "score_max",
    "distinct_levels",
    "filter_pass_rate",
    "sample_entropy",
    "distinct_states",
    "max_count",
];

fn real(x: f64) -> String {
    format!("{x:.6}")
}

impl MetricsRow {
    /// Fields as strings in [`METRICS_COLUMNS`] order; reals use six decimals.
    pub fn record(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.env_steps.to_string(),
            self.episodes.to_string(),
            real(self.mean_return),
            real(self.std_return),
            real(self.success_rate),
            real(self.mean_episode_len),
            real(self.intrinsic_mean),
            real(self.ppo_policy_loss),
            real(self.ppo_value_loss),
            real(self.ppo_entropy),
            real(self.ppo_mean_ratio),
            real(self.ppo_clip_fraction),
            real(self.ppo_approx_kl),
            self.bc_steps.to_string(),
            real(self.bc_loss),
            self.buffer_episodes.to_string(),
            self.buffer_transitions.to_string(),
            real(self.score_min),
            real(self.score_median),
            real(self.score_max),
            self.distinct_levels.to_string(),
            real(self.filter_pass_rate),
            real(self.sample_entropy),
            self.distinct_states.to_string(),
            self.max_count.to_string(),
        ]
    }
}

/// Append-only CSV sink flushed after every row.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(METRICS_COLUMNS)?;
        inner.flush()?;
        Ok(MetricsWriter { inner })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.write_record(row.record())?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Reads a metrics file back; fails on any header mismatch.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(&mut rdr, path, &METRICS_COLUMNS)?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r.map_err(|e| crate::Error::Data {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// One finished episode, as logged to `episodes.csv`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode counter.
    pub episode: u64,
    /// Environment steps taken when the episode ended.
    pub env_steps: u64,
    pub level_id: u64,
    pub length: u32,
    pub ext_return: f64,
}

pub const EPISODE_COLUMNS: [&str; 5] = ["episode", "env_steps", "level_id", "length", "ext_return"];

pub struct EpisodeWriter {
    inner: csv::Writer<File>,
}

impl EpisodeWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(EPISODE_COLUMNS)?;
        inner.flush()?;
        Ok(EpisodeWriter { inner })
    }

    pub fn append(&mut self, records: &[EpisodeRecord]) -> Result<()> {
        for r in records {
            self.inner.write_record([
                r.episode.to_string(),
                r.env_steps.to_string(),
                r.level_id.to_string(),
                r.length.to_string(),
                real(r.ext_return),
            ])?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, want: &[&str]) -> Result<()> {
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(want.iter().copied()) {
        let got: Vec<&str> = headers.iter().collect();
        return Err(crate::Error::Data {
            path: path.display().to_string(),
            msg: format!("columns {got:?} do not match expected {want:?}"),
        });
    }
    Ok(())
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(&mut rdr, path, &EPISODE_COLUMNS)?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r.map_err(|e| crate::Error::Data {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?);
    }
    Ok(rows)
}

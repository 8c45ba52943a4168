use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::overrides::set_path;
use crate::error::{Error, Result};
use crate::trainer::{read_metrics, RunConfig, CONFIG_FILE, ERROR_FILE, METRICS_FILE};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

/// One named variant: dotted-path assignments applied on top of the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub name: String,
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
}

/// A parameter crossed with every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub path: String,
    pub values: Vec<Value>,
}

/// A sweep description: configs x seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub name: String,
    /// Base config document, or a path to one relative to the matrix file.
    #[serde(default)]
    pub base: Value,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Return level for the steps-to-threshold column.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl ExperimentMatrix {
    /// Reads a matrix file, resolving a string `base` relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let data_err = |msg: String| Error::Data {
            path: path.display().to_string(),
            msg,
        };
        let text = fs::read_to_string(path).map_err(|e| data_err(e.to_string()))?;
        let mut m: ExperimentMatrix =
            serde_json::from_str(&text).map_err(|e| data_err(e.to_string()))?;
        if let Value::String(rel) = &m.base {
            let base_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let text = fs::read_to_string(&base_path).map_err(|e| Error::Data {
                path: base_path.display().to_string(),
                msg: e.to_string(),
            })?;
            m.base = serde_json::from_str(&text)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedCell {
    pub name: String,
    pub runs: Vec<PlannedRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub root: PathBuf,
    pub cells: Vec<PlannedCell>,
    pub threshold: Option<f64>,
}

impl SweepPlan {
    pub fn runs(&self) -> impl Iterator<Item = (&PlannedCell, &PlannedRun)> {
        self.cells
            .iter()
            .flat_map(|c| c.runs.iter().map(move |r| (c, r)))
    }
}

fn compact(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn safe_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.=+".contains(c))
}

/// Expands a matrix into validated per-seed run configs under
/// `out_root/<matrix name>/<cell>/seed-<n>`.
pub fn plan_sweep(matrix: &ExperimentMatrix, out_root: &Path) -> Result<SweepPlan> {
    if !safe_name(&matrix.name) {
        return Err(Error::InvalidConfig(format!(
            "sweep name {:?} is not a plain directory name",
            matrix.name
        )));
    }
    if matrix.seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
    }
    let mut seen_seeds = matrix.seeds.clone();
    seen_seeds.sort_unstable();
    seen_seeds.dedup();
    if seen_seeds.len() != matrix.seeds.len() {
        return Err(Error::InvalidConfig("duplicate seeds in sweep".into()));
    }
    let base_cells = if matrix.cells.is_empty() {
        vec![CellSpec {
            name: String::new(),
            set: BTreeMap::new(),
        }]
    } else {
        matrix.cells.clone()
    };
    let mut expanded: Vec<(String, Vec<(String, Value)>)> = Vec::new();
    for cell in &base_cells {
        let sets: Vec<(String, Value)> = cell
            .set
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        match &matrix.grid {
            None => {
                let name = if cell.name.is_empty() {
                    "base".to_string()
                } else {
                    cell.name.clone()
                };
                expanded.push((name, sets));
            }
            Some(grid) => {
                if grid.values.is_empty() {
                    return Err(Error::InvalidConfig("grid has no values".into()));
                }
                let key = grid.path.rsplit('.').next().unwrap_or(&grid.path);
                for v in &grid.values {
                    let tag = format!("{key}={}", compact(v));
                    let name = if cell.name.is_empty() {
                        tag
                    } else {
                        format!("{}_{tag}", cell.name)
                    };
                    let mut s = sets.clone();
                    s.push((grid.path.clone(), v.clone()));
                    expanded.push((name, s));
                }
            }
        }
    }

    let root = out_root.join(&matrix.name);
    let mut cells = Vec::new();
    let mut names = std::collections::BTreeSet::new();
    for (name, sets) in expanded {
        if !safe_name(&name) {
            return Err(Error::InvalidConfig(format!(
                "cell name {name:?} is not a plain directory name"
            )));
        }
        if !names.insert(name.clone()) {
            return Err(Error::InvalidConfig(format!(
                "duplicate cell name {name:?}"
            )));
        }
        let mut doc = if matrix.base.is_null() {
            Value::Object(Default::default())
        } else {
            matrix.base.clone()
        };
        for (path, v) in &sets {
            set_path(&mut doc, path, v.clone())?;
        }
        set_path(&mut doc, "name", Value::String(name.clone()))?;
        let mut runs = Vec::new();
        for &seed in &matrix.seeds {
            set_path(&mut doc, "seed", Value::from(seed))?;
            let config: RunConfig = serde_json::from_value(doc.clone())
                .map_err(|e| Error::InvalidConfig(format!("cell {name}: {e}")))?;
            config
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("cell {name}: {e}")))?;
            runs.push(PlannedRun {
                seed,
                dir: root.join(&name).join(format!("seed-{seed}")),
                config,
            });
        }
        cells.push(PlannedCell { name, runs });
    }
    Ok(SweepPlan {
        root,
        cells,
        threshold: matrix.threshold,
    })
}

/// Creates every run directory. An existing sweep root is refused unless
/// `force`, in which case it is removed first.
pub fn prepare_dirs(plan: &SweepPlan, force: bool) -> Result<()> {
    if plan.root.exists() {
        if !force {
            return Err(Error::AlreadyExists(plan.root.display().to_string()));
        }
        fs::remove_dir_all(&plan.root)?;
    }
    for (_, run) in plan.runs() {
        fs::create_dir_all(&run.dir)?;
    }
    Ok(())
}

/// First `env_steps` at which the windowed mean return reached `threshold`
/// with a full window.
pub fn steps_to_threshold(dir: &Path, threshold: f64) -> Result<Option<u64>> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    Ok(rows
        .iter()
        .find(|r| r.episodes >= cfg.return_window as u64 && r.mean_return >= threshold)
        .map(|r| r.env_steps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub completed: bool,
    pub env_steps: u64,
    pub final_return: Option<f64>,
    pub steps_to_threshold: Option<u64>,
}

/// One line of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub seeds: usize,
    pub completed: usize,
    /// Mean and population std of each completed seed's final windowed return.
    pub final_mean: f64,
    pub final_std: f64,
    pub reached: usize,
    pub mean_steps_to_threshold: Option<f64>,
    pub best: bool,
    pub runs: Vec<RunResult>,
}

fn run_result(run: &PlannedRun, threshold: Option<f64>) -> RunResult {
    let failed = RunResult {
        seed: run.seed,
        completed: false,
        env_steps: 0,
        final_return: None,
        steps_to_threshold: None,
    };
    if run.dir.join(ERROR_FILE).exists() {
        return failed;
    }
    let Ok(rows) = read_metrics(&run.dir.join(METRICS_FILE)) else {
        return failed;
    };
    if !run.dir.join(crate::trainer::CHECKPOINT_FILE).exists() {
        return failed;
    }
    let last = rows.last();
    RunResult {
        seed: run.seed,
        completed: true,
        env_steps: last.map_or(0, |r| r.env_steps),
        final_return: last.map(|r| r.mean_return),
        steps_to_threshold: threshold.and_then(|t| {
            rows.iter()
                .find(|r| r.episodes >= run.config.return_window as u64 && r.mean_return >= t)
                .map(|r| r.env_steps)
        }),
    }
}

/// Aggregates finished run directories; the cell with the highest final
/// mean return is flagged `best`.
pub fn summarize(plan: &SweepPlan) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = plan
        .cells
        .iter()
        .map(|cell| {
            let runs: Vec<RunResult> = cell
                .runs
                .iter()
                .map(|r| run_result(r, plan.threshold))
                .collect();
            let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_return).collect();
            let (final_mean, final_std) = crate::trainer::mean_std(&finals);
            let hits: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.steps_to_threshold.map(|s| s as f64))
                .collect();
            SummaryRow {
                cell: cell.name.clone(),
                seeds: cell.runs.len(),
                completed: runs.iter().filter(|r| r.completed).count(),
                final_mean,
                final_std,
                reached: hits.len(),
                mean_steps_to_threshold: (!hits.is_empty())
                    .then(|| hits.iter().sum::<f64>() / hits.len() as f64),
                best: false,
                runs,
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.completed > 0)
        .max_by(|a, b| {
            a.1.final_mean
                .total_cmp(&b.1.final_mean)
                .then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i);
    if let Some(i) = best {
        rows[i].best = true;
    }
    rows
}

/// Writes `summary.csv` and `summary.json` under the sweep root.
pub fn write_summary(root: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(root.join(SUMMARY_CSV))?;
    w.write_record([
        "cell",
        "seeds",
        "completed",
        "final_mean",
        "final_std",
        "reached",
        "mean_steps_to_threshold",
        "steps_to_threshold",
        "best",
    ])?;
    for r in rows {
        let per_seed: Vec<String> = r
            .runs
            .iter()
            .map(|x| {
                x.steps_to_threshold
                    .map_or("-".to_string(), |s| s.to_string())
            })
            .collect();
        w.write_record([
            r.cell.clone(),
            r.seeds.to_string(),
            r.completed.to_string(),
            format!("{:.6}", r.final_mean),
            format!("{:.6}", r.final_std),
            r.reached.to_string(),
            r.mean_steps_to_threshold
                .map_or(String::new(), |s| format!("{s:.1}")),
            per_seed.join(";"),
            r.best.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(root.join(SUMMARY_JSON), serde_json::to_string_pretty(rows)?)?;
    Ok(())
}

/// Human-readable summary table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.cell.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>17}  {:>7}  {:>14}  per seed\n",
        "cell", "done", "final return", "reached", "steps to thr"
    );
    for r in rows {
        let steps = r
            .mean_steps_to_threshold
            .map_or("-".into(), |s| format!("{s:.0}"));
        let per_seed: Vec<String> = r
            .runs
            .iter()
            .map(|run| run.steps_to_threshold.map_or("-".into(), |s| s.to_string()))
            .collect();
        out.push_str(&format!(
            "{:<width$}  {:>2}/{:<2}  {:>8.4} ± {:<6.4}  {:>7}  {:>14}  {}{}\n",
            r.cell,
            r.completed,
            r.seeds,
            r.final_mean,
            r.final_std,
            r.reached,
            steps,
            per_seed.join(" "),
            if r.best { "  *best" } else { "" }
        ));
    }
    out
}

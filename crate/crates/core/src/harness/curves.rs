use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{read_episodes, RunConfig, CONFIG_FILE, EPISODES_FILE};

/// Windowed return of one run against environment steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub name: String,
    pub source: PathBuf,
    pub env_steps: Vec<f64>,
    pub value: Vec<f64>,
}

/// Mean of the last `window` values (fewer at the start) at every index.
pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Reads a run directory's episode log and config name.
pub fn load_run(dir: &Path, window: usize) -> Result<RunSeries> {
    let name = RunConfig::load(&dir.join(CONFIG_FILE))?.name;
    let eps = read_episodes(&dir.join(EPISODES_FILE))?;
    let returns: Vec<f64> = eps.iter().map(|e| e.ext_return).collect();
    Ok(RunSeries {
        name,
        source: dir.to_path_buf(),
        env_steps: eps.iter().map(|e| e.env_steps as f64).collect(),
        value: rolling_mean(&returns, window),
    })
}

/// Piecewise-linear interpolation of `(xs, ys)` at `at`, clamped to the
/// end values outside the sampled range. `xs` must be non-decreasing.
pub fn interpolate(xs: &[f64], ys: &[f64], at: f64) -> f64 {
    let n = xs.len();
    if at <= xs[0] {
        return ys[0];
    }
    if at >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&x| x <= at);
    let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (at - x0) / (x1 - x0)
}

/// Mean and population std across runs on a shared step grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub runs: usize,
    pub env_steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Longer runs were cut to the shortest one.
    pub truncated: bool,
}

/// Aligns runs of one config and averages them. When every run logged the
/// same step values those are used directly; otherwise `points` evenly
/// spaced steps over the range every run covers.
pub fn aggregate(name: &str, runs: &[RunSeries], points: usize) -> Result<Curve> {
    let nonempty: Vec<&RunSeries> = runs.iter().filter(|r| !r.env_steps.is_empty()).collect();
    if let Some(r) = runs.iter().find(|r| r.env_steps.is_empty()) {
        return Err(Error::Data {
            path: r.source.display().to_string(),
            msg: "run has no finished episodes".into(),
        });
    }
    let Some(first) = nonempty.first() else {
        return Err(Error::InvalidConfig(format!("no runs for curve {name}")));
    };
    let same_grid = nonempty.iter().all(|r| r.env_steps == first.env_steps);
    let ends: Vec<f64> = nonempty
        .iter()
        .map(|r| *r.env_steps.last().unwrap())
        .collect();
    let hi = ends.iter().copied().fold(f64::INFINITY, f64::min);
    let truncated = ends.iter().any(|&e| e != hi);
    if truncated {
        log::warn!("curve {name}: runs end at different steps; truncating to the shortest ({hi})");
    }
    let grid: Vec<f64> = if same_grid {
        first.env_steps.clone()
    } else {
        let lo = nonempty
            .iter()
            .map(|r| r.env_steps[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .min(hi);
        let n = points.max(2);
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let mut mean = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    for &x in &grid {
        let vals: Vec<f64> = nonempty
            .iter()
            .map(|r| interpolate(&r.env_steps, &r.value, x))
            .collect();
        let (m, s) = crate::trainer::mean_std(&vals);
        mean.push(m);
        std.push(s);
    }
    Ok(Curve {
        name: name.to_string(),
        runs: nonempty.len(),
        env_steps: grid,
        mean,
        std,
        truncated,
    })
}

/// Loads run directories, groups them by config name and aggregates each.
pub fn curves_from_dirs(dirs: &[PathBuf], window: usize, points: usize) -> Result<Vec<Curve>> {
    let mut groups: BTreeMap<String, Vec<RunSeries>> = BTreeMap::new();
    for d in dirs {
        let s = load_run(d, window)?;
        groups.entry(s.name.clone()).or_default().push(s);
    }
    groups
        .iter()
        .map(|(name, runs)| aggregate(name, runs, points))
        .collect()
}

pub fn curve_csv(curve: &Curve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["env_steps", "mean_return", "std_return", "runs"])?;
    for i in 0..curve.env_steps.len() {
        w.write_record([
            format!("{:.1}", curve.env_steps[i]),
            format!("{:.6}", curve.mean[i]),
            format!("{:.6}", curve.std[i]),
            curve.runs.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("ascii csv"))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Line chart of every curve's mean with a shaded one-std band.
pub fn curves_svg(curves: &[Curve]) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 180.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = curves
        .iter()
        .flat_map(|c| c.env_steps.last().copied())
        .fold(1.0, f64::max);
    let y_max = curves
        .iter()
        .flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m + s))
        .fold(1.0, f64::max);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y.clamp(0.0, y_max) / y_max);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for i in 0..=4 {
        let y = y_max * i as f64 / 4.0;
        svg += &format!(
            "<line x1=\"{left}\" x2=\"{:.1}\" y1=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y:.2}</text>\n",
            left + pw,
            sy(y),
            sy(y),
            left - 6.0,
            sy(y) + 4.0
        );
        let x = x_max * i as f64 / 4.0;
        svg += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(x),
            top + ph + 18.0,
            x
        );
    }
    svg += &format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">environment steps</text>\n\
         <text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">mean return</text>\n",
        left + pw / 2.0,
        h - 10.0,
        top + ph / 2.0
    );
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper: Vec<String> = (0..c.env_steps.len())
            .map(|i| format!("{:.1},{:.1}", sx(c.env_steps[i]), sy(c.mean[i] + c.std[i])))
            .collect();
        let lower: Vec<String> = (0..c.env_steps.len())
            .rev()
            .map(|i| format!("{:.1},{:.1}", sx(c.env_steps[i]), sy(c.mean[i] - c.std[i])))
            .collect();
        svg += &format!(
            "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = (0..c.env_steps.len())
            .map(|i| format!("{:.1},{:.1}", sx(c.env_steps[i]), sy(c.mean[i])))
            .collect();
        svg += &format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            line.join(" ")
        );
        let ly = top + 14.0 + 18.0 * k as f64;
        svg += &format!(
            "<line x1=\"{:.1}\" x2=\"{:.1}\" y1=\"{ly:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{} (n={})</text>\n",
            left + pw + 12.0,
            left + pw + 32.0,
            left + pw + 38.0,
            ly + 4.0,
            escape(&c.name),
            c.runs
        );
    }
    svg += "</svg>\n";
    svg
}

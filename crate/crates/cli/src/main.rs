use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use selfil::gridworld::{generate_level, optimal_solution, render_ascii_cropped, Action, Task};
use selfil::harness::{
    config_with_overrides, curve_csv, curves_from_dirs, curves_svg, format_summary, plan_sweep,
    prepare_dirs, summarize, write_summary, ExperimentMatrix,
};
use selfil::replay::BufferSnapshot;
use selfil::trainer::{train, RunConfig, BUFFER_FILE, CONFIG_FILE, EPISODES_FILE, METRICS_FILE};

const OUTPUT_ROOT_ENV: &str = "SELFIL_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "selfil",
    version,
    about = "Self-imitation replay experiments on procedural gridworlds"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration.
    Run {
        config: PathBuf,
        /// Dotted-path override such as `priority.alpha=0.6` (repeatable).
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        /// Run directory; defaults to <output root>/<name>/seed-<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = OUTPUT_ROOT_ENV, default_value = "runs")]
        output_root: PathBuf,
        /// Overwrite an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Run every cell of an experiment matrix and summarize.
    Sweep {
        matrix: PathBuf,
        #[arg(long, env = OUTPUT_ROOT_ENV, default_value = "runs")]
        output_root: PathBuf,
        /// Replace an existing sweep directory.
        #[arg(long)]
        force: bool,
        /// Cells run concurrently as separate processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Aggregate run directories into mean ± std learning curves.
    Curves {
        /// Run directories, or directories to search for runs.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Episodes in the moving return window.
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Grid points when runs must be interpolated.
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value = "curves")]
        out: PathBuf,
    },
    /// Print a generated level.
    RenderLevel {
        #[arg(long, value_enum, default_value_t = TaskKind::MultiRoom)]
        task: TaskKind,
        #[arg(long, default_value_t = 2)]
        rooms: usize,
        #[arg(long, default_value_t = 4)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the level descriptor as JSON.
        #[arg(long)]
        json: bool,
        /// Also print the shortest action sequence.
        #[arg(long)]
        solve: bool,
    },
    /// Show what a run's replay buffer held at the end.
    DumpBuffer {
        /// Run directory or buffer snapshot file.
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskKind {
    MultiRoom,
    ObstructedMazeLite,
}

/// Error class that maps to exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run {
            config,
            overrides,
            out,
            output_root,
            force,
        } => cmd_run(&config, &overrides, out, &output_root, force),
        Cmd::Sweep {
            matrix,
            output_root,
            force,
            jobs,
        } => cmd_sweep(&matrix, &output_root, force, jobs),
        Cmd::Curves {
            dirs,
            window,
            points,
            out,
        } => cmd_curves(&dirs, window, points, &out),
        Cmd::RenderLevel {
            task,
            rooms,
            size,
            seed,
            json,
            solve,
        } => cmd_render(task, rooms, size, seed, json, solve),
        Cmd::DumpBuffer { path, json } => cmd_dump_buffer(&path, json),
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage(format!("cannot read config {}: {e}", path.display())),
    };
    let doc: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    match config_with_overrides(doc, overrides) {
        Ok(cfg) => Ok(cfg),
        Err(e) => usage(format!("{}: {e}", path.display())),
    }
}

fn cmd_run(
    config: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
    output_root: &Path,
    force: bool,
) -> Result<ExitCode> {
    let cfg = load_config(config, overrides)?;
    let dir = out.unwrap_or_else(|| {
        output_root
            .join(&cfg.name)
            .join(format!("seed-{}", cfg.seed))
    });
    if dir.join(METRICS_FILE).exists() && !force {
        return usage(format!(
            "{} already holds a run; pass --force to overwrite",
            dir.display()
        ));
    }
    let outcome = train(&cfg, &dir).with_context(|| format!("run {} aborted", dir.display()))?;
    println!(
        "{}: {} iterations, {} steps, {} episodes, final return {}{}",
        dir.display(),
        outcome.iterations,
        outcome.env_steps,
        outcome.episodes,
        outcome
            .final_mean_return
            .map_or("n/a".to_string(), |r| format!("{r:.4}")),
        if outcome.stopped_early {
            " (target reached)"
        } else {
            ""
        }
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(matrix_path: &Path, output_root: &Path, force: bool, jobs: usize) -> Result<ExitCode> {
    let matrix = match ExperimentMatrix::load(matrix_path) {
        Ok(m) => m,
        Err(e) => return usage(e.to_string()),
    };
    let plan = match plan_sweep(&matrix, output_root) {
        Ok(p) => p,
        Err(e) => return usage(format!("{}: {e}", matrix_path.display())),
    };
    if let Err(e) = prepare_dirs(&plan, force) {
        return usage(e.to_string());
    }
    let exe = std::env::current_exe().context("locating the selfil executable")?;
    let mut pending: Vec<(String, PathBuf)> = Vec::new();
    for (cell, run) in plan.runs() {
        let cfg_path = run.dir.join(CONFIG_FILE);
        std::fs::write(&cfg_path, run.config.to_json()?)?;
        pending.push((format!("{} seed {}", cell.name, run.seed), run.dir.clone()));
    }

    let mut failures = Vec::new();
    let jobs = jobs.max(1);
    for chunk in pending.chunks(jobs) {
        let children: Vec<_> = chunk
            .iter()
            .map(|(label, dir)| {
                let child = Command::new(&exe)
                    .arg("run")
                    .arg(dir.join(CONFIG_FILE))
                    .arg("--out")
                    .arg(dir)
                    .arg("--force")
                    .spawn();
                (label, child)
            })
            .collect();
        for (label, child) in children {
            let ok = match child {
                Ok(mut c) => c.wait().map(|s| s.success()).unwrap_or(false),
                Err(e) => {
                    log::error!("{label}: could not start: {e}");
                    false
                }
            };
            if !ok {
                eprintln!("cell {label} failed; continuing");
                failures.push(label.clone());
            }
        }
    }

    let rows = summarize(&plan);
    write_summary(&plan.root, &rows)?;
    print!("{}", format_summary(&rows));
    println!("summary written to {}", plan.root.display());
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} run(s) failed: {}", failures.len(), failures.join(", "));
        Ok(ExitCode::from(1))
    }
}

/// Run directories under `root` (itself included), identified by an episode log.
fn find_runs(root: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if root.join(EPISODES_FILE).is_file() {
        found.push(root.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        find_runs(&e, found)?;
    }
    Ok(())
}

fn cmd_curves(dirs: &[PathBuf], window: usize, points: usize, out: &Path) -> Result<ExitCode> {
    let mut runs = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return usage(format!("{} is not a directory", d.display()));
        }
        find_runs(d, &mut runs)?;
    }
    if runs.is_empty() {
        return usage("no run directories found");
    }
    let curves = curves_from_dirs(&runs, window, points)?;
    std::fs::create_dir_all(out)?;
    for c in &curves {
        if c.truncated {
            eprintln!(
                "warning: {}: runs differ in length; curve truncated to the shortest",
                c.name
            );
        }
        let path = out.join(format!("{}.csv", c.name));
        std::fs::write(&path, curve_csv(c)?)?;
        println!("{} ({} runs) -> {}", c.name, c.runs, path.display());
    }
    let svg = out.join("curves.svg");
    std::fs::write(&svg, curves_svg(&curves))?;
    println!("chart -> {}", svg.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(
    task: TaskKind,
    rooms: usize,
    size: usize,
    seed: u64,
    json: bool,
    solve: bool,
) -> Result<ExitCode> {
    let task = match task {
        TaskKind::MultiRoom => Task::MultiRoom {
            n_rooms: rooms,
            max_room_size: size,
        },
        TaskKind::ObstructedMazeLite => Task::ObstructedMazeLite,
    };
    if let Err(e) = task.validate() {
        return usage(e.to_string());
    }
    let level = generate_level(task, seed)?;
    if json {
        println!("{}", level.to_json()?);
    } else {
        println!(
            "{task} seed {seed}: optimal {} of {} steps",
            level.optimal_steps, level.max_steps
        );
        print!(
            "{}",
            render_ascii_cropped(&level, &level.grid, Some(level.agent_start))
        );
    }
    if solve {
        let path = optimal_solution(&level)?;
        let names: Vec<&str> = path.iter().map(|a| action_name(*a)).collect();
        println!("{}", names.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
    {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn action_name(a: Action) -> &'static str {
    match a {
        Action::TurnLeft => "left",
        Action::TurnRight => "right",
        Action::Forward => "forward",
        Action::Pickup => "pickup",
        Action::Drop => "drop",
        Action::Toggle => "toggle",
        Action::Done => "done",
    }
}

fn cmd_dump_buffer(path: &Path, json: bool) -> Result<ExitCode> {
    let file = if path.is_dir() {
        path.join(BUFFER_FILE)
    } else {
        path.to_path_buf()
    };
    let text = match std::fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) => return usage(format!("cannot read {}: {e}", file.display())),
    };
    let snap: BufferSnapshot =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    if json {
        emit(&(serde_json::to_string_pretty(&snap)? + "\n"))?;
        return Ok(ExitCode::SUCCESS);
    }
    let mut out = String::new();
    writeln!(
        out,
        "{} episodes, {}/{} transitions, quota {}",
        snap.episodes.len(),
        snap.total_transitions,
        snap.capacity_transitions,
        snap.diversity_quota
            .map_or("none".to_string(), |k| k.to_string())
    )?;
    writeln!(
        out,
        "{:>5} {:>10} {:>12} {:>5} {:>8} {:>10}",
        "rank", "episode", "level", "len", "return", "score"
    )?;
    for (i, e) in snap.episodes.iter().enumerate() {
        writeln!(
            out,
            "{:>5} {:>10} {:>12} {:>5} {:>8.4} {:>10.6}",
            i, e.episode_id, e.level_id, e.len, e.ext_return, e.score.total
        )?;
    }
    let counts = snap.level_counts();
    let max = counts.values().copied().max().unwrap_or(0);
    writeln!(
        out,
        "{} distinct levels, at most {} episodes from one level",
        counts.len(),
        max
    )?;
    emit(&out)?;
    Ok(ExitCode::SUCCESS)
}

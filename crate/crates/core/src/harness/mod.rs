//! Experiment plumbing shared by the command line and the demo: config
//! overrides, sweep planning and summaries, and learning-curve aggregation.

mod curves;
mod overrides;
mod sweep;

pub use curves::{
    aggregate, curve_csv, curves_from_dirs, curves_svg, interpolate, load_run, rolling_mean, Curve,
    RunSeries,
};
pub use overrides::{apply_override, config_with_overrides, parse_value, set_path};
pub use sweep::{
    format_summary, plan_sweep, prepare_dirs, steps_to_threshold, summarize, write_summary,
    CellSpec, ExperimentMatrix, GridSpec, PlannedCell, PlannedRun, RunResult, SummaryRow,
    SweepPlan, SUMMARY_CSV, SUMMARY_JSON,
};

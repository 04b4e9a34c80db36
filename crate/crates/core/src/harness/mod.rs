//! Experiment configs, metric traces and reports.
//!
//! Metric evaluation (full gradients, primal gaps) is never billed to the
//! solver's SFO counter, and snapshots are taken on an SFO cadence so that
//! algorithms with different per-step costs line up on the x-axis.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod sweep;
pub mod trace;

pub use compare::{compare, sfo_to_target, value_at_budget};
pub use config::{Algorithm, ExperimentConfig, InstanceSource, ManualOverrides, ScheduleMode};
pub use experiment::{initial_point, prepare_instance, resolve_schedule, run_experiment, PreparedInstance, ResolvedSchedule};
pub use plot::{emit_plot, PlotOptions, Series};
pub use sweep::{apply_overrides, parse_seed_range, sweep_cells, Axis, Cell};
pub use trace::{read_csv, read_json, write_csv, write_json, Metric, Trace, TraceRecord, CSV_HEADER};

//! `vrgda`: generate PL games, run solvers, sweep configs and plot traces.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 usage or config error,
//! 3 solver abort, 4 metric unavailable.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgAction, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value;

use vrgda_core::harness::{
    self, apply_overrides, emit_plot, parse_seed_range, read_csv, run_experiment, sweep_cells, write_csv, write_json,
    Axis, Metric, PlotOptions, Series, Trace,
};
use vrgda_core::plgame::{generate, reference_saddle};
use vrgda_core::{Error, GeneratorConfig};

#[derive(Parser)]
#[command(name = "vrgda", version, about = "Variance-reduced GDA solvers for finite-sum PL minimax problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a PL game instance and write it as JSON.
    Gen(GenArgs),
    /// Run one experiment from a JSON config.
    Run(RunArgs),
    /// Run the Cartesian product of value lists and seeds.
    Sweep(SweepArgs),
    /// Plot one metric of several CSV traces as SVG.
    Plot(PlotArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    mu: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "well-posed", default_value_t = true, action = ArgAction::Set)]
    well_posed: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config, or a trace JSON whose echoed config is rerun.
    #[arg(long)]
    config: PathBuf,
    /// `key=value`; keys are dotted (`instance.n`) or bare (`seed`).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for `<stem>.trace.{csv,json}`; defaults to the config's.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=v1,v2,...`; repeat for more axes.
    #[arg(long, required = true)]
    vary: Vec<String>,
    /// Inclusive seed range `s1..s2`.
    #[arg(long, default_value = "0..0")]
    seeds: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `<stem>.sweep` next to the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PlotArgs {
    /// Comma-separated CSV traces.
    #[arg(long, value_delimiter = ',', required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, default_value = "grad_norm")]
    metric: String,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated legend labels; default to file stems.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long, default_value = "")]
    title: String,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure { code, error: error.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = match e.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::InvalidParameter(_)) => 2,
            Some(Error::MetricUnavailable(_)) => 4,
            _ => 1,
        };
        Failure { code, error: e }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn gen(a: GenArgs) -> CmdResult {
    let config = GeneratorConfig {
        n: a.n,
        d: a.d,
        r: a.r,
        mu: a.mu,
        l: a.l,
        coupling_scale: a.scale,
        seed: a.seed,
        well_posed: a.well_posed,
    };
    config.validate().map_err(|e| Failure::new(2, e))?;
    let instance = generate(&config)?;
    instance.save(&a.out)?;
    match reference_saddle(&instance) {
        Ok(r) => {
            let c = r.constants;
            println!(
                "L = {:.6e}  mu_x = {:.6e}  mu_y = {:.6e}  kappa_x = {:.6e}  kappa_y = {:.6e}",
                c.l, c.mu_x, c.mu_y, c.kappa_x, c.kappa_y
            );
        }
        Err(e) => {
            println!("L = {:.6e}", instance.component_smoothness());
            eprintln!("warning: {e}");
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Loads a config document; trace JSON files yield their echoed config.
fn load_config_doc(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::new(2, anyhow!("{}: {e}", path.display())))?;
    if doc.get("records").is_some() {
        if let Some(c) = doc.get_mut("config") {
            doc = c.take();
        }
    }
    Ok(doc)
}

fn stem(path: &Path) -> String {
    let s = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    s.strip_suffix(".trace").map(str::to_string).unwrap_or(s)
}

fn write_trace(trace: &Trace, dir: &Path, name: &str) -> Result<(PathBuf, PathBuf), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv = dir.join(format!("{name}.trace.csv"));
    let json = dir.join(format!("{name}.trace.json"));
    write_csv(&trace.records, &csv)?;
    write_json(trace, &json)?;
    Ok((csv, json))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run(a: RunArgs) -> CmdResult {
    let doc = load_config_doc(&a.config)?;
    let config = apply_overrides(&doc, &a.overrides)?;
    let trace = run_experiment(&config)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    let dir = a.out_dir.unwrap_or_else(|| config_dir(&a.config));
    let (csv, json) = write_trace(&trace, &dir, &stem(&a.config))?;
    println!("wrote {} and {}", csv.display(), json.display());
    if let Some(e) = &trace.metadata.aborted {
        return Err(Failure::new(3, anyhow!("solver aborted: {e}")));
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CmdResult {
    let doc = load_config_doc(&a.config)?;
    let mut base = doc.clone();
    for o in &a.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Failure::new(2, anyhow!("override `{o}` is not key=value")))?;
        harness::sweep::set_key(&mut base, k.trim(), harness::sweep::parse_value(v.trim()))?;
    }
    let axes = a.vary.iter().map(|v| v.parse::<Axis>()).collect::<Result<Vec<_>, _>>()?;
    let seeds = parse_seed_range(&a.seeds)?;
    let cells = sweep_cells(&base, &axes, &seeds)?;
    let dir = a
        .out_dir
        .unwrap_or_else(|| config_dir(&a.config).join(format!("{}.sweep", stem(&a.config))));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Failure::new(1, e))?;
    let outcomes: Vec<Result<Value, Failure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let trace = run_experiment(&cell.config)?;
                let (csv, json) = write_trace(&trace, &dir, &cell.name)?;
                Ok(serde_json::json!({
                    "name": cell.name,
                    "csv": csv,
                    "json": json,
                    "aborted": trace.metadata.aborted,
                }))
            })
            .collect()
    });
    let mut entries = Vec::with_capacity(outcomes.len());
    let mut aborted = 0;
    for o in outcomes {
        let e = o?;
        if !e["aborted"].is_null() {
            aborted += 1;
        }
        entries.push(e);
    }
    let manifest = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({ "cells": entries })).expect("manifest serializes");
    std::fs::write(&manifest, text + "\n").with_context(|| format!("writing {}", manifest.display()))?;
    println!("wrote {} traces and {}", entries.len(), manifest.display());
    if aborted > 0 {
        return Err(Failure::new(3, anyhow!("{aborted} sweep cell(s) aborted")));
    }
    Ok(())
}

fn plot(a: PlotArgs) -> CmdResult {
    let metric: Metric = a.metric.parse()?;
    if !a.labels.is_empty() && a.labels.len() != a.traces.len() {
        return Err(Failure::new(2, anyhow!("{} labels for {} traces", a.labels.len(), a.traces.len())));
    }
    let mut series = Vec::new();
    for (i, path) in a.traces.iter().enumerate() {
        let records = read_csv(path)?;
        let points: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| metric.of(r).map(|v| (r.sfo as f64, v)))
            .collect();
        if points.is_empty() {
            return Err(Failure::new(
                4,
                anyhow!("metric unavailable: `{}` has no values in {}", metric.name(), path.display()),
            ));
        }
        let label = a.labels.get(i).cloned().unwrap_or_else(|| stem(path));
        series.push(Series { label, points });
    }
    let options = PlotOptions { title: a.title, y_label: metric.name().into(), ..PlotOptions::default() };
    let svg = emit_plot(&series, &options)?;
    std::fs::write(&a.out, svg).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

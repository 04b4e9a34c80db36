//! Single experiment runs: instance, constants, schedule, solver, snapshots.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Sampling;
use crate::plgame::{
    distance_to_saddle, generate, primal_gap, primal_gradient, reference_saddle, Constants, GameMetrics,
    PLGameInstance, ReferenceSolution,
};
use crate::problem::{exact_gradient, FiniteSumProblem, Oracle, Point};
use crate::solvers::schedule::{ceil_sqrt, gda_iterations};
use crate::solvers::{
    acc_spider_run, agda_run, delta_target, gda_run, lyapunov, params_gda, params_one_sided_spider, params_svrg,
    params_two_sided_spider, spider_gda_run, svrg_gda_run, theory_catalyst_plan, CatalystOutput, CatalystPlan,
    CatalystSchedule, ControlFlow, LoopPlan, Observer, PlMode, Progress, RestartPick, RunResult, StepSizes,
};

use super::config::{Algorithm, ExperimentConfig, InstanceSource, ScheduleMode};
use super::trace::{OutputMetrics, RunMetadata, Trace, TraceRecord, LIBRARY_VERSION};

/// ChaCha stream for the initial point; the solver draws from stream 2.
const INIT_STREAM: u64 = 1;
const SOLVER_STREAM: u64 = 2;

/// Default SVRG exponent.
pub const DEFAULT_ALPHA: f64 = 2.0 / 3.0;

/// The concrete schedule a run executed with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedSchedule {
    FullGradient { steps: StepSizes, iters: usize },
    Spider { steps: StepSizes, plan: LoopPlan },
    Svrg { steps: StepSizes, plan: LoopPlan },
    Catalyst { plan: CatalystPlan },
}

impl ResolvedSchedule {
    /// Step sizes whose Lyapunov function is meaningful for the run.
    fn lyapunov_steps(&self) -> Option<StepSizes> {
        match self {
            ResolvedSchedule::FullGradient { steps, .. }
            | ResolvedSchedule::Spider { steps, .. }
            | ResolvedSchedule::Svrg { steps, .. } => Some(*steps),
            ResolvedSchedule::Catalyst { .. } => None,
        }
    }
}

/// An instance with its reference solution, when one exists.
pub struct PreparedInstance {
    pub instance: PLGameInstance,
    pub reference: Option<ReferenceSolution>,
    pub warnings: Vec<String>,
}

pub fn prepare_instance(source: &InstanceSource) -> Result<PreparedInstance> {
    let instance = match source {
        InstanceSource::File { file } => PLGameInstance::load(file)?,
        InstanceSource::Generate(g) => generate(g)?,
    };
    let mut warnings = Vec::new();
    let reference = match reference_saddle(&instance) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("reference unavailable ({e}); primal_gap, dist_saddle and lyapunov omitted"));
            None
        }
    };
    Ok(PreparedInstance { instance, reference, warnings })
}

/// Gaussian initial point with standard deviation `scale`.
pub fn initial_point(d: usize, scale: f64, seed: u64) -> Point {
    let mut rng = crate::seeded_rng(seed, INIT_STREAM);
    let mut draw = || (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
    let x = draw();
    let y = draw();
    Point::from_slices(&x, &y)
}

/// Evaluates trace metrics at a point; nothing here is billed to a solver.
pub struct MetricContext<'a> {
    pub instance: &'a PLGameInstance,
    pub reference: Option<&'a ReferenceSolution>,
    pub lyapunov_steps: Option<StepSizes>,
    gap_failed: bool,
    warnings: Vec<String>,
}

impl<'a> MetricContext<'a> {
    pub fn new(instance: &'a PLGameInstance, reference: Option<&'a ReferenceSolution>, lyapunov_steps: Option<StepSizes>) -> Self {
        MetricContext { instance, reference, lyapunov_steps, gap_failed: false, warnings: Vec::new() }
    }

    pub fn record(&mut self, sfo: u64, iter: u64, p: &Point, wall_ns: u64) -> TraceRecord {
        let grad_norm = exact_gradient(self.instance, p).map(|g| g.norm()).unwrap_or(f64::NAN);
        let (mut gap, mut dist, mut lyap) = (None, None, None);
        if let Some(r) = self.reference {
            dist = Some(distance_to_saddle(r, p).sqrt());
            if !self.gap_failed {
                match primal_gap(self.instance, r, &p.x) {
                    Ok(g) => {
                        gap = Some(g);
                        if let Some(s) = &self.lyapunov_steps {
                            lyap = lyapunov(&GameMetrics::new(self.instance, r), p, s).ok().map(|v| v.value);
                        }
                    }
                    Err(e) => {
                        self.gap_failed = true;
                        self.warnings.push(format!("primal gap unavailable from sfo {sfo} on ({e}); column omitted"));
                    }
                }
            }
        }
        TraceRecord { sfo, iter, grad_norm, primal_gap: gap, dist_saddle: dist, lyapunov: lyap, wall_ns }
    }

    pub fn output(&self, p: &Point) -> OutputMetrics {
        let grad_norm = exact_gradient(self.instance, p).map(|g| g.norm()).unwrap_or(f64::NAN);
        let (mut gap, mut dist, mut pg) = (None, None, None);
        if let Some(r) = self.reference {
            dist = Some(distance_to_saddle(r, p).sqrt());
            gap = primal_gap(self.instance, r, &p.x).ok();
            pg = primal_gradient(self.instance, r, &p.x).ok().map(|g| g.norm());
        }
        OutputMetrics { grad_norm, primal_gap: gap, dist_saddle: dist, primal_grad_norm: pg }
    }

    pub fn into_warnings(self) -> Vec<String> {
        self.warnings
    }
}

struct Snapshots<'c, 'a> {
    ctx: &'c mut MetricContext<'a>,
    records: Vec<TraceRecord>,
    every: u64,
    next: u64,
    max_sfo: u64,
    stop_at_gap: Option<f64>,
    clock: Option<Instant>,
}

impl Snapshots<'_, '_> {
    fn wall(&self) -> u64 {
        self.clock.map_or(0, |c| c.elapsed().as_nanos() as u64)
    }

    fn push(&mut self, sfo: u64, iter: u64, p: &Point) -> ControlFlow {
        let wall = self.wall();
        let r = self.ctx.record(sfo, iter, p, wall);
        self.records.push(r);
        self.next = (sfo / self.every + 1) * self.every;
        match (self.stop_at_gap, r.primal_gap) {
            (Some(t), Some(g)) if g <= t => ControlFlow::Stop,
            _ => ControlFlow::Continue,
        }
    }

    fn last_sfo(&self) -> Option<u64> {
        self.records.last().map(|r| r.sfo)
    }
}

impl Observer for Snapshots<'_, '_> {
    fn observe(&mut self, p: &Progress<'_>) -> ControlFlow {
        let mut flow = ControlFlow::Continue;
        if p.sfo >= self.next || p.sfo >= self.max_sfo {
            flow = self.push(p.sfo, p.iter, p.point);
        }
        if p.sfo >= self.max_sfo {
            flow = ControlFlow::Stop;
        }
        flow
    }
}

/// Lyapunov weight an algorithm's guarantee uses.
fn theory_lambda(algorithm: Algorithm, mode: PlMode, c: &Constants) -> f64 {
    let r = c.l * c.l / (c.mu_y * c.mu_y);
    match (algorithm, mode) {
        (Algorithm::Gda | Algorithm::Agda, PlMode::TwoSided) => 6.0 * r,
        (Algorithm::Gda | Algorithm::Agda, PlMode::OneSided) => 4.0 * r,
        (Algorithm::SvrgGda, _) => 14.0 * r,
        (Algorithm::SpiderGda, _) => 32.0 * r,
        (Algorithm::AccSpider, _) => 288.0,
    }
}

/// Builds the schedule for `config`. `g0_gap` is `g(x_0) − g*` when known;
/// theory GDA also needs `reference` to size `K` from the initial Lyapunov
/// value.
pub fn resolve_schedule(
    config: &ExperimentConfig,
    instance: &PLGameInstance,
    constants: Option<&Constants>,
    g0_gap: Option<f64>,
    init: &Point,
    reference: Option<&ReferenceSolution>,
) -> Result<ResolvedSchedule> {
    let n = instance.n();
    let m = &config.manual;
    let mode = config.pl_mode;
    let eps = config.eps;
    let g0 = m.g0_gap.or(g0_gap);
    match config.schedule {
        ScheduleMode::Theory => {
            let c = constants.ok_or_else(|| {
                Error::Config("schedule: theory needs reference constants; use schedule = manual".into())
            })?;
            match config.algorithm {
                Algorithm::Gda | Algorithm::Agda => {
                    let steps = params_gda(c.l, c.mu_x, c.mu_y, mode == PlMode::OneSided)?;
                    let r = reference.expect("constants imply a reference");
                    let v0 = lyapunov(&GameMetrics::new(instance, r), init, &steps)?.value;
                    let iters = gda_iterations(&steps, c.l, c.mu_x, c.mu_y, v0, eps, mode)?;
                    Ok(ResolvedSchedule::FullGradient { steps, iters })
                }
                Algorithm::SpiderGda => {
                    let (steps, plan) = match mode {
                        PlMode::TwoSided => params_two_sided_spider(c.l, c.mu_x, c.mu_y, n, eps)?,
                        PlMode::OneSided => params_one_sided_spider(c.l, c.mu_y, n, eps)?,
                    };
                    Ok(ResolvedSchedule::Spider { steps, plan })
                }
                Algorithm::SvrgGda => {
                    if mode == PlMode::OneSided {
                        return Err(Error::Config("pl_mode: svrg_gda has no one-sided schedule".into()));
                    }
                    let (steps, plan) = params_svrg(c.l, c.mu_x, c.mu_y, n, m.alpha.unwrap_or(DEFAULT_ALPHA), eps)?;
                    Ok(ResolvedSchedule::Svrg { steps, plan })
                }
                Algorithm::AccSpider => {
                    let gap = g0.ok_or_else(|| Error::Config("manual.g0_gap: needed when the primal gap is unavailable".into()))?;
                    let plan = theory_catalyst_plan(c.l, c.mu_x, c.mu_y, n, eps, mode, gap)?;
                    Ok(ResolvedSchedule::Catalyst { plan })
                }
            }
        }
        ScheduleMode::Manual => {
            let need = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| Error::Config(format!("manual.{name}: required when schedule = manual")))
            };
            let tau_x = need(m.tau_x, "tau_x")?;
            let tau_y = need(m.tau_y, "tau_y")?;
            let lambda = m
                .lambda
                .or_else(|| constants.map(|c| theory_lambda(config.algorithm, mode, c)))
                .unwrap_or(1.0);
            let steps = StepSizes::new(tau_x, tau_y, lambda)?;
            let sqrt_n = ceil_sqrt(n);
            let sampling = m.sampling.unwrap_or(Sampling::WithReplacement);
            let pick = m.restart_pick.unwrap_or(RestartPick::Last);
            match config.algorithm {
                Algorithm::Gda | Algorithm::Agda => {
                    Ok(ResolvedSchedule::FullGradient { steps, iters: m.k.unwrap_or(usize::MAX) })
                }
                Algorithm::SpiderGda => {
                    let plan = LoopPlan {
                        restarts: m.t.unwrap_or(1),
                        inner_iters: m.k.unwrap_or(usize::MAX),
                        epoch_length: m.m.unwrap_or(sqrt_n),
                        batch_size: m.b.unwrap_or(sqrt_n),
                        svrg_epochs: None,
                        mode,
                        sampling,
                        pick,
                    };
                    Ok(ResolvedSchedule::Spider { steps, plan })
                }
                Algorithm::SvrgGda => {
                    let epoch = m.m.unwrap_or(n);
                    let plan = LoopPlan {
                        restarts: m.t.unwrap_or(1),
                        inner_iters: epoch,
                        epoch_length: epoch,
                        batch_size: m.b.unwrap_or(1),
                        svrg_epochs: Some(m.s.unwrap_or(usize::MAX / epoch)),
                        mode,
                        sampling,
                        pick,
                    };
                    Ok(ResolvedSchedule::Svrg { steps, plan })
                }
                Algorithm::AccSpider => {
                    let l = constants.map_or_else(|| instance.component_smoothness(), |c| c.l);
                    let epoch = m.m.unwrap_or(sqrt_n);
                    let sub_plan = LoopPlan {
                        restarts: 1,
                        inner_iters: m.k.unwrap_or(epoch),
                        epoch_length: epoch,
                        batch_size: m.b.unwrap_or(sqrt_n),
                        svrg_epochs: None,
                        mode: PlMode::TwoSided,
                        sampling,
                        pick,
                    };
                    let (delta, kappa_y, mu_y) = match constants {
                        Some(c) => (delta_target(mode, c.l, c.mu_x, c.mu_y, eps).unwrap_or(eps), c.kappa_y, c.mu_y),
                        None => (eps, 1.0, l),
                    };
                    let plan = CatalystPlan {
                        beta: m.beta.unwrap_or(l / (20.0 * n as f64)),
                        gamma: m.gamma.unwrap_or(0.999),
                        outer_iters: m.k_outer.unwrap_or(usize::MAX),
                        delta,
                        kappa_y,
                        mu_y,
                        l,
                        g0_gap: g0.unwrap_or(1.0),
                        sub_steps: steps,
                        sub_plan,
                        schedule: CatalystSchedule::Practical { sub_restarts: m.t.unwrap_or(1) },
                        output: match mode {
                            PlMode::TwoSided => CatalystOutput::Last,
                            PlMode::OneSided => CatalystOutput::Uniform,
                        },
                    };
                    Ok(ResolvedSchedule::Catalyst { plan })
                }
            }
        }
    }
}

fn sfo_per_step(schedule: &ResolvedSchedule, algorithm: Algorithm) -> String {
    match (schedule, algorithm) {
        (ResolvedSchedule::FullGradient { .. }, Algorithm::Agda) => "2n (two full sweeps per step)".into(),
        (ResolvedSchedule::FullGradient { .. }, _) => "n".into(),
        (ResolvedSchedule::Spider { plan, .. }, _) => {
            format!("2B = {} per step, n per refresh every M = {} steps", 2 * plan.batch_size, plan.epoch_length)
        }
        (ResolvedSchedule::Svrg { plan, .. }, _) => {
            format!("2B = {} per step, n per anchor every M = {} steps", 2 * plan.batch_size, plan.epoch_length)
        }
        (ResolvedSchedule::Catalyst { plan }, _) => format!(
            "sub-solver 2B = {} per step, n per refresh every M = {} steps",
            2 * plan.sub_plan.batch_size,
            plan.sub_plan.epoch_length
        ),
    }
}

/// Runs one configured experiment.
///
/// A solver abort is not an error here: the trace keeps the snapshots taken
/// so far and records the cause in `metadata.aborted`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Trace> {
    config.validate()?;
    let prepared = prepare_instance(&config.instance)?;
    let instance = &prepared.instance;
    let reference = prepared.reference.as_ref();
    let constants = reference.map(|r| r.constants);
    let n = instance.n();
    let d = instance.d();
    let mut echo = config.clone();
    echo.snapshot_every = Some(config.snapshot_every.unwrap_or(n as u64));
    let every = echo.snapshot_every.expect("set above");

    let init = initial_point(d, config.init_scale, config.seed);
    let g0_gap = reference.and_then(|r| primal_gap(instance, r, &init.x).ok());
    let schedule = resolve_schedule(config, instance, constants.as_ref(), g0_gap, &init, reference)?;

    let mut ctx = MetricContext::new(instance, reference, schedule.lyapunov_steps());
    let mut snaps = Snapshots {
        ctx: &mut ctx,
        records: Vec::new(),
        every,
        next: 0,
        max_sfo: config.max_sfo,
        stop_at_gap: config.stop_at_gap,
        clock: config.record_wall_time.then(Instant::now),
    };
    let mut metadata = RunMetadata {
        algorithm: config.algorithm.name().into(),
        sfo_per_step: sfo_per_step(&schedule, config.algorithm),
        ..RunMetadata::default()
    };
    let initial_flow = snaps.push(0, 0, &init);

    if config.max_sfo > 0 && initial_flow == ControlFlow::Continue {
        let mut rng = crate::seeded_rng(config.seed, SOLVER_STREAM);
        let mut oracle = Oracle::new(instance);
        let result: Result<RunResult> = match &schedule {
            ResolvedSchedule::FullGradient { steps, iters } => match config.algorithm {
                Algorithm::Agda => agda_run(&mut oracle, &init, *iters, steps, config.pl_mode, &mut rng, &mut snaps),
                _ => gda_run(&mut oracle, &init, *iters, steps, config.pl_mode, &mut rng, &mut snaps),
            },
            ResolvedSchedule::Spider { steps, plan } => spider_gda_run(&mut oracle, &init, plan, steps, &mut rng, &mut snaps),
            ResolvedSchedule::Svrg { steps, plan } => svrg_gda_run(&mut oracle, &init, plan, steps, &mut rng, &mut snaps),
            ResolvedSchedule::Catalyst { plan } => acc_spider_run(&mut oracle, &init, plan, &mut rng, &mut snaps),
        };
        let counters = oracle.counters();
        metadata.sfo = counters.sfo;
        metadata.full_grad_evals = counters.full_grad_evals;
        match result {
            Ok(res) => {
                if snaps.last_sfo() != Some(res.counters.sfo) {
                    snaps.push(res.counters.sfo, res.iterations, &res.last);
                }
                metadata.iterations = res.iterations;
                metadata.stopped_early = res.stopped_early;
                metadata.catalyst = res.catalyst;
                metadata.output = Some(snaps.ctx.output(&res.output));
            }
            Err(e) => {
                log::error!("solver aborted: {e}");
                metadata.aborted = Some(e.to_string());
                metadata.iterations = snaps.records.last().map_or(0, |r| r.iter);
            }
        }
    } else {
        metadata.output = Some(snaps.ctx.output(&init));
    }

    let records = snaps.records;
    let mut warnings = prepared.warnings.clone();
    warnings.extend(ctx.into_warnings());
    Ok(Trace {
        version: LIBRARY_VERSION.into(),
        config: echo,
        constants,
        schedule: Some(schedule),
        metadata,
        warnings,
        records,
    })
}

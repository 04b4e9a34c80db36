use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{exact_gradient, prox_regularize, swap_negate, FiniteSumProblem, Oracle, Point};

use super::schedule::ceil_count;
use super::{delta_k, draw_pick, spider_gda_run, ControlFlow, LoopPlan, Observer, Progress, RestartPick, RunResult, StepSizes};

/// Smallest per-round precision used; smaller values are clamped with a warning.
pub const DELTA_FLOOR: f64 = 1e-300;

/// How the number of sub-solver restarts `T_k` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalystSchedule {
    /// `T_k = ⌈ln(1/δ_k)⌉` from the precision schedule.
    Theory,
    /// A fixed `T_k` for every outer round.
    Practical { sub_restarts: usize },
}

/// Which point the outer loop returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalystOutput {
    /// `(x_K, y_K)`.
    Last,
    /// `(x_k, y_k)` uniformly from `k = 0..K−1`.
    Uniform,
}

/// Catalyst outer-loop parameters.
///
/// `sub_steps` is expressed in original coordinates: `tau_x` is applied to
/// `x` and `tau_y` to `y` inside every sub-solve, even though the sub-solver
/// runs on the role-swapped problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalystPlan {
    pub beta: f64,
    pub gamma: f64,
    pub outer_iters: usize,
    pub delta: f64,
    pub kappa_y: f64,
    pub mu_y: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub g0_gap: f64,
    pub sub_steps: StepSizes,
    /// Sub-solver loop; `restarts` is replaced by `T_k` in theory mode.
    pub sub_plan: LoopPlan,
    pub schedule: CatalystSchedule,
    pub output: CatalystOutput,
}

impl CatalystPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.outer_iters == 0 {
            return bad("K_outer must be >= 1".into());
        }
        if let CatalystSchedule::Practical { sub_restarts: 0 } = self.schedule {
            return bad("sub-solver restarts must be >= 1".into());
        }
        if self.schedule == CatalystSchedule::Theory {
            for (name, v) in [("delta", self.delta), ("kappa_y", self.kappa_y), ("mu_y", self.mu_y), ("L", self.l)] {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        self.sub_steps.validate()
    }

    /// Sub-solver restarts for a round with precision `delta_k`.
    pub fn sub_restarts(&self, delta_k: f64) -> usize {
        match self.schedule {
            CatalystSchedule::Theory => ceil_count((1.0 / delta_k).ln()),
            CatalystSchedule::Practical { sub_restarts } => sub_restarts,
        }
    }
}

/// Per-round record of an AccSPIDER-GDA run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalystTrace {
    /// `δ_k`; empty in practical mode.
    pub delta_k: Vec<f64>,
    /// Sub-solver restarts `T_k`.
    pub sub_restarts: Vec<usize>,
    /// Sub-problem gradient norm at the warm start and at the returned point.
    pub sub_grad_norms: Vec<[f64; 2]>,
    /// Rounds whose `δ_k` was clamped to the floor.
    pub clamped: usize,
}

/// Presents sub-solver progress in original coordinates.
struct Unswap<'a> {
    inner: &'a mut dyn Observer,
    iter_offset: u64,
}

impl Observer for Unswap<'_> {
    fn observe(&mut self, progress: &Progress<'_>) -> ControlFlow {
        let point = progress.point.swapped();
        self.inner.observe(&Progress {
            sfo: progress.sfo,
            iter: self.iter_offset + progress.iter,
            point: &point,
        })
    }
}

/// AccSPIDER-GDA: Catalyst acceleration around SPIDER-GDA.
///
/// Round `k` regularises `f` by `β/2‖x − u_k‖²`, swaps roles so the
/// regularised variable becomes the maximiser, and solves the result with
/// SPIDER-GDA warm-started at `(x_k, y_k)`. Then
/// `u_{k+1} = x_{k+1} + γ(x_{k+1} − x_k)`. SFO counts from sub-solves bill to
/// `oracle`.
pub fn acc_spider_run<P: FiniteSumProblem + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    init: &Point,
    plan: &CatalystPlan,
    rng: &mut crate::Rng,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    plan.validate()?;
    let problem = oracle.problem();
    init.check_dims(problem)?;
    let swapped_steps = StepSizes {
        tau_x: plan.sub_steps.tau_y,
        tau_y: plan.sub_steps.tau_x,
        lambda: plan.sub_steps.lambda,
    };
    let pick = match plan.output {
        CatalystOutput::Last => None,
        CatalystOutput::Uniform => draw_pick(rng, plan.outer_iters, RestartPick::Uniform),
    };

    let mut p = init.clone();
    let mut x_prev = init.x.clone();
    let mut u = init.x.clone();
    let mut trace = CatalystTrace::default();
    let mut picked = None;
    let mut done = 0u64;
    let mut stopped_early = false;
    let mut restart_points = Vec::new();

    for k in 0..plan.outer_iters {
        if pick == Some(k) {
            picked = Some(p.clone());
        }
        let delta_k = match plan.schedule {
            CatalystSchedule::Theory => {
                let step_sq = (&p.x - &x_prev).norm_squared();
                let mut d = delta_k(k, step_sq, plan.delta, plan.kappa_y, plan.beta, plan.l, plan.mu_y, plan.g0_gap);
                if !(d >= DELTA_FLOOR) {
                    log::warn!("delta_{k} = {d:e} below {DELTA_FLOOR:e}; clamping");
                    d = DELTA_FLOOR;
                    trace.clamped += 1;
                }
                trace.delta_k.push(d);
                d
            }
            CatalystSchedule::Practical { .. } => f64::NAN,
        };
        let sub_plan = LoopPlan { restarts: plan.sub_restarts(delta_k), ..plan.sub_plan };
        trace.sub_restarts.push(sub_plan.restarts);

        let fk = prox_regularize(problem, plan.beta, u.clone())?;
        let sub = swap_negate(fk);
        let warm = p.swapped();
        let start_norm = exact_gradient(&sub, &warm)?.norm();
        let mut sub_oracle = Oracle::with_counters(&sub, oracle.counters());
        let mut adapter = Unswap { inner: &mut *observer, iter_offset: done };
        let res = spider_gda_run(&mut sub_oracle, &warm, &sub_plan, &swapped_steps, rng, &mut adapter).map_err(
            |e| match e {
                Error::Diverged { step } => Error::SubsolverDiverged { outer: k, step },
                other => other,
            },
        )?;
        oracle.set_counters(sub_oracle.counters());
        done += res.iterations;
        let end_norm = exact_gradient(&sub, &res.output)?.norm();
        trace.sub_grad_norms.push([start_norm, end_norm]);

        if res.stopped_early {
            p = res.last.swapped();
            stopped_early = true;
            break;
        }
        x_prev.copy_from(&p.x);
        p = res.output.swapped();
        u = &p.x + (&p.x - &x_prev) * plan.gamma;
        restart_points.push(p.clone());
    }

    let output = match picked {
        Some(q) if !stopped_early => q,
        _ => p.clone(),
    };
    Ok(RunResult {
        output,
        last: p,
        counters: oracle.counters(),
        restart_points,
        iterations: done,
        stopped_early,
        catalyst: Some(trace),
    })
}

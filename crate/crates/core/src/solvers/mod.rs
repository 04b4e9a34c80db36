//! Gradient descent-ascent solvers and their parameter schedules.
//!
//! Every solver takes an [`Oracle`](crate::Oracle) (so SFO accounting flows
//! through the caller), an initial point, its plan, an RNG and an
//! [`Observer`]. Observers see each iterate after it is produced and may stop
//! the run; they cannot touch solver state.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Sampling;
use crate::problem::{OracleCounters, Point};

mod catalyst;
mod gda;
mod lyapunov;
pub mod schedule;
mod spider;
mod svrg;

pub use catalyst::{acc_spider_run, CatalystOutput, CatalystPlan, CatalystSchedule, CatalystTrace};
pub use gda::{agda_run, gda_run};
pub use lyapunov::{lyapunov, LyapunovValue, PrimalReference};
pub use schedule::{
    delta_k, delta_target, params_gda, params_one_sided_spider, params_svrg, params_two_sided_spider,
    svrg_nu, theory_catalyst_plan,
};
pub use spider::spider_gda_run;
pub use svrg::svrg_gda_run;

/// Step sizes and the Lyapunov weight `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub tau_x: f64,
    pub tau_y: f64,
    pub lambda: f64,
}

impl StepSizes {
    pub fn new(tau_x: f64, tau_y: f64, lambda: f64) -> Result<Self> {
        let s = StepSizes { tau_x, tau_y, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_x", self.tau_x), ("tau_y", self.tau_y), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `λτ_x/τ_y`, the weight of the dual gap in the Lyapunov function.
    pub fn dual_weight(&self) -> f64 {
        self.lambda * self.tau_x / self.tau_y
    }
}

/// Which PL regime a schedule targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlMode {
    #[default]
    TwoSided,
    OneSided,
}

/// How a restart picks the next starting point from its inner iterates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartPick {
    /// Uniformly among the recorded inner iterates (the analysed rule).
    #[default]
    Uniform,
    /// The final inner iterate.
    Last,
}

/// Loop lengths and batch sizes for the stochastic solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopPlan {
    /// Restarts `T`.
    pub restarts: usize,
    /// Inner iterations `K` per restart (SPIDER-GDA).
    pub inner_iters: usize,
    /// Epoch length `M`.
    pub epoch_length: usize,
    /// Mini-batch size `B`.
    pub batch_size: usize,
    /// Anchor epochs `S` per round (SVRG-GDA only).
    pub svrg_epochs: Option<usize>,
    pub mode: PlMode,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub pick: RestartPick,
}

impl LoopPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.restarts == 0 || self.inner_iters == 0 || self.epoch_length == 0 || self.batch_size == 0 {
            return bad(format!("loop plan entries must be positive: {self:?}"));
        }
        if self.svrg_epochs == Some(0) {
            return bad("S must be positive".into());
        }
        if self.batch_size > n {
            return bad(format!("batch size {} exceeds n = {n}", self.batch_size));
        }
        if self.mode == PlMode::OneSided && self.restarts != 1 {
            return bad("one-sided plans use a single restart".into());
        }
        Ok(())
    }
}

/// Snapshot handed to an [`Observer`].
#[derive(Clone, Copy, Debug)]
pub struct Progress<'a> {
    /// SFO billed so far in this run.
    pub sfo: u64,
    /// Parameter updates performed so far.
    pub iter: u64,
    pub point: &'a Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlFlow {
    Continue,
    Stop,
}

pub trait Observer {
    fn observe(&mut self, progress: &Progress<'_>) -> ControlFlow;
}

/// Observer that never stops the run.
#[derive(Clone, Copy, Debug, Default)]
pub struct Unobserved;

impl Observer for Unobserved {
    fn observe(&mut self, _: &Progress<'_>) -> ControlFlow {
        ControlFlow::Continue
    }
}

impl<F: FnMut(&Progress<'_>) -> ControlFlow> Observer for F {
    fn observe(&mut self, progress: &Progress<'_>) -> ControlFlow {
        self(progress)
    }
}

/// Outcome of a solver run.
#[derive(Clone, Debug)]
pub struct RunResult {
    /// The point the algorithm returns (per its output option).
    pub output: Point,
    /// The most recent iterate.
    pub last: Point,
    pub counters: OracleCounters,
    /// Start point selected at the end of every completed restart.
    pub restart_points: Vec<Point>,
    pub iterations: u64,
    /// The observer stopped the run before the plan completed.
    pub stopped_early: bool,
    pub catalyst: Option<CatalystTrace>,
}

/// Draws the index selected by a restart before its loop starts. Fixing the
/// index up front is distributionally identical to storing every candidate.
fn draw_pick(rng: &mut crate::Rng, candidates: usize, pick: RestartPick) -> Option<usize> {
    match pick {
        RestartPick::Uniform => Some(rng.random_range(0..candidates)),
        RestartPick::Last => None,
    }
}

fn check_finite(p: &Point, step: u64) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

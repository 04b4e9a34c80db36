//! Stochastic variance-reduced gradient descent-ascent for finite-sum minimax
//! problems under Polyak–Łojasiewicz conditions.
//!
//! The crate is organised bottom-up:
//!
//! - [`problem`]: the finite-sum oracle contract, SFO accounting and the
//!   proximal / role-swap wrappers used by the Catalyst outer loop.
//! - [`plgame`]: the quadratic two-player PL game generator together with its
//!   reference saddle point and primal-gap metrics.
//! - [`estimators`]: SPIDER (recursive) and SVRG (anchored) gradient estimators.
//! - [`solvers`]: GDA, AGDA, SVRG-GDA, SPIDER-GDA and AccSPIDER-GDA plus the
//!   parameter schedules their convergence guarantees prescribe.
//! - [`harness`]: experiment configs, metric traces, CSV/JSON/SVG output.

// `!(v > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod plgame;
pub mod problem;
pub mod solvers;

pub use error::{Error, Result};
pub use estimators::{BatchDraw, Sampling, SpiderState, SvrgState};
pub use plgame::{Constants, GameMetrics, GeneratorConfig, PLGameInstance, ReferenceSolution};
pub use problem::{
    exact_gradient, prox_regularize, swap_negate, FiniteSumProblem, GradPair, Oracle,
    OracleCounters, Point, ProxRegularized, SwappedProblem,
};
pub use solvers::{
    CatalystPlan, ControlFlow, LoopPlan, Observer, PlMode, Progress, RestartPick, RunResult,
    StepSizes,
};

/// Seedable generator used for every random draw in the crate.
///
/// ChaCha8 is counter based, so separate streams of one seed never overlap.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG for `seed` on the given ChaCha `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

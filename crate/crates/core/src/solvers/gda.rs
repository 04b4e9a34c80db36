use crate::error::Result;
use crate::problem::{FiniteSumProblem, Oracle, Point};

use super::{check_finite, draw_pick, ControlFlow, Observer, PlMode, Progress, RestartPick, RunResult, StepSizes};

/// Simultaneous full-gradient descent-ascent; `n` SFO per step.
///
/// Two-sided mode returns `(x_K, y_K)`; one-sided mode returns an iterate
/// drawn uniformly from `k = 0..K−1`. The RNG is only consumed in one-sided
/// mode.
pub fn gda_run<P: FiniteSumProblem + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    init: &Point,
    iters: usize,
    steps: &StepSizes,
    mode: PlMode,
    rng: &mut crate::Rng,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    full_gradient_run(oracle, init, iters, steps, mode, false, rng, observer)
}

/// Alternating variant: the ascent step uses the gradient at `(x_{k+1}, y_k)`,
/// costing a second sweep, so `2n` SFO per step.
pub fn agda_run<P: FiniteSumProblem + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    init: &Point,
    iters: usize,
    steps: &StepSizes,
    mode: PlMode,
    rng: &mut crate::Rng,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    full_gradient_run(oracle, init, iters, steps, mode, true, rng, observer)
}

#[allow(clippy::too_many_arguments)]
fn full_gradient_run<P: FiniteSumProblem + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    init: &Point,
    iters: usize,
    steps: &StepSizes,
    mode: PlMode,
    alternating: bool,
    rng: &mut crate::Rng,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    steps.validate()?;
    if iters == 0 {
        return Err(crate::Error::InvalidParameter("K must be >= 1".into()));
    }
    init.check_dims(oracle.problem())?;
    let pick = match mode {
        PlMode::TwoSided => None,
        PlMode::OneSided => draw_pick(rng, iters, RestartPick::Uniform),
    };
    let mut p = init.clone();
    let mut picked = None;
    let mut stopped_early = false;
    let mut done = 0u64;
    for k in 0..iters {
        if pick == Some(k) {
            picked = Some(p.clone());
        }
        let g = oracle.full_grad(&p)?;
        p.x.axpy(-steps.tau_x, &g.gx, 1.0);
        if alternating {
            let g2 = oracle.full_grad(&p)?;
            p.y.axpy(steps.tau_y, &g2.gy, 1.0);
        } else {
            p.y.axpy(steps.tau_y, &g.gy, 1.0);
        }
        done += 1;
        check_finite(&p, done)?;
        let progress = Progress { sfo: oracle.counters().sfo, iter: done, point: &p };
        if observer.observe(&progress) == ControlFlow::Stop {
            stopped_early = k + 1 < iters;
            break;
        }
    }
    let output = match picked {
        Some(q) if !stopped_early => q,
        _ => p.clone(),
    };
    Ok(RunResult {
        output,
        last: p,
        counters: oracle.counters(),
        restart_points: Vec::new(),
        iterations: done,
        stopped_early,
        catalyst: None,
    })
}

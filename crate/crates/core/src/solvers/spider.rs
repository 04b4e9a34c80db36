use crate::error::Result;
use crate::estimators::SpiderState;
use crate::problem::{FiniteSumProblem, Oracle, Point};

use super::{check_finite, draw_pick, ControlFlow, LoopPlan, Observer, Progress, RunResult, StepSizes};

/// SPIDER-GDA with restarts.
///
/// Each restart runs `K` simultaneous updates driven by the recursive
/// estimator (full refresh whenever `k mod M = 0`) and then selects the next
/// start among the iterates `k = 0..K−1`. The returned output is the start
/// selected by the final restart; in one-sided plans (`T = 1`) that is a
/// uniform iterate. If the observer stops the run, the output is the current
/// iterate.
pub fn spider_gda_run<P: FiniteSumProblem + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    init: &Point,
    plan: &LoopPlan,
    steps: &StepSizes,
    rng: &mut crate::Rng,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    steps.validate()?;
    plan.validate(oracle.problem().n())?;
    init.check_dims(oracle.problem())?;
    let mut est = SpiderState::new(plan.epoch_length, plan.batch_size, plan.sampling)?;
    let mut start = init.clone();
    let mut p = init.clone();
    let mut prev = init.clone();
    let mut restart_points = Vec::new();
    let mut done = 0u64;
    let mut stopped_early = false;

    'outer: for _ in 0..plan.restarts {
        p.copy_from(&start);
        prev.copy_from(&start);
        let pick = draw_pick(rng, plan.inner_iters, plan.pick);
        let mut picked = None;
        for k in 0..plan.inner_iters {
            if pick == Some(k) {
                picked = Some(p.clone());
            }
            let g = est.advance(k, oracle, &p, &prev, rng)?;
            prev.copy_from(&p);
            p.x.axpy(-steps.tau_x, &g.gx, 1.0);
            p.y.axpy(steps.tau_y, &g.gy, 1.0);
            done += 1;
            check_finite(&p, done)?;
            let progress = Progress { sfo: oracle.counters().sfo, iter: done, point: &p };
            if observer.observe(&progress) == ControlFlow::Stop {
                stopped_early = true;
                break 'outer;
            }
        }
        start = picked.unwrap_or_else(|| p.clone());
        restart_points.push(start.clone());
    }

    Ok(RunResult {
        output: if stopped_early { p.clone() } else { start },
        last: p,
        counters: oracle.counters(),
        restart_points,
        iterations: done,
        stopped_early,
        catalyst: None,
    })
}

use crate::error::{Error, Result};
use crate::estimators::SvrgState;
use crate::problem::{FiniteSumProblem, Oracle, Point};

use super::{check_finite, draw_pick, ControlFlow, LoopPlan, Observer, Progress, RunResult, StepSizes};

/// SVRG-GDA.
///
/// Each of the `T` rounds runs `S` anchor epochs of `M` steps; every epoch
/// re-anchors at the last iterate of the previous one. The next round starts
/// from an iterate selected among all `S·M` recorded ones. `inner_iters` is
/// ignored; the epoch length is `M`.
pub fn svrg_gda_run<P: FiniteSumProblem + ?Sized>(
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
    let epochs = plan
        .svrg_epochs
        .ok_or_else(|| Error::InvalidParameter("SVRG plans need S".into()))?;
    let m = plan.epoch_length;
    let mut est = SvrgState::new(plan.batch_size, plan.sampling)?;
    let mut start = init.clone();
    let mut p = init.clone();
    let mut restart_points = Vec::new();
    let mut done = 0u64;
    let mut stopped_early = false;

    'outer: for _ in 0..plan.restarts {
        p.copy_from(&start);
        let pick = draw_pick(rng, epochs * m, plan.pick);
        let mut picked = None;
        for s in 0..epochs {
            est.set_anchor(oracle, &p)?;
            for k in 0..m {
                if pick == Some(s * m + k) {
                    picked = Some(p.clone());
                }
                let g = est.step(oracle, &p, rng)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Sampling;
    use crate::plgame::{generate, GeneratorConfig};
    use crate::problem::FnProblem;
    use crate::solvers::{gda_run, PlMode, RestartPick, Unobserved};

    fn plan(s: usize, m: usize, b: usize) -> LoopPlan {
        LoopPlan {
            restarts: 1,
            inner_iters: m,
            epoch_length: m,
            batch_size: b,
            svrg_epochs: Some(s),
            mode: PlMode::TwoSided,
            sampling: Sampling::WithoutReplacement,
            pick: RestartPick::Last,
        }
    }

    #[test]
    fn full_batch_matches_gda() {
        let inst =
            generate(&GeneratorConfig { n: 20, d: 5, r: 2, ..GeneratorConfig::reference_setting(0.05, 8) }).unwrap();
        let s = StepSizes::new(0.05, 0.3, 1.0).unwrap();
        let init = Point::from_slices(&[1.0, -1.0, 0.5, 0.2, 0.0], &[0.3, 0.1, -0.4, 1.0, 0.5]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut rng = crate::seeded_rng(3, 0);
        let mut rec_a = |p: &Progress<'_>| {
            a.push(p.point.clone());
            ControlFlow::Continue
        };
        gda_run(&mut Oracle::new(&inst), &init, 40, &s, PlMode::TwoSided, &mut rng, &mut rec_a).unwrap();
        let mut rec_b = |p: &Progress<'_>| {
            b.push(p.point.clone());
            ControlFlow::Continue
        };
        svrg_gda_run(&mut Oracle::new(&inst), &init, &plan(4, 10, 20), &s, &mut rng, &mut rec_b).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!(p.dist_sq(q).sqrt() <= 1e-12);
        }
    }

    #[test]
    fn round_cost() {
        let f = FnProblem::new(12, 1, 1, |i, x, y, gx, gy| {
            gx[0] = x[0] + i as f64 * 1e-3;
            gy[0] = -y[0];
        });
        let s = StepSizes::new(0.01, 0.01, 1.0).unwrap();
        let pl = LoopPlan { sampling: Sampling::WithReplacement, restarts: 2, ..plan(3, 5, 2) };
        let r = svrg_gda_run(&mut Oracle::new(&f), &Point::from_slices(&[1.0], &[1.0]), &pl, &s, &mut crate::seeded_rng(0, 0), &mut Unobserved)
            .unwrap();
        // S·(n + 2B·M) per round
        assert_eq!(r.counters.sfo, 2 * 3 * (12 + 2 * 2 * 5));
        assert_eq!(r.iterations, 2 * 3 * 5);
    }

    #[test]
    fn stationary_anchor_stays() {
        let f = FnProblem::new(6, 2, 2, |i, x, y, gx, gy| {
            // components cancel in the mean and vanish at the origin
            let w = i as f64 - 2.5;
            gx[0] = w * x[0];
            gx[1] = w * x[1];
            gy[0] = w * y[0];
            gy[1] = w * y[1];
        });
        let s = StepSizes::new(0.1, 0.1, 1.0).unwrap();
        let origin = Point::zeros(2, 2);
        let pl = LoopPlan { sampling: Sampling::WithReplacement, pick: RestartPick::Uniform, ..plan(2, 4, 1) };
        let r = svrg_gda_run(&mut Oracle::new(&f), &origin, &pl, &s, &mut crate::seeded_rng(0, 0), &mut Unobserved).unwrap();
        assert_eq!(r.output, origin);
        assert_eq!(r.last, origin);
    }

    #[test]
    fn requires_epoch_count() {
        let f = FnProblem::new(3, 1, 1, |_, _, _, gx, gy| {
            gx[0] = 0.0;
            gy[0] = 0.0;
        });
        let s = StepSizes::new(0.1, 0.1, 1.0).unwrap();
        let pl = LoopPlan { svrg_epochs: None, ..plan(1, 2, 1) };
        assert!(svrg_gda_run(&mut Oracle::new(&f), &Point::zeros(1, 1), &pl, &s, &mut crate::seeded_rng(0, 0), &mut Unobserved).is_err());
    }
}

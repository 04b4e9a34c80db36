//! Parameter schedules attached to each convergence guarantee.
//!
//! Counts of the form `⌈v⌉` go through [`ceil_count`], which snaps values
//! within 1e-9 relative of an integer onto it before taking the ceiling, so
//! that e.g. `2/(μ_x τ_x)` with `τ_x = 0.2/768` gives 7680 and not 7681.
//! Logarithms are natural. Restart counts clamp to at least 1.

use crate::error::{Error, Result};
use crate::estimators::Sampling;

use super::{CatalystOutput, CatalystPlan, CatalystSchedule, LoopPlan, PlMode, RestartPick, StepSizes};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `⌈v⌉` with a relative snap tolerance of 1e-9, clamped to at least 1.
pub fn ceil_count(v: f64) -> usize {
    let r = v.round();
    let c = if (v - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { v.ceil() };
    if c >= usize::MAX as f64 {
        usize::MAX
    } else {
        (c as usize).max(1)
    }
}

/// `⌈ln(1/ε)⌉`, at least 1.
pub fn restart_count(eps: f64) -> usize {
    if eps >= 1.0 {
        1
    } else {
        ceil_count((1.0 / eps).ln())
    }
}

/// `⌈√n⌉` computed in integers.
pub fn ceil_sqrt(n: usize) -> usize {
    let mut s = (n as f64).sqrt() as usize;
    while s * s > n {
        s -= 1;
    }
    while s * s < n {
        s += 1;
    }
    s
}

/// Schedule for SPIDER-GDA under two-sided PL: `M = B = ⌈√n⌉`,
/// `τ_y = 1/(5L)`, `λ = 32L²/μ_y²`, `τ_x = τ_y/(24λ)`,
/// `K = ⌈2/(μ_x τ_x)⌉`, `T = ⌈ln(1/ε)⌉`.
pub fn params_two_sided_spider(l: f64, mu_x: f64, mu_y: f64, n: usize, eps: f64) -> Result<(StepSizes, LoopPlan)> {
    positive("mu_x", mu_x)?;
    let steps = spider_steps(l, mu_y, n, eps)?;
    let m = ceil_sqrt(n);
    let plan = LoopPlan {
        restarts: restart_count(eps),
        inner_iters: ceil_count(2.0 / (mu_x * steps.tau_x)),
        epoch_length: m,
        batch_size: m,
        svrg_epochs: None,
        mode: PlMode::TwoSided,
        sampling: Sampling::WithReplacement,
        pick: RestartPick::Uniform,
    };
    Ok((steps, plan))
}

fn spider_steps(l: f64, mu_y: f64, n: usize, eps: f64) -> Result<StepSizes> {
    positive("L", l)?;
    positive("mu_y", mu_y)?;
    positive("eps", eps)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let tau_y = 1.0 / (5.0 * l);
    let lambda = 32.0 * l * l / (mu_y * mu_y);
    StepSizes::new(tau_y / (24.0 * lambda), tau_y, lambda)
}

/// Schedule for SPIDER-GDA under one-sided PL: the two-sided step sizes and
/// batch sizes, `T = 1`, `K = ⌈64/(τ_x ε²)⌉`, uniform output.
pub fn params_one_sided_spider(l: f64, mu_y: f64, n: usize, eps: f64) -> Result<(StepSizes, LoopPlan)> {
    let steps = spider_steps(l, mu_y, n, eps)?;
    let m = ceil_sqrt(n);
    let plan = LoopPlan {
        restarts: 1,
        inner_iters: ceil_count(64.0 / (steps.tau_x * eps * eps)),
        epoch_length: m,
        batch_size: m,
        svrg_epochs: None,
        mode: PlMode::OneSided,
        sampling: Sampling::WithReplacement,
        pick: RestartPick::Uniform,
    };
    Ok((steps, plan))
}

/// Full-gradient GDA step sizes. Two-sided: `τ_y = 1/L`, `λ = 6L²/μ_y²`,
/// `τ_x = τ_y/(22λ)`. One-sided: `λ = 4L²/μ_y²`, `τ_x = τ_y/(18λ)`.
pub fn params_gda(l: f64, mu_x: f64, mu_y: f64, one_sided: bool) -> Result<StepSizes> {
    positive("L", l)?;
    positive("mu_y", mu_y)?;
    if !one_sided {
        positive("mu_x", mu_x)?;
    }
    let tau_y = 1.0 / l;
    let (lambda, div) = if one_sided {
        (4.0 * l * l / (mu_y * mu_y), 18.0)
    } else {
        (6.0 * l * l / (mu_y * mu_y), 22.0)
    };
    StepSizes::new(tau_y / (div * lambda), tau_y, lambda)
}

/// Iteration count for full-gradient GDA reaching `ε` from Lyapunov value `v0`.
///
/// Two-sided: `V_K ≤ (1 − μ_xτ_x/2)^K V_0 ≤ ε`. One-sided: the averaged
/// squared gradient bound `288L³V_0/(Kμ_y²) ≤ ε²`.
pub fn gda_iterations(steps: &StepSizes, l: f64, mu_x: f64, mu_y: f64, v0: f64, eps: f64, mode: PlMode) -> Result<usize> {
    positive("eps", eps)?;
    let v0 = v0.max(f64::MIN_POSITIVE);
    match mode {
        PlMode::TwoSided => {
            positive("mu_x", mu_x)?;
            let rate = mu_x * steps.tau_x / 2.0;
            if v0 <= eps {
                return Ok(1);
            }
            Ok(ceil_count((v0 / eps).ln() / -(1.0 - rate).ln()))
        }
        PlMode::OneSided => Ok(ceil_count(288.0 * l.powi(3) * v0 / (mu_y * mu_y * eps * eps))),
    }
}

/// `ν = 1/(176(e − 1))`.
pub fn svrg_nu() -> f64 {
    1.0 / (176.0 * (std::f64::consts::E - 1.0))
}

/// Schedule for SVRG-GDA: `τ_y = ν/(Lnᵅ)`, `λ = 14L²/μ_y²`,
/// `τ_x = τ_y/(22λ)`, `B = 1`, `M = ⌊n^{3α/2}/(2ν)⌋`,
/// `S = ⌈⌈8/(μ_xτ_x)⌉ / M⌉`, `T = ⌈ln(1/ε)⌉`.
pub fn params_svrg(l: f64, mu_x: f64, mu_y: f64, n: usize, alpha: f64, eps: f64) -> Result<(StepSizes, LoopPlan)> {
    positive("L", l)?;
    positive("mu_x", mu_x)?;
    positive("mu_y", mu_y)?;
    positive("eps", eps)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let nu = svrg_nu();
    let nf = n as f64;
    let tau_y = nu / (l * nf.powf(alpha));
    let lambda = 14.0 * l * l / (mu_y * mu_y);
    let steps = StepSizes::new(tau_y / (22.0 * lambda), tau_y, lambda)?;
    let m = ((nf.powf(1.5 * alpha) / (2.0 * nu)).floor() as usize).max(1);
    let total = ceil_count(8.0 / (mu_x * steps.tau_x));
    let plan = LoopPlan {
        restarts: restart_count(eps),
        inner_iters: m,
        epoch_length: m,
        batch_size: 1,
        svrg_epochs: Some(total.div_ceil(m)),
        mode: PlMode::TwoSided,
        sampling: Sampling::WithReplacement,
        pick: RestartPick::Uniform,
    };
    Ok((steps, plan))
}

/// Global sub-problem precision `δ`.
///
/// Two-sided: `μ_x ε / (11(μ_x + 4L)L)`. One-sided: `ε² / (8Lκ_y(22μ_y + 1))`.
pub fn delta_target(mode: PlMode, l: f64, mu_x: f64, mu_y: f64, eps: f64) -> Result<f64> {
    positive("L", l)?;
    positive("eps", eps)?;
    match mode {
        PlMode::TwoSided => {
            positive("mu_x", mu_x)?;
            Ok(mu_x * eps / (11.0 * (mu_x + 4.0 * l) * l))
        }
        PlMode::OneSided => {
            positive("mu_y", mu_y)?;
            let kappa_y = l / mu_y;
            Ok(eps * eps / (8.0 * l * kappa_y * (22.0 * mu_y + 1.0)))
        }
    }
}

/// Per-round precision `δ_k`.
///
/// `k = 0`: `δμ_y / (14472κ_y² (g(x_0) − g*))`. `k ≥ 1`:
/// `(1/(7236κ_y²)) · min{1/4, (β − L)μ_yδ / (16β²‖x_k − x_{k−1}‖²)}`, where
/// a zero step makes the second term infinite. A non-positive initial gap is
/// replaced by machine epsilon.
#[allow(clippy::too_many_arguments)]
pub fn delta_k(k: usize, step_sq: f64, delta: f64, kappa_y: f64, beta: f64, l: f64, mu_y: f64, g0_gap: f64) -> f64 {
    let base = 1.0 / (7236.0 * kappa_y * kappa_y);
    if k == 0 {
        let gap = if g0_gap > 0.0 {
            g0_gap
        } else {
            log::warn!("non-positive initial gap {g0_gap:e}; using machine epsilon");
            f64::EPSILON
        };
        return delta * mu_y / (14472.0 * kappa_y * kappa_y * gap);
    }
    let second = if step_sq > 0.0 {
        (beta - l) * mu_y * delta / (16.0 * beta * beta * step_sq)
    } else {
        f64::INFINITY
    };
    base * second.min(0.25)
}

/// Catalyst plan with `β = 2L`, `γ = 0` and SPIDER-GDA sub-solves.
///
/// The sub-solver step sizes are stated in original coordinates: `x` (the
/// max-variable of the swapped sub-problem) takes `1/(15L)`, `y` takes
/// `τ_x/(24·288)`, and `K = ⌈2/(μ_y τ_y)⌉`.
///
/// The outer count follows from the outer contraction: two-sided
/// `(1 − μ_x/(2β+μ_x))^K g_0 ≤ ε/2`; one-sided `8βg_0/K ≤ ε²/2`.
pub fn theory_catalyst_plan(
    l: f64,
    mu_x: f64,
    mu_y: f64,
    n: usize,
    eps: f64,
    mode: PlMode,
    g0_gap: f64,
) -> Result<CatalystPlan> {
    positive("L", l)?;
    positive("mu_y", mu_y)?;
    positive("eps", eps)?;
    if mode == PlMode::TwoSided {
        positive("mu_x", mu_x)?;
    }
    let beta = 2.0 * l;
    let delta = delta_target(mode, l, mu_x, mu_y, eps)?;
    let g0 = g0_gap.max(f64::EPSILON);
    let outer_iters = match mode {
        PlMode::TwoSided => {
            let rate = mu_x / (2.0 * beta + mu_x);
            let target = 2.0 * g0 / eps;
            if target <= 1.0 {
                1
            } else {
                ceil_count(target.ln() / -(1.0 - rate).ln())
            }
        }
        PlMode::OneSided => ceil_count(16.0 * beta * g0 / (eps * eps)),
    };
    let tau_x = 1.0 / (15.0 * l);
    let lambda = 288.0;
    let tau_y = tau_x / (24.0 * lambda);
    let m = ceil_sqrt(n);
    let sub_plan = LoopPlan {
        restarts: 1,
        inner_iters: ceil_count(2.0 / (mu_y * tau_y)),
        epoch_length: m,
        batch_size: m,
        svrg_epochs: None,
        mode: PlMode::TwoSided,
        sampling: Sampling::WithReplacement,
        pick: RestartPick::Uniform,
    };
    Ok(CatalystPlan {
        beta,
        gamma: 0.0,
        outer_iters,
        delta,
        kappa_y: l / mu_y,
        mu_y,
        l,
        g0_gap,
        sub_steps: StepSizes::new(tau_x, tau_y, lambda)?,
        sub_plan,
        schedule: CatalystSchedule::Theory,
        output: match mode {
            PlMode::TwoSided => CatalystOutput::Last,
            PlMode::OneSided => CatalystOutput::Uniform,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_sided_spider_unit_constants() {
        let (s, p) = params_two_sided_spider(1.0, 1.0, 1.0, 100, 0.1).unwrap();
        assert_eq!(s.tau_y, 0.2);
        assert_eq!(s.lambda, 32.0);
        assert_relative_eq!(s.tau_x, 0.2 / 768.0, max_relative = 1e-15);
        assert_relative_eq!(s.tau_x, 2.604e-4, max_relative = 1e-3);
        assert_eq!(p.inner_iters, 7680);
        assert_eq!(p.restarts, 3); // ⌈ln 10⌉
        assert_eq!((p.epoch_length, p.batch_size), (10, 10));
    }

    #[test]
    fn restarts_clamp_and_batch_rounding() {
        let (_, p) = params_two_sided_spider(1.0, 1.0, 1.0, 6000, 1.0).unwrap();
        assert_eq!(p.restarts, 1);
        assert_eq!((p.epoch_length, p.batch_size), (78, 78));
        let (_, p) = params_two_sided_spider(1.0, 1.0, 1.0, 256, 2.0).unwrap();
        assert_eq!((p.epoch_length, p.restarts), (16, 1));
        assert!(params_two_sided_spider(1.0, 0.0, 1.0, 10, 0.1).is_err());
        assert!(params_two_sided_spider(-1.0, 1.0, 1.0, 10, 0.1).is_err());
        assert!(params_two_sided_spider(1.0, 1.0, 1.0, 0, 0.1).is_err());
    }

    #[test]
    fn one_sided_spider() {
        let (s, p) = params_one_sided_spider(1.0, 1.0, 100, 1.0).unwrap();
        assert_relative_eq!(s.tau_x, 0.2 / 768.0, max_relative = 1e-15);
        assert_eq!(p.inner_iters, 245760);
        assert_eq!(p.restarts, 1);
        assert_eq!(p.mode, PlMode::OneSided);
        let (_, half) = params_one_sided_spider(1.0, 1.0, 100, 0.5).unwrap();
        assert_eq!(half.inner_iters, 4 * 245760);
        for eps in [0.3, 0.07, 0.011] {
            let (_, a) = params_one_sided_spider(1.0, 0.5, 64, eps).unwrap();
            let (_, b) = params_one_sided_spider(1.0, 0.5, 64, eps / 2.0).unwrap();
            assert!(b.inner_iters.abs_diff(4 * a.inner_iters) <= 4);
        }
    }

    #[test]
    fn gda_step_sizes() {
        let s = params_gda(1.0, 1.0, 1.0, false).unwrap();
        assert_eq!((s.tau_y, s.lambda), (1.0, 6.0));
        assert_relative_eq!(s.tau_x, 1.0 / 132.0, max_relative = 1e-15);
        let s = params_gda(1.0, 1.0, 1.0, true).unwrap();
        assert_relative_eq!(s.tau_x, 1.0 / 72.0, max_relative = 1e-15);
        assert_eq!(s.lambda, 4.0);
        // κ_y doubled → τ_x shrinks 4×
        let a = params_gda(1.0, 1.0, 0.5, false).unwrap();
        let b = params_gda(1.0, 1.0, 0.25, false).unwrap();
        assert_relative_eq!(a.tau_x / b.tau_x, 4.0, max_relative = 1e-14);
        assert!(params_gda(1.0, 0.0, 1.0, false).is_err());
        assert!(params_gda(1.0, 0.0, 1.0, true).is_ok());
    }

    #[test]
    fn svrg_constants() {
        let nu = svrg_nu();
        assert_eq!(nu, 1.0 / (176.0 * (std::f64::consts::E - 1.0)));
        // 176(e − 1) = 302.4176…
        assert_relative_eq!(1.0 / nu, 302.417_601_808_792, max_relative = 1e-12);
        let (s, p) = params_svrg(1.0, 1.0, 1.0, 64, 2.0 / 3.0, 0.1).unwrap();
        // ⌊64 · 88(e − 1)⌋ = ⌊9677.36⌋
        assert_eq!(p.epoch_length, 9677);
        assert_eq!(p.batch_size, 1);
        assert_relative_eq!(s.tau_y, nu / 16.0, max_relative = 1e-12);
        assert_eq!(s.lambda, 14.0);
        assert_relative_eq!(s.tau_x, s.tau_y / (22.0 * 14.0), max_relative = 1e-15);
        let total = ceil_count(8.0 / s.tau_x);
        assert_eq!(p.svrg_epochs, Some(total.div_ceil(9677)));
        assert_eq!(p.restarts, 3);
        for alpha in [0.0, 1.5, -0.1] {
            assert!(params_svrg(1.0, 1.0, 1.0, 64, alpha, 0.1).is_err());
        }
        assert!(params_svrg(1.0, 1.0, 1.0, 64, 1.0, 0.1).is_ok());
    }

    #[test]
    fn delta_targets() {
        assert_relative_eq!(
            delta_target(PlMode::TwoSided, 1.0, 1.0, 1.0, 0.1).unwrap(),
            1.0 / 550.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            delta_target(PlMode::OneSided, 1.0, 1.0, 1.0, 0.1).unwrap(),
            1.0 / 18400.0,
            max_relative = 1e-14
        );
        let a = delta_target(PlMode::TwoSided, 2.0, 0.3, 0.1, 0.01).unwrap();
        let b = delta_target(PlMode::TwoSided, 2.0, 0.3, 0.1, 0.02).unwrap();
        assert_relative_eq!(b / a, 2.0, max_relative = 1e-14);
        assert!(delta_target(PlMode::TwoSided, 1.0, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn delta_k_values() {
        let delta = 1.0 / 550.0;
        let d0 = delta_k(0, 0.0, delta, 1.0, 2.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(d0, 1.0 / (550.0 * 14472.0), max_relative = 1e-14);
        assert_relative_eq!(d0, 1.256e-7, max_relative = 1e-3);
        let dz = delta_k(3, 0.0, delta, 1.0, 2.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(dz, 1.0 / (4.0 * 7236.0), max_relative = 1e-14);
        let d1 = delta_k(1, 1.0, delta, 1.0, 2.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(d1, 1.0 / (7236.0 * 35200.0), max_relative = 1e-14);
        // non-positive gap falls back to machine epsilon
        let de = delta_k(0, 0.0, delta, 1.0, 2.0, 1.0, 1.0, 0.0);
        assert_relative_eq!(de, delta / (14472.0 * f64::EPSILON), max_relative = 1e-14);
    }

    #[test]
    fn ceil_count_snaps_and_clamps() {
        assert_eq!(ceil_count(7680.000000000001), 7680);
        assert_eq!(ceil_count(7680.2), 7681);
        assert_eq!(ceil_count(0.0), 1);
        assert_eq!(ceil_count(-3.0), 1);
        assert_eq!(ceil_sqrt(6000), 78);
        assert_eq!(ceil_sqrt(256), 16);
        assert_eq!(ceil_sqrt(1), 1);
    }

    #[test]
    fn theory_catalyst_plan_values() {
        let plan = theory_catalyst_plan(1.0, 1.0, 1.0, 16, 0.1, PlMode::TwoSided, 1.0).unwrap();
        assert_eq!(plan.beta, 2.0);
        assert_eq!(plan.gamma, 0.0);
        assert_relative_eq!(plan.delta, 1.0 / 550.0, max_relative = 1e-14);
        assert_relative_eq!(plan.sub_steps.tau_x, 1.0 / 15.0, max_relative = 1e-15);
        assert_eq!(plan.sub_steps.lambda, 288.0);
        assert_relative_eq!(plan.sub_steps.tau_y, 1.0 / (15.0 * 24.0 * 288.0), max_relative = 1e-14);
        assert_eq!(plan.sub_plan.inner_iters, 2 * 15 * 24 * 288);
        assert_eq!(plan.sub_plan.batch_size, 4);
        // (4/5)^K ≤ 1/20 → K = ⌈ln 20 / ln 1.25⌉ = 14
        assert_eq!(plan.outer_iters, 14);
        assert_eq!(plan.output, CatalystOutput::Last);
        let one = theory_catalyst_plan(1.0, 1.0, 1.0, 16, 0.1, PlMode::OneSided, 1.0).unwrap();
        assert_eq!(one.outer_iters, 3200);
        assert_eq!(one.output, CatalystOutput::Uniform);
    }
}

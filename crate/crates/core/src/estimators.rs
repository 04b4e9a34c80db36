//! Variance-reduced gradient estimators for both variable blocks.
//!
//! Both estimators draw `S_x` and `S_y` independently, in that order, from
//! the caller's RNG. Indices are i.i.d. uniform on `0..n`, mapped through
//! `rand`'s bounded integer sampler (widening multiply with rejection).

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::problem::{Block, FiniteSumProblem, GradPair, Oracle, Point};

/// How mini-batch indices are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// I.i.d. uniform draws.
    #[default]
    WithReplacement,
    /// Distinct indices. With `B = n` the batch is every component, which makes
    /// the estimators exact; only intended for such tests.
    WithoutReplacement,
}

/// One mini-batch of component indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchDraw {
    pub indices: Vec<usize>,
}

impl BatchDraw {
    pub fn draw(rng: &mut crate::Rng, n: usize, size: usize, sampling: Sampling) -> Result<Self> {
        if size == 0 || n == 0 {
            return Err(Error::InvalidParameter("batch size and n must be positive".into()));
        }
        let indices = match sampling {
            Sampling::WithReplacement => (0..size).map(|_| rng.random_range(0..n)).collect(),
            Sampling::WithoutReplacement => {
                if size > n {
                    return Err(Error::InvalidParameter(format!(
                        "cannot draw {size} distinct indices from {n}"
                    )));
                }
                let mut v = rand::seq::index::sample(rng, n, size).into_vec();
                v.sort_unstable();
                v
            }
        };
        Ok(BatchDraw { indices })
    }
}

/// Recursive (SPIDER/SARAH) estimator state.
#[derive(Clone, Debug)]
pub struct SpiderState {
    estimate: Option<GradPair>,
    steps_since_refresh: usize,
    epoch_length: usize,
    batch_size: usize,
    sampling: Sampling,
    refreshes: u64,
}

impl SpiderState {
    pub fn new(epoch_length: usize, batch_size: usize, sampling: Sampling) -> Result<Self> {
        if epoch_length == 0 || batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epoch length and batch size must be positive".into(),
            ));
        }
        Ok(SpiderState {
            estimate: None,
            steps_since_refresh: 0,
            epoch_length,
            batch_size,
            sampling,
            refreshes: 0,
        })
    }

    pub fn estimate(&self) -> Option<&GradPair> {
        self.estimate.as_ref()
    }

    pub fn steps_since_refresh(&self) -> usize {
        self.steps_since_refresh
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    pub fn epoch_length(&self) -> usize {
        self.epoch_length
    }

    /// Whether the next estimate must come from a full refresh.
    pub fn needs_refresh(&self) -> bool {
        self.estimate.is_none() || self.steps_since_refresh + 1 >= self.epoch_length
    }

    /// `G ← ∇f(p)`; costs `n` SFO.
    pub fn refresh<P: FiniteSumProblem + ?Sized>(
        &mut self,
        oracle: &mut Oracle<'_, P>,
        p: &Point,
    ) -> Result<&GradPair> {
        let g = oracle.full_grad(p)?;
        self.steps_since_refresh = 0;
        self.refreshes += 1;
        Ok(self.estimate.insert(g))
    }

    /// `G_b ← G_b + (1/B) Σ_{i∈S_b} [∇_b f_i(p_new) − ∇_b f_i(p_old)]` for both
    /// blocks, with independent batches; costs `2B` SFO.
    pub fn step<P: FiniteSumProblem + ?Sized>(
        &mut self,
        oracle: &mut Oracle<'_, P>,
        p_new: &Point,
        p_old: &Point,
        rng: &mut crate::Rng,
    ) -> Result<&GradPair> {
        if self.estimate.is_none() {
            return Err(Error::Uninitialized);
        }
        if self.steps_since_refresh + 1 >= self.epoch_length {
            return Err(Error::EpochExhausted(self.steps_since_refresh));
        }
        let n = oracle.problem().n();
        let sx = BatchDraw::draw(rng, n, self.batch_size, self.sampling)?;
        let sy = BatchDraw::draw(rng, n, self.batch_size, self.sampling)?;
        let g = self.estimate.as_mut().expect("checked above");
        oracle.add_batch_difference(Block::X, &sx.indices, p_new, p_old, &mut g.gx)?;
        oracle.add_batch_difference(Block::Y, &sy.indices, p_new, p_old, &mut g.gy)?;
        self.steps_since_refresh += 1;
        Ok(g)
    }

    /// Applies the epoch rule: refresh when `k mod M = 0`, else recurse.
    pub fn advance<P: FiniteSumProblem + ?Sized>(
        &mut self,
        k: usize,
        oracle: &mut Oracle<'_, P>,
        p_new: &Point,
        p_old: &Point,
        rng: &mut crate::Rng,
    ) -> Result<&GradPair> {
        if k.is_multiple_of(self.epoch_length) {
            self.refresh(oracle, p_new)
        } else {
            self.step(oracle, p_new, p_old, rng)
        }
    }
}

/// Anchored (SVRG) estimator state.
#[derive(Clone, Debug)]
pub struct SvrgState {
    anchor: Option<(Point, GradPair)>,
    batch_size: usize,
    sampling: Sampling,
}

impl SvrgState {
    pub fn new(batch_size: usize, sampling: Sampling) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        Ok(SvrgState {
            anchor: None,
            batch_size,
            sampling,
        })
    }

    pub fn anchor_point(&self) -> Option<&Point> {
        self.anchor.as_ref().map(|(p, _)| p)
    }

    pub fn anchor_gradient(&self) -> Option<&GradPair> {
        self.anchor.as_ref().map(|(_, g)| g)
    }

    /// Stores `p` and `∇f(p)`; costs `n` SFO.
    pub fn set_anchor<P: FiniteSumProblem + ?Sized>(&mut self, oracle: &mut Oracle<'_, P>, p: &Point) -> Result<()> {
        let g = oracle.full_grad(p)?;
        self.anchor = Some((p.clone(), g));
        Ok(())
    }

    /// `G_b = (1/B) Σ_{i∈S_b} [∇_b f_i(p) − ∇_b f_i(anchor)] + ∇_b f(anchor)`;
    /// costs `2B` SFO.
    pub fn step<P: FiniteSumProblem + ?Sized>(
        &self,
        oracle: &mut Oracle<'_, P>,
        p: &Point,
        rng: &mut crate::Rng,
    ) -> Result<GradPair> {
        let (anchor, anchor_grad) = self.anchor.as_ref().ok_or(Error::Uninitialized)?;
        let n = oracle.problem().n();
        let sx = BatchDraw::draw(rng, n, self.batch_size, self.sampling)?;
        let sy = BatchDraw::draw(rng, n, self.batch_size, self.sampling)?;
        let mut g = anchor_grad.clone();
        oracle.add_batch_difference(Block::X, &sx.indices, p, anchor, &mut g.gx)?;
        oracle.add_batch_difference(Block::Y, &sy.indices, p, anchor, &mut g.gy)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plgame::{generate, reference_saddle, GeneratorConfig};
    use crate::problem::{exact_gradient, FnProblem};
    use rand_distr::StandardNormal;

    fn game(n: usize) -> crate::PLGameInstance {
        generate(&GeneratorConfig {
            n,
            d: 4,
            r: 2,
            mu: 0.05,
            l: 1.0,
            coupling_scale: 0.1,
            seed: 17,
            well_posed: true,
        })
        .unwrap()
    }

    fn random_point(rng: &mut crate::Rng, d: usize) -> Point {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        Point::from_slices(&x, &y)
    }

    /// Exact per-block means of `∇_b f_i(new) − ∇_b f_i(old)` for every i.
    fn component_differences(inst: &crate::PLGameInstance, new: &Point, old: &Point) -> Vec<GradPair> {
        let mut o = Oracle::new(inst);
        (0..inst.n())
            .map(|i| {
                let a = o.component_grad(i, new).unwrap();
                let b = o.component_grad(i, old).unwrap();
                GradPair {
                    gx: a.gx - b.gx,
                    gy: a.gy - b.gy,
                }
            })
            .collect()
    }

    #[test]
    fn batch_draw_contract() {
        let mut rng = crate::seeded_rng(1, 0);
        let b = BatchDraw::draw(&mut rng, 5, 12, Sampling::WithReplacement).unwrap();
        assert_eq!(b.indices.len(), 12);
        assert!(b.indices.iter().all(|&i| i < 5));
        let b = BatchDraw::draw(&mut rng, 5, 5, Sampling::WithoutReplacement).unwrap();
        assert_eq!(b.indices, vec![0, 1, 2, 3, 4]);
        assert!(BatchDraw::draw(&mut rng, 5, 6, Sampling::WithoutReplacement).is_err());
        assert!(BatchDraw::draw(&mut rng, 5, 0, Sampling::WithReplacement).is_err());
    }

    #[test]
    fn refresh_equals_full_gradient_and_zero_objective() {
        let inst = game(9);
        let mut rng = crate::seeded_rng(2, 0);
        let p = random_point(&mut rng, 4);
        let mut o = Oracle::new(&inst);
        let mut s = SpiderState::new(3, 2, Sampling::WithReplacement).unwrap();
        let g = s.refresh(&mut o, &p).unwrap().clone();
        assert_eq!(g, exact_gradient(&inst, &p).unwrap());
        assert_eq!(o.counters().sfo, 9);
        assert_eq!(s.steps_since_refresh(), 0);

        let zero = FnProblem::new(4, 2, 2, |_, _, _, gx, gy| {
            gx.fill(0.0);
            gy.fill(0.0);
        });
        let mut o = Oracle::new(&zero);
        let g = s.refresh(&mut o, &Point::zeros(2, 2)).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn spider_step_costs_two_batches() {
        let inst = game(20);
        let mut rng = crate::seeded_rng(3, 0);
        let (p0, p1) = (random_point(&mut rng, 4), random_point(&mut rng, 4));
        let mut o = Oracle::new(&inst);
        let mut s = SpiderState::new(10, 8, Sampling::WithReplacement).unwrap();
        s.refresh(&mut o, &p0).unwrap();
        let before = o.counters().sfo;
        s.step(&mut o, &p1, &p0, &mut rng).unwrap();
        assert_eq!(o.counters().sfo - before, 16);
    }

    #[test]
    fn spider_requires_initialization_and_respects_epoch() {
        let inst = game(6);
        let mut rng = crate::seeded_rng(4, 0);
        let p = random_point(&mut rng, 4);
        let mut o = Oracle::new(&inst);
        let mut s = SpiderState::new(3, 1, Sampling::WithReplacement).unwrap();
        assert!(matches!(s.step(&mut o, &p, &p, &mut rng), Err(Error::Uninitialized)));
        s.refresh(&mut o, &p).unwrap();
        s.step(&mut o, &p, &p, &mut rng).unwrap();
        s.step(&mut o, &p, &p, &mut rng).unwrap();
        assert!(s.needs_refresh());
        assert!(matches!(s.step(&mut o, &p, &p, &mut rng), Err(Error::EpochExhausted(2))));
    }

    #[test]
    fn spider_step_without_movement_is_unchanged() {
        let inst = game(11);
        let mut rng = crate::seeded_rng(5, 0);
        let p = random_point(&mut rng, 4);
        let mut o = Oracle::new(&inst);
        let mut s = SpiderState::new(50, 3, Sampling::WithReplacement).unwrap();
        let g0 = s.refresh(&mut o, &p).unwrap().clone();
        for _ in 0..10 {
            assert_eq!(s.step(&mut o, &p, &p, &mut rng).unwrap(), &g0);
        }
    }

    #[test]
    fn spider_with_full_batch_tracks_full_gradient() {
        let inst = game(13);
        let mut rng = crate::seeded_rng(6, 0);
        let mut o = Oracle::new(&inst);
        let mut s = SpiderState::new(100, 13, Sampling::WithoutReplacement).unwrap();
        let mut prev = random_point(&mut rng, 4);
        s.refresh(&mut o, &prev).unwrap();
        for _ in 0..20 {
            let next = random_point(&mut rng, 4);
            let g = s.step(&mut o, &next, &prev, &mut rng).unwrap().clone();
            let truth = exact_gradient(&inst, &next).unwrap();
            assert!(g.dist_sq(&truth).sqrt() <= 1e-10 * (1.0 + truth.norm()));
            prev = next;
        }
    }

    #[test]
    fn svrg_full_batch_is_exact_and_anchor_is_idempotent() {
        let inst = game(13);
        let mut rng = crate::seeded_rng(7, 0);
        let mut o = Oracle::new(&inst);
        let mut s = SvrgState::new(13, Sampling::WithoutReplacement).unwrap();
        assert!(matches!(
            s.step(&mut o, &Point::zeros(4, 4), &mut rng),
            Err(Error::Uninitialized)
        ));
        let a = random_point(&mut rng, 4);
        s.set_anchor(&mut o, &a).unwrap();
        assert_eq!(o.counters().sfo, 13);
        let first = s.anchor_gradient().unwrap().clone();
        s.set_anchor(&mut o, &a).unwrap();
        assert_eq!(o.counters().sfo, 26);
        assert_eq!(s.anchor_gradient().unwrap(), &first);
        assert_eq!(&first, &exact_gradient(&inst, &a).unwrap());
        for _ in 0..20 {
            let p = random_point(&mut rng, 4);
            let g = s.step(&mut o, &p, &mut rng).unwrap();
            let truth = exact_gradient(&inst, &p).unwrap();
            assert!(g.dist_sq(&truth).sqrt() <= 1e-10 * (1.0 + truth.norm()));
        }
    }

    #[test]
    fn svrg_at_anchor_returns_anchor_gradient() {
        let inst = game(10);
        let mut rng = crate::seeded_rng(8, 0);
        let mut o = Oracle::new(&inst);
        let mut s = SvrgState::new(4, Sampling::WithReplacement).unwrap();
        let a = random_point(&mut rng, 4);
        s.set_anchor(&mut o, &a).unwrap();
        for _ in 0..10 {
            assert_eq!(&s.step(&mut o, &a, &mut rng).unwrap(), s.anchor_gradient().unwrap());
        }
    }

    // Exhaustive enumeration over all (S_x, S_y) pairs with B = 1. Each block
    // only depends on its own draw, so the enumeration average of the estimate
    // equals the per-block mean over single indices.
    #[test]
    fn enumeration_unbiasedness() {
        let inst = game(5);
        let mut rng = crate::seeded_rng(9, 0);
        let (old, new) = (random_point(&mut rng, 4), random_point(&mut rng, 4));
        let diffs = component_differences(&inst, &new, &old);
        let g_prev = GradPair {
            gx: DVectorExt::random(&mut rng, 4),
            gy: DVectorExt::random(&mut rng, 4),
        };
        let mut spider_mean = GradPair::zeros(4, 4);
        let mut svrg_mean = GradPair::zeros(4, 4);
        let anchor_grad = exact_gradient(&inst, &old).unwrap();
        for ix in 0..5 {
            for iy in 0..5 {
                // SPIDER: G_prev + difference at the drawn index
                spider_mean.gx += (&g_prev.gx + &diffs[ix].gx) / 25.0;
                spider_mean.gy += (&g_prev.gy + &diffs[iy].gy) / 25.0;
                // SVRG with anchor = old
                svrg_mean.gx += (&anchor_grad.gx + &diffs[ix].gx) / 25.0;
                svrg_mean.gy += (&anchor_grad.gy + &diffs[iy].gy) / 25.0;
            }
        }
        let g_new = exact_gradient(&inst, &new).unwrap();
        let g_old = exact_gradient(&inst, &old).unwrap();
        let spider_expect = GradPair {
            gx: &g_new.gx - &g_old.gx + &g_prev.gx,
            gy: &g_new.gy - &g_old.gy + &g_prev.gy,
        };
        assert!(spider_mean.dist_sq(&spider_expect).sqrt() <= 1e-12);
        assert!(svrg_mean.dist_sq(&g_new).sqrt() <= 1e-12);
    }

    #[test]
    fn drawn_estimates_match_enumerated_support() {
        // each real draw must equal one of the enumerated outcomes
        let inst = game(5);
        let mut rng = crate::seeded_rng(10, 0);
        let (old, new) = (random_point(&mut rng, 4), random_point(&mut rng, 4));
        let diffs = component_differences(&inst, &new, &old);
        let mut o = Oracle::new(&inst);
        let mut s = SpiderState::new(2, 1, Sampling::WithReplacement).unwrap();
        for _ in 0..10 {
            let g0 = s.refresh(&mut o, &old).unwrap().clone();
            let g = s.step(&mut o, &new, &old, &mut rng).unwrap();
            let hit_x = diffs.iter().any(|dv| (&g0.gx + &dv.gx - &g.gx).norm() <= 1e-13);
            let hit_y = diffs.iter().any(|dv| (&g0.gy + &dv.gy - &g.gy).norm() <= 1e-13);
            assert!(hit_x && hit_y);
        }
    }

    #[test]
    fn one_step_variance_recursion_bound() {
        for seed in 0..5 {
            let inst = generate(&GeneratorConfig {
                n: 6,
                d: 3,
                r: 2,
                mu: 0.1,
                l: 1.0,
                coupling_scale: 0.1,
                seed,
                well_posed: true,
            })
            .unwrap();
            let l = reference_saddle(&inst).unwrap().constants.l;
            let mut rng = crate::seeded_rng(seed, 7);
            let old = random_point(&mut rng, 3);
            let mut new = old.clone();
            new.x += DVectorExt::random(&mut rng, 3) * 0.3;
            new.y += DVectorExt::random(&mut rng, 3) * 0.3;
            let g_old = exact_gradient(&inst, &old).unwrap();
            let g_new = exact_gradient(&inst, &new).unwrap();
            // arbitrary previous estimate with nonzero error
            let g_prev = GradPair {
                gx: &g_old.gx + DVectorExt::random(&mut rng, 3) * 0.1,
                gy: &g_old.gy + DVectorExt::random(&mut rng, 3) * 0.1,
            };
            let prev_err = g_prev.dist_sq(&g_old);
            let diffs = component_differences(&inst, &new, &old);
            let n = inst.n();
            let mut expected_err = 0.0;
            for ix in 0..n {
                for iy in 0..n {
                    let gx = &g_prev.gx + &diffs[ix].gx;
                    let gy = &g_prev.gy + &diffs[iy].gy;
                    let e = (&gx - &g_new.gx).norm_squared() + (&gy - &g_new.gy).norm_squared();
                    expected_err += e / (n * n) as f64;
                }
            }
            let bound = l * l * old.dist_sq(&new);
            assert!(expected_err - prev_err <= bound + 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let inst = game(30);
        let run = |seed| {
            let mut rng = crate::seeded_rng(seed, 0);
            let mut o = Oracle::new(&inst);
            let mut s = SpiderState::new(5, 3, Sampling::WithReplacement).unwrap();
            let mut p = Point::from_slices(&[1.0, 0.0, -1.0, 0.5], &[0.2, 0.1, 0.0, -0.3]);
            let mut prev = p.clone();
            let mut out = vec![];
            for k in 0..25 {
                let g = s.advance(k, &mut o, &p, &prev, &mut rng).unwrap().clone();
                prev.copy_from(&p);
                p.x.axpy(-0.05, &g.gx, 1.0);
                p.y.axpy(0.05, &g.gy, 1.0);
                out.push(p.clone());
            }
            (out, s.refreshes())
        };
        let (a, ra) = run(42);
        let (b, _) = run(42);
        assert_eq!(a, b);
        assert_eq!(ra, 5); // ⌈25 / 5⌉
        let (c, _) = run(43);
        assert_ne!(a, c);
    }

    struct DVectorExt;
    impl DVectorExt {
        fn random(rng: &mut crate::Rng, d: usize) -> nalgebra::DVector<f64> {
            nalgebra::DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
        }
    }
}

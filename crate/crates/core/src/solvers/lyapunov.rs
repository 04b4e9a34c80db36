use nalgebra::DVector;

use crate::error::Result;
use crate::problem::Point;

use super::StepSizes;

/// Access to the primal function `g(x) = max_y f(x, y)` and its optimum.
pub trait PrimalReference {
    /// `g(x)`; errors where the inner maximum is not attained.
    fn primal_value(&self, x: &DVector<f64>) -> Result<f64>;
    /// `g* = min_x g(x)`.
    fn optimal_value(&self) -> f64;
    /// `f(x, y)`.
    fn objective(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovValue {
    pub value: f64,
    /// `g(x) − g*`.
    pub primal_gap: f64,
    /// `g(x) − f(x, y)`.
    pub dual_gap: f64,
}

/// `V = g(x) − g* + (λτ_x/τ_y)(g(x) − f(x, y))`.
pub fn lyapunov<R: PrimalReference + ?Sized>(reference: &R, p: &Point, steps: &StepSizes) -> Result<LyapunovValue> {
    let g = reference.primal_value(&p.x)?;
    let primal_gap = g - reference.optimal_value();
    let dual_gap = g - reference.objective(&p.x, &p.y);
    Ok(LyapunovValue {
        value: primal_gap + steps.dual_weight() * dual_gap,
        primal_gap,
        dual_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plgame::{best_response, reference_saddle, GameMetrics, GeneratorConfig};
    use crate::Error;

    /// `f = ½x² − ½y² + xy`, so `g(x) = x²` and `g* = 0`.
    struct OneD;

    impl PrimalReference for OneD {
        fn primal_value(&self, x: &DVector<f64>) -> Result<f64> {
            Ok(x[0] * x[0])
        }
        fn optimal_value(&self) -> f64 {
            0.0
        }
        fn objective(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
            0.5 * x[0] * x[0] - 0.5 * y[0] * y[0] + x[0] * y[0]
        }
    }

    #[test]
    fn one_d_parts() {
        let steps = StepSizes::new(0.1, 0.2, 3.0).unwrap();
        let v = lyapunov(&OneD, &Point::from_slices(&[2.0], &[0.0]), &steps).unwrap();
        assert_eq!(v.primal_gap, 4.0);
        assert_eq!(v.dual_gap, 2.0);
        assert!((v.value - (4.0 + 1.5 * 2.0)).abs() < 1e-15);
        let v = lyapunov(&OneD, &Point::from_slices(&[0.0], &[0.0]), &steps).unwrap();
        assert_eq!(v.value, 0.0);
        // y = y*(x) = x zeroes the dual part
        let v = lyapunov(&OneD, &Point::from_slices(&[-1.5], &[-1.5]), &steps).unwrap();
        assert!(v.dual_gap.abs() < 1e-15);
    }

    fn random_vec(rng: &mut crate::Rng, d: usize) -> DVector<f64> {
        use rand::Rng as _;
        DVector::from_fn(d, |_, _| rng.sample(rand_distr::StandardNormal))
    }

    #[test]
    fn game_parts_nonnegative_and_zero_at_saddle() {
        let cfg = GeneratorConfig { n: 40, ..GeneratorConfig::reference_setting(1e-2, 4) };
        let cfg = GeneratorConfig { d: 6, r: 3, ..cfg };
        let inst = crate::plgame::generate(&cfg).unwrap();
        let reference = reference_saddle(&inst).unwrap();
        let m = GameMetrics::new(&inst, &reference);
        let steps = StepSizes::new(1e-3, 1e-1, 10.0).unwrap();
        let v = lyapunov(&m, &reference.saddle(), &steps).unwrap();
        assert!(v.value.abs() < 1e-10);
        let mut rng = crate::seeded_rng(1, 0);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 6);
            let y = random_vec(&mut rng, 6);
            let v = lyapunov(&m, &Point::new(x.clone(), y), &steps).unwrap();
            assert!(v.primal_gap >= -1e-10 && v.dual_gap >= -1e-10);
            let yb = best_response(&reference, &inst, &x);
            let v = lyapunov(&m, &Point::new(x, yb), &steps).unwrap();
            assert!(v.dual_gap.abs() < 1e-9 * (1.0 + v.primal_gap.abs()));
        }
    }

    #[test]
    fn unavailable_reference_propagates() {
        struct Missing;
        impl PrimalReference for Missing {
            fn primal_value(&self, _: &DVector<f64>) -> Result<f64> {
                Err(Error::ReferenceUnavailable("use gradient-norm metrics".into()))
            }
            fn optimal_value(&self) -> f64 {
                0.0
            }
            fn objective(&self, _: &DVector<f64>, _: &DVector<f64>) -> f64 {
                0.0
            }
        }
        let steps = StepSizes::new(1.0, 1.0, 1.0).unwrap();
        let r = lyapunov(&Missing, &Point::zeros(1, 1), &steps);
        assert!(matches!(r, Err(Error::ReferenceUnavailable(_))));
    }
}

//! Finite-sum minimax oracle contract.
//!
//! A problem is `f(x, y) = (1/n) Σ_i f_i(x, y)`, minimized over `x` and
//! maximized over `y`. Problems only expose pure component gradients; every
//! evaluation that a solver pays for goes through an [`Oracle`], which owns
//! the per-run SFO counters.
//!
//! SFO convention: one SFO is one evaluation of a component gradient pair
//! `(∇_x f_i, ∇_y f_i)`. A full gradient costs `n`. Estimator steps bill the
//! size of each mini-batch they draw, so a step with independent `S_x` and
//! `S_y` of size `B` costs `2B`.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A finite-sum minimax objective with component gradient access.
///
/// Implementations must be pure: the gradient of component `i` may only
/// depend on `i` and the point.
pub trait FiniteSumProblem {
    /// Number of components `n`.
    fn n(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    /// Overwrites `gx`, `gy` with `∇_x f_i(x, y)` and `∇_y f_i(x, y)`.
    ///
    /// Callers guarantee `i < n` and that all slice lengths match.
    fn component_grad_into(&self, i: usize, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]);

    /// Value of the mean objective `f(x, y)`, when available.
    fn value(&self, _x: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }

    /// Component smoothness constant `L`, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

impl<P: FiniteSumProblem + ?Sized> FiniteSumProblem for &P {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn dim_x(&self) -> usize {
        (**self).dim_x()
    }
    fn dim_y(&self) -> usize {
        (**self).dim_y()
    }
    fn component_grad_into(&self, i: usize, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        (**self).component_grad_into(i, x, y, gx, gy)
    }
    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        (**self).value(x, y)
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
}

/// A primal/dual pair `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl Point {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Point { x, y }
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Self {
        Point {
            x: DVector::from_column_slice(x),
            y: DVector::from_column_slice(y),
        }
    }

    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        Point {
            x: DVector::zeros(dim_x),
            y: DVector::zeros(dim_y),
        }
    }

    /// Exchanges the roles of `x` and `y`.
    pub fn swapped(&self) -> Point {
        Point {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// `‖x − x'‖² + ‖y − y'‖²`.
    pub fn dist_sq(&self, other: &Point) -> f64 {
        (&self.x - &other.x).norm_squared() + (&self.y - &other.y).norm_squared()
    }

    pub fn copy_from(&mut self, other: &Point) {
        self.x.copy_from(&other.x);
        self.y.copy_from(&other.y);
    }

    pub(crate) fn check_dims<P: FiniteSumProblem + ?Sized>(&self, problem: &P) -> Result<()> {
        if self.x.len() != problem.dim_x() || self.y.len() != problem.dim_y() {
            return Err(Error::Dimension(format!(
                "point has dims ({}, {}), problem expects ({}, {})",
                self.x.len(),
                self.y.len(),
                problem.dim_x(),
                problem.dim_y()
            )));
        }
        Ok(())
    }
}

/// Gradient blocks `(∇_x f, ∇_y f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair {
    pub gx: DVector<f64>,
    pub gy: DVector<f64>,
}

impl GradPair {
    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        GradPair {
            gx: DVector::zeros(dim_x),
            gy: DVector::zeros(dim_y),
        }
    }

    /// Euclidean norm of the stacked gradient.
    pub fn norm(&self) -> f64 {
        (self.gx.norm_squared() + self.gy.norm_squared()).sqrt()
    }

    pub fn dist_sq(&self, other: &GradPair) -> f64 {
        (&self.gx - &other.gx).norm_squared() + (&self.gy - &other.gy).norm_squared()
    }
}

/// SFO accounting for one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleCounters {
    /// Component gradient pair evaluations billed so far.
    pub sfo: u64,
    /// Number of full passes over all `n` components.
    pub full_grad_evals: u64,
}

/// Which gradient block a mini-batch estimate targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    X,
    Y,
}

/// Per-run oracle context: a borrowed problem plus its SFO counters.
///
/// Counters are owned by the context, never shared, so concurrent runs on the
/// same immutable problem stay independent.
pub struct Oracle<'p, P: ?Sized> {
    problem: &'p P,
    counters: OracleCounters,
    buf_x: Vec<f64>,
    buf_y: Vec<f64>,
    buf_x2: Vec<f64>,
    buf_y2: Vec<f64>,
}

impl<'p, P: FiniteSumProblem + ?Sized> Oracle<'p, P> {
    pub fn new(problem: &'p P) -> Self {
        Self::with_counters(problem, OracleCounters::default())
    }

    /// Context that continues billing from existing counters.
    pub fn with_counters(problem: &'p P, counters: OracleCounters) -> Self {
        let (dx, dy) = (problem.dim_x(), problem.dim_y());
        Oracle {
            problem,
            counters,
            buf_x: vec![0.0; dx],
            buf_y: vec![0.0; dy],
            buf_x2: vec![0.0; dx],
            buf_y2: vec![0.0; dy],
        }
    }

    pub fn problem(&self) -> &'p P {
        self.problem
    }

    pub fn counters(&self) -> OracleCounters {
        self.counters
    }

    pub(crate) fn set_counters(&mut self, counters: OracleCounters) {
        self.counters = counters;
    }

    pub fn reset_counters(&mut self) {
        self.counters = OracleCounters::default();
    }

    /// `(∇_x f_i(p), ∇_y f_i(p))`; costs one SFO.
    pub fn component_grad(&mut self, i: usize, p: &Point) -> Result<GradPair> {
        let n = self.problem.n();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        p.check_dims(self.problem)?;
        let mut g = GradPair::zeros(self.problem.dim_x(), self.problem.dim_y());
        self.problem.component_grad_into(
            i,
            p.x.as_slice(),
            p.y.as_slice(),
            g.gx.as_mut_slice(),
            g.gy.as_mut_slice(),
        );
        self.counters.sfo += 1;
        if !all_finite(g.gx.as_slice()) || !all_finite(g.gy.as_slice()) {
            return Err(Error::NonFiniteGradient { index: i });
        }
        Ok(g)
    }

    /// Mean of all component gradients at `p`; costs `n` SFO.
    pub fn full_grad(&mut self, p: &Point) -> Result<GradPair> {
        let g = exact_gradient(self.problem, p)?;
        self.counters.sfo += self.problem.n() as u64;
        self.counters.full_grad_evals += 1;
        Ok(g)
    }

    /// Adds `(1/|S|) Σ_{i∈S} [∇_b f_i(new) − ∇_b f_i(old)]` to `acc`, where
    /// `b` is `block`. Bills `|S|` SFO.
    pub fn add_batch_difference(
        &mut self,
        block: Block,
        indices: &[usize],
        new: &Point,
        old: &Point,
        acc: &mut DVector<f64>,
    ) -> Result<()> {
        let n = self.problem.n();
        new.check_dims(self.problem)?;
        old.check_dims(self.problem)?;
        if indices.is_empty() {
            return Err(Error::InvalidParameter("empty mini-batch".into()));
        }
        let scale = 1.0 / indices.len() as f64;
        let mut sum = DVector::<f64>::zeros(acc.len());
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            self.problem.component_grad_into(
                i,
                new.x.as_slice(),
                new.y.as_slice(),
                &mut self.buf_x,
                &mut self.buf_y,
            );
            self.problem.component_grad_into(
                i,
                old.x.as_slice(),
                old.y.as_slice(),
                &mut self.buf_x2,
                &mut self.buf_y2,
            );
            let (a, b) = match block {
                Block::X => (&self.buf_x, &self.buf_x2),
                Block::Y => (&self.buf_y, &self.buf_y2),
            };
            if !all_finite(a) || !all_finite(b) {
                return Err(Error::NonFiniteGradient { index: i });
            }
            for ((s, an), bo) in sum.iter_mut().zip(a).zip(b) {
                *s += an - bo;
            }
        }
        self.counters.sfo += indices.len() as u64;
        acc.axpy(scale, &sum, 1.0);
        Ok(())
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Full gradient at `p` without touching any counters.
///
/// Used for metrics, which are never billed to a solver.
pub fn exact_gradient<P: FiniteSumProblem + ?Sized>(problem: &P, p: &Point) -> Result<GradPair> {
    p.check_dims(problem)?;
    let (dx, dy) = (problem.dim_x(), problem.dim_y());
    let mut sum = GradPair::zeros(dx, dy);
    let mut bx = vec![0.0; dx];
    let mut by = vec![0.0; dy];
    for i in 0..problem.n() {
        problem.component_grad_into(i, p.x.as_slice(), p.y.as_slice(), &mut bx, &mut by);
        if !all_finite(&bx) || !all_finite(&by) {
            return Err(Error::NonFiniteGradient { index: i });
        }
        for (s, v) in sum.gx.iter_mut().zip(&bx) {
            *s += v;
        }
        for (s, v) in sum.gy.iter_mut().zip(&by) {
            *s += v;
        }
    }
    let n = problem.n() as f64;
    sum.gx /= n;
    sum.gy /= n;
    Ok(sum)
}

/// `f_i(x, y) + (β/2)‖x − u‖²` for every component.
///
/// Each component carries the whole regularizer, so the wrapped mean is
/// exactly `f + (β/2)‖x − u‖²` and component smoothness becomes `L + β`.
#[derive(Clone, Debug)]
pub struct ProxRegularized<P> {
    inner: P,
    beta: f64,
    center: DVector<f64>,
}

impl<P: FiniteSumProblem> ProxRegularized<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

/// Wraps `problem` with the proximal term `(β/2)‖x − center‖²`.
pub fn prox_regularize<P: FiniteSumProblem>(
    problem: P,
    beta: f64,
    center: DVector<f64>,
) -> Result<ProxRegularized<P>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "proximal weight must be positive and finite, got {beta}"
        )));
    }
    if center.len() != problem.dim_x() {
        return Err(Error::Dimension(format!(
            "proximal center has length {}, expected {}",
            center.len(),
            problem.dim_x()
        )));
    }
    Ok(ProxRegularized {
        inner: problem,
        beta,
        center,
    })
}

impl<P: FiniteSumProblem> FiniteSumProblem for ProxRegularized<P> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }
    fn component_grad_into(&self, i: usize, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        self.inner.component_grad_into(i, x, y, gx, gy);
        for ((g, xi), ui) in gx.iter_mut().zip(x).zip(self.center.iter()) {
            *g += self.beta * (xi - ui);
        }
    }
    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let reg: f64 = x
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.inner.value(x, y).map(|v| v + 0.5 * self.beta * reg)
    }
    fn smoothness(&self) -> Option<f64> {
        self.inner.smoothness().map(|l| l + self.beta)
    }
}

/// The role-swapped problem `h(a, b) = −f(b, a)`.
///
/// Minimizing over `a` (the inner `y`) and maximizing over `b` (the inner
/// `x`) gives `max_y min_x f = −min_a max_b h`.
#[derive(Clone, Debug)]
pub struct SwappedProblem<P> {
    inner: P,
}

impl<P> SwappedProblem<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }
}

pub fn swap_negate<P: FiniteSumProblem>(problem: P) -> SwappedProblem<P> {
    SwappedProblem { inner: problem }
}

impl<P: FiniteSumProblem> FiniteSumProblem for SwappedProblem<P> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn dim_x(&self) -> usize {
        self.inner.dim_y()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_x()
    }
    fn component_grad_into(&self, i: usize, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        // inner gradient w.r.t. its x lands in our y-block and vice versa
        self.inner.component_grad_into(i, y, x, gy, gx);
        gx.iter_mut().for_each(|g| *g = -*g);
        gy.iter_mut().for_each(|g| *g = -*g);
    }
    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        self.inner.value(y, x).map(|v| -v)
    }
    fn smoothness(&self) -> Option<f64> {
        self.inner.smoothness()
    }
}

/// Problem given by closures; handy for small hand-written objectives.
pub struct FnProblem<G, V = fn(&[f64], &[f64]) -> f64> {
    n: usize,
    dim_x: usize,
    dim_y: usize,
    grad: G,
    value: Option<V>,
    smoothness: Option<f64>,
}

impl<G> FnProblem<G>
where
    G: Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]),
{
    pub fn new(n: usize, dim_x: usize, dim_y: usize, grad: G) -> Self {
        FnProblem {
            n,
            dim_x,
            dim_y,
            grad,
            value: None,
            smoothness: None,
        }
    }
}

impl<G, V> FnProblem<G, V> {
    pub fn with_value<V2>(self, value: V2) -> FnProblem<G, V2> {
        FnProblem {
            n: self.n,
            dim_x: self.dim_x,
            dim_y: self.dim_y,
            grad: self.grad,
            value: Some(value),
            smoothness: self.smoothness,
        }
    }

    pub fn with_smoothness(mut self, l: f64) -> Self {
        self.smoothness = Some(l);
        self
    }
}

impl<G, V> FiniteSumProblem for FnProblem<G, V>
where
    G: Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]),
    V: Fn(&[f64], &[f64]) -> f64,
{
    fn n(&self) -> usize {
        self.n
    }
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_y(&self) -> usize {
        self.dim_y
    }
    fn component_grad_into(&self, i: usize, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        (self.grad)(i, x, y, gx, gy)
    }
    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        self.value.as_ref().map(|v| v(x, y))
    }
    fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }
}

//! The quadratic two-player PL game
//!
//! `f(x, y) = ½xᵀPx − ½yᵀQy + xᵀRy` with `P`, `Q`, `R` the means of
//! rank-one factors, sampled from rank-deficient Gaussian covariances.
//!
//! Component `i` is `f_i = ½(p_iᵀx)² − ½(q_iᵀy)² + (a_iᵀx)(b_iᵀy)`. In the
//! literal recipe `a_i = b_i = r_i`. Because `Q` is singular, `max_y f(x, y)`
//! is then unbounded for almost every `x`. The well-posed mode projects the
//! coupling factors, `a_i = Π_P r_i` and `b_i = Π_Q r_i`, so that
//! `R = Π_P R_raw Π_Q` and `Rᵀx ∈ range(Q)` for every `x`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{FiniteSumProblem, Point};

/// Relative eigenvalue threshold that separates the numerical range from the
/// null space of the generated matrices.
pub const RANK_TOL: f64 = 1e-10;

const FORMAT_TAG: &str = "plgame-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "scale", alias = "coupling_scale", default = "default_scale")]
    pub coupling_scale: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub well_posed: bool,
}

fn default_scale() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

impl GeneratorConfig {
    /// The n = 6000, d = 10, r = 5, L = 1 setting with coupling scale 0.1.
    pub fn reference_setting(mu: f64, seed: u64) -> Self {
        GeneratorConfig {
            n: 6000,
            d: 10,
            r: 5,
            mu,
            l: 1.0,
            coupling_scale: 0.1,
            seed,
            well_posed: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 1 {
            return bad("n must be >= 1".into());
        }
        if self.r < 1 {
            return bad("r must be >= 1".into());
        }
        if self.r >= self.d {
            return bad(format!("r must be < d (got r = {}, d = {})", self.r, self.d));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.mu < self.l && self.l.is_finite()) {
            return bad(format!("mu must be < L (got mu = {}, L = {})", self.mu, self.l));
        }
        if !(self.coupling_scale >= 0.0 && self.coupling_scale.is_finite()) {
            return bad(format!("scale must be non-negative, got {}", self.coupling_scale));
        }
        Ok(())
    }
}

/// A generated game: per-component factors plus cached aggregates.
///
/// Factor matrices are row-major `n × d`.
#[derive(Clone, Debug)]
pub struct PLGameInstance {
    config: GeneratorConfig,
    spectrum_p: Vec<f64>,
    spectrum_q: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
    agg_p: DMatrix<f64>,
    agg_q: DMatrix<f64>,
    agg_r: DMatrix<f64>,
}

/// Portable on-disk form: the config echo plus every factor, row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format: String,
    config: GeneratorConfig,
    spectrum_p: Vec<f64>,
    spectrum_q: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    coupling_left: Vec<f64>,
    coupling_right: Vec<f64>,
}

fn row(m: &[f64], d: usize, i: usize) -> &[f64] {
    &m[i * d..(i + 1) * d]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `(1/n) Σ_i u_i v_iᵀ` for row-major factor matrices.
fn mean_outer(u: &[f64], v: &[f64], n: usize, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let (a, b) = (row(u, d, i), row(v, d, i));
        for r in 0..d {
            for c in 0..d {
                m[(r, c)] += a[r] * b[c];
            }
        }
    }
    m / n as f64
}

/// Symmetric eigen-decomposition split by the relative rank threshold.
struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    cutoff: f64,
}

impl Spectrum {
    fn of(m: &DMatrix<f64>) -> Self {
        let sym = (m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Spectrum {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
            cutoff: RANK_TOL * lmax,
        }
    }

    fn rank(&self) -> usize {
        self.values.iter().filter(|v| **v > self.cutoff).count()
    }

    fn smallest_nonzero(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| *v > self.cutoff)
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))))
    }

    /// Orthogonal projector onto the numerical range.
    fn range_projector(&self) -> DMatrix<f64> {
        self.spectral_map(|_| 1.0)
    }

    fn pseudo_inverse(&self) -> DMatrix<f64> {
        self.spectral_map(|v| 1.0 / v)
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.values.len();
        let mut out = DMatrix::<f64>::zeros(d, d);
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.cutoff {
                let u = self.vectors.column(k);
                out += (u * u.transpose()) * f(v);
            }
        }
        out
    }
}

/// Samples a column-orthogonal `d × r` basis from the QR factor of a
/// Gaussian matrix, filled row by row.
fn orthogonal_basis(rng: &mut crate::Rng, d: usize, r: usize) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(d, r);
    for i in 0..d {
        for j in 0..r {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    g.qr().q()
}

/// Draws `n` rows `U diag(√D) z`, `z ~ N(0, I_r)`, i.e. rows from `N(0, UDUᵀ)`.
fn sample_low_rank(rng: &mut crate::Rng, basis: &DMatrix<f64>, diag: &[f64], n: usize) -> Vec<f64> {
    let (d, r) = basis.shape();
    let scale: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    let mut out = vec![0.0; n * d];
    let mut z = vec![0.0; r];
    for i in 0..n {
        for (zj, s) in z.iter_mut().zip(&scale) {
            *zj = s * rng.sample::<f64, _>(StandardNormal);
        }
        let dst = &mut out[i * d..(i + 1) * d];
        for (k, v) in dst.iter_mut().enumerate() {
            *v = (0..r).map(|j| basis[(k, j)] * z[j]).sum();
        }
    }
    out
}

fn project_rows(m: &[f64], proj: &DMatrix<f64>, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    for (src, dst) in m.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        for (k, v) in dst.iter_mut().enumerate() {
            *v = (0..d).map(|j| proj[(k, j)] * src[j]).sum();
        }
    }
    out
}

/// Generates an instance. Deterministic in `config` (including the seed).
///
/// Draw order on a single ChaCha8 stream: basis for `P`, its spectrum, basis
/// for `Q`, its spectrum, the coupling factor `V`, then the `p`, `q` and `r`
/// rows in that order.
pub fn generate(config: &GeneratorConfig) -> Result<PLGameInstance> {
    config.validate()?;
    let GeneratorConfig { n, d, r, mu, l, .. } = *config;
    let mut rng = crate::seeded_rng(config.seed, 0);

    let basis_p = orthogonal_basis(&mut rng, d, r);
    let spectrum_p: Vec<f64> = (0..r).map(|_| rng.random_range(mu..=l)).collect();
    let basis_q = orthogonal_basis(&mut rng, d, r);
    let spectrum_q: Vec<f64> = (0..r).map(|_| rng.random_range(mu..=l)).collect();
    let mut v = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            v[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let v = v * config.coupling_scale.sqrt();

    let p = sample_low_rank(&mut rng, &basis_p, &spectrum_p, n);
    let q = sample_low_rank(&mut rng, &basis_q, &spectrum_q, n);
    let ones = vec![1.0; d];
    let r_raw = sample_low_rank(&mut rng, &v, &ones, n);

    let (left, right) = if config.well_posed {
        let proj_p = Spectrum::of(&mean_outer(&p, &p, n, d)).range_projector();
        let proj_q = Spectrum::of(&mean_outer(&q, &q, n, d)).range_projector();
        (project_rows(&r_raw, &proj_p, d), project_rows(&r_raw, &proj_q, d))
    } else {
        (r_raw.clone(), r_raw.clone())
    };

    Ok(PLGameInstance::assemble(
        config.clone(),
        spectrum_p,
        spectrum_q,
        p,
        q,
        r_raw,
        left,
        right,
    ))
}

impl PLGameInstance {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: GeneratorConfig,
        spectrum_p: Vec<f64>,
        spectrum_q: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
        r: Vec<f64>,
        left: Vec<f64>,
        right: Vec<f64>,
    ) -> Self {
        let (n, d) = (config.n, config.d);
        let agg_p = mean_outer(&p, &p, n, d);
        let agg_q = mean_outer(&q, &q, n, d);
        let agg_r = mean_outer(&left, &right, n, d);
        PLGameInstance {
            config,
            spectrum_p,
            spectrum_q,
            p,
            q,
            r,
            left,
            right,
            agg_p,
            agg_q,
            agg_r,
        }
    }

    /// Builds an instance from explicit row-major factors with coupling
    /// `a_i b_iᵀ`. The config echo records `n`, `d` and `well_posed = false`.
    pub fn from_factors(
        d: usize,
        p: Vec<f64>,
        q: Vec<f64>,
        coupling_left: Vec<f64>,
        coupling_right: Vec<f64>,
    ) -> Result<Self> {
        if d == 0 || !p.len().is_multiple_of(d) || p.is_empty() {
            return Err(Error::Dimension("factor length must be a positive multiple of d".into()));
        }
        let n = p.len() / d;
        for (name, m) in [("q", &q), ("coupling_left", &coupling_left), ("coupling_right", &coupling_right)] {
            if m.len() != n * d {
                return Err(Error::Dimension(format!("{name} must have {} entries", n * d)));
            }
        }
        let config = GeneratorConfig {
            n,
            d,
            r: 0,
            mu: 0.0,
            l: 0.0,
            coupling_scale: 0.0,
            seed: 0,
            well_posed: false,
        };
        let raw = coupling_left.clone();
        Ok(Self::assemble(config, vec![], vec![], p, q, raw, coupling_left, coupling_right))
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }
    pub fn d(&self) -> usize {
        self.config.d
    }
    /// Diagonal of the sampled `D` for `Σ_P`.
    pub fn spectrum_p(&self) -> &[f64] {
        &self.spectrum_p
    }
    pub fn spectrum_q(&self) -> &[f64] {
        &self.spectrum_q
    }
    pub fn p_factors(&self) -> &[f64] {
        &self.p
    }
    pub fn q_factors(&self) -> &[f64] {
        &self.q
    }
    /// Coupling factors `(a_i, b_i)` actually used by the components.
    pub fn coupling_factors(&self) -> (&[f64], &[f64]) {
        (&self.left, &self.right)
    }
    pub fn agg_p(&self) -> &DMatrix<f64> {
        &self.agg_p
    }
    pub fn agg_q(&self) -> &DMatrix<f64> {
        &self.agg_q
    }
    pub fn agg_r(&self) -> &DMatrix<f64> {
        &self.agg_r
    }

    /// `(Px + Ry, −Qy + Rᵀx)` from the aggregates.
    pub fn aggregate_gradient(&self, p: &Point) -> (DVector<f64>, DVector<f64>) {
        let gx = &self.agg_p * &p.x + &self.agg_r * &p.y;
        let gy = -(&self.agg_q * &p.y) + self.agg_r.transpose() * &p.x;
        (gx, gy)
    }

    pub fn objective(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.agg_p * x)) - 0.5 * y.dot(&(&self.agg_q * y)) + x.dot(&(&self.agg_r * y))
    }

    /// Largest spectral norm of a component Hessian
    /// `[[p pᵀ, a bᵀ], [b aᵀ, −q qᵀ]]`.
    pub fn component_smoothness(&self) -> f64 {
        let d = self.d();
        let mut h = DMatrix::<f64>::zeros(2 * d, 2 * d);
        let mut best = 0.0f64;
        for i in 0..self.config.n {
            let (p, q) = (row(&self.p, d, i), row(&self.q, d, i));
            let (a, b) = (row(&self.left, d, i), row(&self.right, d, i));
            for r in 0..d {
                for c in 0..d {
                    h[(r, c)] = p[r] * p[c];
                    h[(d + r, d + c)] = -q[r] * q[c];
                    h[(r, d + c)] = a[r] * b[c];
                    h[(d + c, r)] = a[r] * b[c];
                }
            }
            let norm = h
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            best = best.max(norm);
        }
        best
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = InstanceFile {
            format: FORMAT_TAG.into(),
            config: self.config.clone(),
            spectrum_p: self.spectrum_p.clone(),
            spectrum_q: self.spectrum_q.clone(),
            p: self.p.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            coupling_left: self.left.clone(),
            coupling_right: self.right.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        if file.format != FORMAT_TAG {
            return Err(Error::Config(format!(
                "{}: unsupported instance format {:?}",
                path.display(),
                file.format
            )));
        }
        let nd = file.config.n * file.config.d;
        for (name, m) in [
            ("p", &file.p),
            ("q", &file.q),
            ("r", &file.r),
            ("coupling_left", &file.coupling_left),
            ("coupling_right", &file.coupling_right),
        ] {
            if m.len() != nd {
                return Err(Error::Config(format!(
                    "{}: factor {name} has {} entries, expected {nd}",
                    path.display(),
                    m.len()
                )));
            }
        }
        Ok(Self::assemble(
            file.config,
            file.spectrum_p,
            file.spectrum_q,
            file.p,
            file.q,
            file.r,
            file.coupling_left,
            file.coupling_right,
        ))
    }

    /// Conventional file name `plgame_<seed>.json`.
    pub fn file_name(&self) -> String {
        format!("plgame_{}.json", self.config.seed)
    }
}

impl FiniteSumProblem for PLGameInstance {
    fn n(&self) -> usize {
        self.config.n
    }
    fn dim_x(&self) -> usize {
        self.config.d
    }
    fn dim_y(&self) -> usize {
        self.config.d
    }

    fn component_grad_into(&self, i: usize, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let d = self.config.d;
        let (p, q) = (row(&self.p, d, i), row(&self.q, d, i));
        let (a, b) = (row(&self.left, d, i), row(&self.right, d, i));
        let (px, qy, ax, by) = (dot(p, x), dot(q, y), dot(a, x), dot(b, y));
        for k in 0..d {
            gx[k] = px * p[k] + by * a[k];
            gy[k] = -qy * q[k] + ax * b[k];
        }
    }

    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let (x, y) = (DVector::from_column_slice(x), DVector::from_column_slice(y));
        Some(self.objective(&x, &y))
    }
}

/// Estimated problem constants.
///
/// The PL constants are the smallest nonzero eigenvalues of `P` and `Q`;
/// these are exact for the decoupled game and estimates otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    #[serde(rename = "L")]
    pub l: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub kappa_x: f64,
    pub kappa_y: f64,
}

/// Min-norm stationary point and the quantities needed by the metrics.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
    pub g_star: f64,
    pub q_pinv: DMatrix<f64>,
    /// Orthogonal projector onto `range(Q)`.
    pub q_range: DMatrix<f64>,
    pub constants: Constants,
}

impl ReferenceSolution {
    pub fn saddle(&self) -> Point {
        Point::new(self.x_star.clone(), self.y_star.clone())
    }
}

/// Solves `Px + Ry = 0`, `Rᵀx − Qy = 0` in the min-norm sense and estimates
/// `L`, `μ_x`, `μ_y`.
pub fn reference_saddle(instance: &PLGameInstance) -> Result<ReferenceSolution> {
    let d = instance.d();
    let (p, q, r) = (instance.agg_p(), instance.agg_q(), instance.agg_r());
    let mut block = DMatrix::<f64>::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(p);
    block.view_mut((0, d), (d, d)).copy_from(r);
    block.view_mut((d, 0), (d, d)).copy_from(&r.transpose());
    block.view_mut((d, d), (d, d)).copy_from(&(-q));

    let rhs = DVector::<f64>::zeros(2 * d);
    let svd = block.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let z = svd
        .solve(&rhs, RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::ReferenceUnavailable(e.to_string()))?;
    let residual = (&block * &z - &rhs).norm();
    if !(residual <= 1e-6) {
        return Err(Error::ReferenceUnavailable(format!(
            "stationarity system is inconsistent (residual {residual:.3e})"
        )));
    }
    let x_star = z.rows(0, d).into_owned();
    let y_star = z.rows(d, d).into_owned();

    let spec_p = Spectrum::of(p);
    let spec_q = Spectrum::of(q);
    let l = instance.component_smoothness();
    let mu_x = spec_p
        .smallest_nonzero()
        .ok_or_else(|| Error::ReferenceUnavailable("P has no nonzero eigenvalue".into()))?;
    let mu_y = spec_q
        .smallest_nonzero()
        .ok_or_else(|| Error::ReferenceUnavailable("Q has no nonzero eigenvalue".into()))?;
    let constants = Constants {
        l,
        mu_x,
        mu_y,
        kappa_x: l / mu_x,
        kappa_y: l / mu_y,
    };

    let mut sol = ReferenceSolution {
        x_star,
        y_star,
        g_star: 0.0,
        q_pinv: spec_q.pseudo_inverse(),
        q_range: spec_q.range_projector(),
        constants,
    };
    sol.g_star = primal_value(instance, &sol, &sol.x_star)?;
    Ok(sol)
}

/// `g(x) = max_y f(x, y) = ½xᵀPx + ½(Rᵀx)ᵀQ⁺(Rᵀx)` when the inner max is
/// attained, i.e. when `Rᵀx ∈ range(Q)`.
pub fn primal_value(instance: &PLGameInstance, refsol: &ReferenceSolution, x: &DVector<f64>) -> Result<f64> {
    let rtx = instance.agg_r().transpose() * x;
    check_inner_attained(instance, refsol, x, &rtx)?;
    Ok(0.5 * x.dot(&(instance.agg_p() * x)) + 0.5 * rtx.dot(&(&refsol.q_pinv * &rtx)))
}

// Rounding in `Rᵀx` scales with `‖R‖‖x‖`, not with `‖Rᵀx‖`; near the null
// space of `Rᵀ` a relative test would reject attained maxima.
fn check_inner_attained(instance: &PLGameInstance, refsol: &ReferenceSolution, x: &DVector<f64>, rtx: &DVector<f64>) -> Result<()> {
    let residual = (rtx - &refsol.q_range * rtx).norm();
    if residual > 1e-8 * (rtx.norm() + instance.agg_r().norm() * x.norm()) {
        return Err(Error::UnboundedInnerMax { residual });
    }
    Ok(())
}

/// `g(x) − g*`.
pub fn primal_gap(instance: &PLGameInstance, refsol: &ReferenceSolution, x: &DVector<f64>) -> Result<f64> {
    Ok(primal_value(instance, refsol, x)? - refsol.g_star)
}

/// `∇g(x) = Px + RQ⁺Rᵀx`.
pub fn primal_gradient(
    instance: &PLGameInstance,
    refsol: &ReferenceSolution,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rtx = instance.agg_r().transpose() * x;
    check_inner_attained(instance, refsol, x, &rtx)?;
    Ok(instance.agg_p() * x + instance.agg_r() * (&refsol.q_pinv * rtx))
}

/// The inner maximizer `y*(x) = Q⁺Rᵀx` (min-norm representative).
pub fn best_response(refsol: &ReferenceSolution, instance: &PLGameInstance, x: &DVector<f64>) -> DVector<f64> {
    &refsol.q_pinv * (instance.agg_r().transpose() * x)
}

/// `‖x − x*‖² + ‖y − y*‖²` against the min-norm reference.
///
/// When the saddle set is an affine subspace this upper-bounds the squared
/// distance to the set.
pub fn distance_to_saddle(refsol: &ReferenceSolution, p: &Point) -> f64 {
    (&p.x - &refsol.x_star).norm_squared() + (&p.y - &refsol.y_star).norm_squared()
}

/// Numerical rank of a symmetric matrix under [`RANK_TOL`].
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    Spectrum::of(m).rank()
}

/// Borrowed instance plus reference, bundled for metric evaluation.
#[derive(Clone, Copy)]
pub struct GameMetrics<'a> {
    pub instance: &'a PLGameInstance,
    pub reference: &'a ReferenceSolution,
}

impl<'a> GameMetrics<'a> {
    pub fn new(instance: &'a PLGameInstance, reference: &'a ReferenceSolution) -> Self {
        GameMetrics { instance, reference }
    }
}

impl crate::solvers::PrimalReference for GameMetrics<'_> {
    fn primal_value(&self, x: &DVector<f64>) -> Result<f64> {
        primal_value(self.instance, self.reference, x)
    }
    fn optimal_value(&self) -> f64 {
        self.reference.g_star
    }
    fn objective(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.instance.objective(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::tests::fd_gradient;
    use crate::problem::{exact_gradient, Oracle};
    use approx::assert_relative_eq;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n: 48,
            d: 6,
            r: 3,
            mu: 1e-2,
            l: 1.0,
            coupling_scale: 0.1,
            seed,
            well_posed: true,
        }
    }

    fn random_point(rng: &mut crate::Rng, d: usize) -> Point {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        Point::from_slices(&x, &y)
    }

    #[test]
    fn reference_setting_is_accepted_with_rank_five() {
        let inst = generate(&GeneratorConfig::reference_setting(1e-5, 7)).unwrap();
        assert_eq!(numerical_rank(inst.agg_p()), 5);
        assert_eq!(numerical_rank(inst.agg_q()), 5);
    }

    #[test]
    fn config_validation() {
        let mut c = small(0);
        c.r = 6;
        assert!(generate(&c).unwrap_err().to_string().contains("r must be < d"));
        let mut c = small(0);
        c.mu = 1.0;
        assert!(generate(&c).is_err());
        let mut c = small(0);
        c.n = 0;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a.p_factors(), b.p_factors());
        assert_eq!(a.q_factors(), b.q_factors());
        assert_eq!(a.coupling_factors(), b.coupling_factors());
        let c = generate(&small(6)).unwrap();
        assert_ne!(a.p_factors(), c.p_factors());
    }

    #[test]
    fn sampled_spectrum_lies_in_interval() {
        for seed in 0..50 {
            let c = small(seed);
            let inst = generate(&c).unwrap();
            for &v in inst.spectrum_p().iter().chain(inst.spectrum_q()) {
                assert!(v >= c.mu && v <= c.l, "seed {seed}: {v}");
            }
        }
    }

    #[test]
    fn aggregates_are_symmetric_psd_and_low_rank() {
        let inst = generate(&small(2)).unwrap();
        for m in [inst.agg_p(), inst.agg_q()] {
            assert!((m - m.transpose()).amax() <= 1e-12);
            let eig = m.clone().symmetric_eigenvalues();
            assert!(eig.iter().all(|v| *v >= -1e-10));
            assert!(numerical_rank(m) <= 3);
        }
    }

    #[test]
    fn origin_has_zero_component_gradients() {
        let inst = generate(&small(1)).unwrap();
        let mut oracle = Oracle::new(&inst);
        let origin = Point::zeros(6, 6);
        for i in 0..inst.n() {
            assert_eq!(oracle.component_grad(i, &origin).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn component_gradient_formula_and_fd() {
        let inst = generate(&small(3)).unwrap();
        let mut rng = crate::seeded_rng(99, 0);
        let at = random_point(&mut rng, 6);
        let mut oracle = Oracle::new(&inst);
        let d = 6;
        let (a, b) = inst.coupling_factors();
        for i in [0, 17, 47] {
            let g = oracle.component_grad(i, &at).unwrap();
            let (p, q, ai, bi) = (row(&inst.p, d, i), row(&inst.q, d, i), row(a, d, i), row(b, d, i));
            for k in 0..d {
                let ex = dot(p, at.x.as_slice()) * p[k] + dot(bi, at.y.as_slice()) * ai[k];
                let ey = -dot(q, at.y.as_slice()) * q[k] + dot(ai, at.x.as_slice()) * bi[k];
                assert_relative_eq!(g.gx[k], ex, epsilon = 1e-13);
                assert_relative_eq!(g.gy[k], ey, epsilon = 1e-13);
            }
        }
        let fd = fd_gradient(&inst, &at, 1e-5);
        let g = exact_gradient(&inst, &at).unwrap();
        assert!(fd.dist_sq(&g).sqrt() <= 1e-6 * g.norm());
    }

    #[test]
    fn component_mean_matches_aggregates() {
        let inst = generate(&small(4)).unwrap();
        let mut rng = crate::seeded_rng(4, 1);
        for _ in 0..20 {
            let at = random_point(&mut rng, 6);
            let g = exact_gradient(&inst, &at).unwrap();
            let (ax, ay) = inst.aggregate_gradient(&at);
            let scale = (ax.norm_squared() + ay.norm_squared()).sqrt();
            assert!(((&g.gx - ax).norm_squared() + (&g.gy - ay).norm_squared()).sqrt() <= 1e-10 * scale);
        }
    }

    #[test]
    fn reference_is_origin_and_stationary() {
        for seed in 0..20 {
            let inst = generate(&small(100 + seed)).unwrap();
            let sol = reference_saddle(&inst).unwrap();
            let s = sol.saddle();
            assert_eq!(s.x.norm(), 0.0);
            assert_eq!(sol.g_star, 0.0);
            let g = exact_gradient(&inst, &s).unwrap();
            assert!(g.norm() <= 1e-8 * (1.0 + s.x.norm() + s.y.norm()));
        }
    }

    #[test]
    fn identity_game_constants() {
        // d = 1, n = 1, p = q = a = b = 1: P = Q = R = 1
        let inst = PLGameInstance::from_factors(1, vec![1.0], vec![1.0], vec![1.0], vec![1.0]).unwrap();
        let sol = reference_saddle(&inst).unwrap();
        assert_eq!(sol.x_star[0], 0.0);
        assert_eq!(sol.y_star[0], 0.0);
        assert_relative_eq!(sol.constants.mu_x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(sol.constants.mu_y, 1.0, epsilon = 1e-14);
        // Hessian [[1, 1], [1, −1]] has spectral norm √2
        assert_relative_eq!(sol.constants.l, std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_gap() {
        // f = ½x² − ½y² + xy, best response y = x, g(x) = x²
        let inst = PLGameInstance::from_factors(1, vec![1.0], vec![1.0], vec![1.0], vec![1.0]).unwrap();
        let sol = reference_saddle(&inst).unwrap();
        let x = DVector::from_element(1, 2.0);
        assert_relative_eq!(primal_gap(&inst, &sol, &x).unwrap(), 4.0, epsilon = 1e-12);
        assert!(primal_gap(&inst, &sol, &sol.x_star).unwrap().abs() <= 1e-10);
        assert_relative_eq!(primal_gradient(&inst, &sol, &x).unwrap()[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(best_response(&sol, &inst, &x)[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_metric() {
        let inst = generate(&small(8)).unwrap();
        let sol = reference_saddle(&inst).unwrap();
        assert_eq!(distance_to_saddle(&sol, &sol.saddle()), 0.0);
        let mut p = sol.saddle();
        p.x[0] += 1.0;
        assert_eq!(distance_to_saddle(&sol, &p), 1.0);
    }

    #[test]
    fn distance_upper_bounds_grid_distance_on_degenerate_instance() {
        // d = 2, P = diag(1, 0), Q = diag(1, 0), R = 0: saddle set {x = (0, s), y = (0, t)}
        let inst = PLGameInstance::from_factors(
            2,
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let sol = reference_saddle(&inst).unwrap();
        let p = Point::from_slices(&[0.3, 1.2], &[-0.4, -0.7]);
        let metric = distance_to_saddle(&sol, &p);
        let mut brute = f64::INFINITY;
        for i in -200..=200 {
            for j in -200..=200 {
                let (s, t) = (i as f64 * 0.01, j as f64 * 0.01);
                let z = Point::from_slices(&[0.0, s], &[0.0, t]);
                let g = exact_gradient(&inst, &z).unwrap();
                assert!(g.norm() == 0.0);
                brute = brute.min(p.dist_sq(&z));
            }
        }
        assert_relative_eq!(brute, 0.3 * 0.3 + 0.4 * 0.4, epsilon = 1e-12);
        assert!(metric >= brute - 1e-12);
        assert_relative_eq!(metric, 0.09 + 1.44 + 0.16 + 0.49, epsilon = 1e-12);
    }

    #[test]
    fn well_posed_inner_max_is_attained() {
        let inst = generate(&small(9)).unwrap();
        let sol = reference_saddle(&inst).unwrap();
        let mut rng = crate::seeded_rng(9, 3);
        for _ in 0..100 {
            let x = random_point(&mut rng, 6).x;
            let gap = primal_gap(&inst, &sol, &x).unwrap();
            assert!(gap >= -1e-10);
        }
    }

    #[test]
    fn literal_recipe_leaves_inner_max_unbounded() {
        let mut c = small(9);
        c.well_posed = false;
        let inst = generate(&c).unwrap();
        let sol = reference_saddle(&inst).unwrap();
        let x = DVector::from_fn(6, |i, _| 1.0 + i as f64);
        assert!(matches!(
            primal_gap(&inst, &sol, &x),
            Err(Error::UnboundedInnerMax { .. })
        ));
    }

    #[test]
    fn constant_sanity_and_full_rank_eigen_comparison() {
        let inst = generate(&small(12)).unwrap();
        let c = reference_saddle(&inst).unwrap().constants;
        assert!(c.mu_x <= c.l && c.mu_y <= c.l);

        // full-rank factors: μ estimates equal the smallest eigenvalues
        let mut rng = crate::seeded_rng(12, 5);
        let (n, d) = (10, 3);
        let gauss = |rng: &mut crate::Rng| -> Vec<f64> { (0..n * d).map(|_| rng.sample(StandardNormal)).collect() };
        let (p, q, a) = (gauss(&mut rng), gauss(&mut rng), gauss(&mut rng));
        let inst = PLGameInstance::from_factors(d, p, q, a.clone(), a).unwrap();
        let c = reference_saddle(&inst).unwrap().constants;
        let ep = inst.agg_p().clone().symmetric_eigenvalues().min();
        let eq = inst.agg_q().clone().symmetric_eigenvalues().min();
        assert_relative_eq!(c.mu_x, ep, epsilon = 1e-8);
        assert_relative_eq!(c.mu_y, eq, epsilon = 1e-8);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let inst = generate(&small(21)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(inst.file_name());
        assert!(path.ends_with("plgame_21.json"));
        inst.save(&path).unwrap();
        let back = PLGameInstance::load(&path).unwrap();
        assert_eq!(back.config(), inst.config());
        assert_eq!(back.p_factors(), inst.p_factors());
        assert_eq!(back.coupling_factors(), inst.coupling_factors());
        assert_eq!(back.agg_r(), inst.agg_r());
    }
}

//! Difference operators, the angular derivatives `D_{i,j}`, and moduli of
//! smoothness on the sphere, the ball and the interval.
//!
//! All differences are forward differences of `t ↦ f(Q_{i,j,t} x)`, i.e.
//! `Σ_k (-1)^k binom(r,k) f(Q_{i,j,kθ} x)`. This is `(-1)^r (I - T_Q)^r f`,
//! and the sign never matters for a norm.
//!
//! Norm conventions: sphere norms use the plain surface measure `dσ`; ball,
//! interval and extension norms are normalized by the total mass of their
//! weight, so that `‖1‖ = 1`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::core_math::{
    binom, mu_to_m, norm2, rotate_plane, sphere_area, Domain, FunctionHandle, Singularity, MAX_DIM,
};
use crate::error::{Error, Result};
use crate::quadrature::{
    ball_chart_rule, ball_rule, ball_weight_mass, composite_rule_with, periodic_rule_with, sphere_chart_rule,
    sphere_rule, tilde_gauss_rule, BallDirections, Cubature, Grading, QuadratureRule, RuleDomain, SphereChart,
    TildeFocals, TildeRule, WeightSpec,
};

/// Which difference a [`DifferenceSpec`] describes. Axes are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceKind {
    Euler { i: usize, j: usize },
    CentralPhi { i: usize },
    Forward { i: usize },
    Backward { i: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSpec {
    pub kind: DifferenceKind,
    pub r: usize,
    pub theta: f64,
}

impl DifferenceSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("difference order r must be >= 1"));
        }
        match self.kind {
            DifferenceKind::Euler { i, j } => {
                pair(i, j, d)?;
            }
            DifferenceKind::CentralPhi { i } | DifferenceKind::Forward { i } | DifferenceKind::Backward { i } => {
                axis(i, d)?;
            }
        }
        Ok(())
    }

    pub fn apply(&self, f: &FunctionHandle, x: &[f64]) -> Result<f64> {
        self.validate(x.len())?;
        Ok(match self.kind {
            DifferenceKind::Euler { i, j } => euler_difference(f, i, j, self.theta, self.r, x)?,
            DifferenceKind::CentralPhi { i } => central_difference_phi(f, i, self.theta, self.r, x)?,
            DifferenceKind::Forward { i } => {
                forward_backward_difference(f, i, self.theta, self.r, x, Direction::Forward)?
            }
            DifferenceKind::Backward { i } => {
                forward_backward_difference(f, i, self.theta, self.r, x, Direction::Backward)?
            }
        })
    }
}

fn pair(i: usize, j: usize, d: usize) -> Result<(usize, usize)> {
    if i == 0 || j == 0 || i > d || j > d || i == j {
        return Err(Error::invalid(format!("need 1 <= i != j <= {d}, got ({i}, {j})")));
    }
    Ok((i - 1, j - 1))
}

fn axis(i: usize, d: usize) -> Result<usize> {
    if i == 0 || i > d {
        return Err(Error::invalid(format!("axis {i} out of range 1..={d}")));
    }
    Ok(i - 1)
}

fn signed_binomials(r: usize) -> Vec<f64> {
    (0..=r).map(|k| if k % 2 == 0 { binom(r, k) } else { -binom(r, k) }).collect()
}

/// Precomputed `Σ_k c_k f(Q_{kθ} x)` in one coordinate plane (0-based).
#[derive(Debug, Clone)]
struct EulerStencil {
    i0: usize,
    j0: usize,
    coef: Vec<f64>,
    cs: Vec<(f64, f64)>,
}

impl EulerStencil {
    fn new(i0: usize, j0: usize, theta: f64, r: usize) -> Self {
        Self {
            i0,
            j0,
            coef: signed_binomials(r),
            cs: (0..=r).map(|k| (k as f64 * theta).sin_cos()).map(|(s, c)| (c, s)).collect(),
        }
    }

    /// `g` is called on rotated copies of `x`.
    #[inline]
    fn apply(&self, g: impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
        let n = x.len();
        let mut y = [0.0; MAX_DIM];
        let y = &mut y[..n];
        let mut acc = 0.0;
        for (c, &(co, si)) in self.coef.iter().zip(&self.cs) {
            y.copy_from_slice(x);
            rotate_plane(y, self.i0, self.j0, co, si);
            acc += c * g(y);
        }
        acc
    }
}

fn check_len(x: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() > MAX_DIM {
        return Err(Error::invalid(format!("point dimension {} unsupported", x.len())));
    }
    Ok(())
}

/// `Σ_{k=0}^r (-1)^k binom(r,k) f(Q_{i,j,kθ} x)`; equals `(-1)^r (I - T_Q)^r f(x)`.
pub fn euler_difference(f: &FunctionHandle, i: usize, j: usize, theta: f64, r: usize, x: &[f64]) -> Result<f64> {
    check_len(x)?;
    let (i0, j0) = pair(i, j, x.len())?;
    Ok(EulerStencil::new(i0, j0, theta, r).apply(|y| f.eval(y), x))
}

/// `φ(x) = √(1 - ‖x‖²)`.
pub fn phi(x: &[f64]) -> f64 {
    (1.0 - norm2(x)).max(0.0).sqrt()
}

/// Symmetric difference `Σ_k (-1)^k binom(r,k) f(x + (r/2 - k) h φ(x) e_i)`,
/// set to 0 when `x ± (r/2) h φ(x) e_i` leaves the ball.
pub fn central_difference_phi(f: &FunctionHandle, i: usize, h: f64, r: usize, x: &[f64]) -> Result<f64> {
    check_len(x)?;
    let i0 = axis(i, x.len())?;
    Ok(central_raw(&|y| f.eval(y), i0, h, r, &signed_binomials(r), x))
}

fn central_raw(g: &dyn Fn(&[f64]) -> f64, i0: usize, h: f64, r: usize, coef: &[f64], x: &[f64]) -> f64 {
    let step = h * phi(x);
    if step == 0.0 {
        return 0.0;
    }
    let half = 0.5 * r as f64 * step;
    let rest = norm2(x) - x[i0] * x[i0];
    for s in [-half, half] {
        let v = x[i0] + s;
        if rest + v * v > 1.0 + 1e-14 {
            return 0.0;
        }
    }
    let mut y = [0.0; MAX_DIM];
    let y = &mut y[..x.len()];
    y.copy_from_slice(x);
    let mut acc = 0.0;
    for (k, c) in coef.iter().enumerate() {
        y[i0] = x[i0] + (0.5 * r as f64 - k as f64) * step;
        acc += c * g(y);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// One-sided difference `Σ_k (-1)^k binom(r,k) f(x ± k h e_i)`, 0 when the
/// last point leaves the ball.
pub fn forward_backward_difference(
    f: &FunctionHandle,
    i: usize,
    h: f64,
    r: usize,
    x: &[f64],
    dir: Direction,
) -> Result<f64> {
    check_len(x)?;
    let i0 = axis(i, x.len())?;
    Ok(one_sided_raw(&|y| f.eval(y), i0, h, r, &signed_binomials(r), x, dir))
}

fn one_sided_raw(
    g: &dyn Fn(&[f64]) -> f64,
    i0: usize,
    h: f64,
    r: usize,
    coef: &[f64],
    x: &[f64],
    dir: Direction,
) -> f64 {
    let sgn = match dir {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let end = x[i0] + sgn * r as f64 * h;
    if norm2(x) - x[i0] * x[i0] + end * end > 1.0 + 1e-14 {
        return 0.0;
    }
    let mut y = [0.0; MAX_DIM];
    let y = &mut y[..x.len()];
    y.copy_from_slice(x);
    let mut acc = 0.0;
    for (k, c) in coef.iter().enumerate() {
        y[i0] = x[i0] + sgn * k as f64 * h;
        acc += c * g(y);
    }
    acc
}

/// Sample count used by [`dij_derivative`] for a given degree hint.
pub fn circle_samples(degree_hint: Option<usize>) -> usize {
    match degree_hint {
        Some(n) => 2 * n + 1,
        None => 129,
    }
}

/// Weights `c_l` with `g^{(r)}(0) = Σ_l c_l g(2πl/N)` for trigonometric
/// polynomials of degree `≤ (N-1)/2`, `N` odd.
pub fn trig_derivative_weights(n_pts: usize, r: usize) -> Vec<f64> {
    let k_max = (n_pts - 1) / 2;
    let h = 2.0 * PI / n_pts as f64;
    (0..n_pts)
        .map(|l| {
            let tl = l as f64 * h;
            let mut acc = 0.0;
            for m in 1..=k_max {
                let mf = m as f64;
                acc += mf.powi(r as i32) * (0.5 * PI * r as f64 - mf * tl).cos();
            }
            2.0 * acc / n_pts as f64
        })
        .collect()
}

/// `D_{i,j}^r f(x) = (-1)^r (d/dt)^r f(Q_{i,j,t} x)|_{t=0}` with
/// `D_{i,j} = x_j ∂_i - x_i ∂_j`, by trigonometric interpolation on the
/// rotation circle. Exact when `f` restricted to the circle is a
/// trigonometric polynomial of degree `≤ degree_hint`.
pub fn dij_derivative(f: &FunctionHandle, i: usize, j: usize, r: usize, x: &[f64]) -> Result<f64> {
    check_len(x)?;
    let (i0, j0) = pair(i, j, x.len())?;
    let n_pts = circle_samples(f.degree_hint());
    let w = trig_derivative_weights(n_pts, r);
    Ok(dij_with_weights(&|y| f.eval(y), i0, j0, r, &w, x))
}

fn dij_with_weights(g: &dyn Fn(&[f64]) -> f64, i0: usize, j0: usize, r: usize, w: &[f64], x: &[f64]) -> f64 {
    let n_pts = w.len();
    let h = 2.0 * PI / n_pts as f64;
    let mut y = [0.0; MAX_DIM];
    let y = &mut y[..x.len()];
    let mut acc = 0.0;
    for (l, wl) in w.iter().enumerate() {
        let (s, c) = (l as f64 * h).sin_cos();
        y.copy_from_slice(x);
        rotate_plane(y, i0, j0, c, s);
        acc += wl * g(y);
    }
    if r % 2 == 1 {
        -acc
    } else {
        acc
    }
}

/// Reusable `D_{i,j}^r` evaluator for a fixed sample count.
#[derive(Debug, Clone)]
pub struct DijOperator {
    i0: usize,
    j0: usize,
    r: usize,
    weights: Vec<f64>,
}

impl DijOperator {
    /// `i, j` 1-based; `degree` bounds the degree of the functions it is applied to.
    pub fn new(i: usize, j: usize, r: usize, d: usize, degree: Option<usize>) -> Result<Self> {
        let (i0, j0) = pair(i, j, d)?;
        let weights = trig_derivative_weights(circle_samples(degree), r);
        Ok(Self { i0, j0, r, weights })
    }

    pub fn apply(&self, g: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
        dij_with_weights(g, self.i0, self.j0, self.r, &self.weights, x)
    }
}

/// `(d/ds)^r g(x + s v)|_{s=0}`, exact when this restriction is a polynomial
/// of degree `≤ degree`. Uses Chebyshev interpolation on `s ∈ [-h, h]`.
pub fn line_derivative(g: &dyn Fn(&[f64]) -> f64, x: &[f64], v: &[f64], r: usize, degree: usize, h: f64) -> f64 {
    if r > degree {
        return 0.0;
    }
    let n = degree.max(1);
    let mut vals = vec![0.0; n + 1];
    let mut y = vec![0.0; x.len()];
    for (l, val) in vals.iter_mut().enumerate() {
        let u = (PI * l as f64 / n as f64).cos();
        for k in 0..x.len() {
            y[k] = x[k] + h * u * v[k];
        }
        *val = g(&y);
    }
    let mut a = vec![0.0; n + 1];
    for (k, ak) in a.iter_mut().enumerate() {
        let mut s = 0.0;
        for (l, &fl) in vals.iter().enumerate() {
            let c = if l == 0 || l == n { 0.5 } else { 1.0 };
            s += c * fl * (PI * (k * l) as f64 / n as f64).cos();
        }
        *ak = 2.0 * s / n as f64;
    }
    a[0] *= 0.5;
    a[n] *= 0.5;
    for _ in 0..r {
        a = chebyshev_derivative(&a);
    }
    let value_at_zero: f64 = a
        .iter()
        .enumerate()
        .map(|(k, c)| match k % 4 {
            0 => *c,
            2 => -*c,
            _ => 0.0,
        })
        .sum();
    value_at_zero / h.powi(r as i32)
}

fn chebyshev_derivative(a: &[f64]) -> Vec<f64> {
    let n = a.len() - 1;
    if n == 0 {
        return vec![0.0];
    }
    let mut b = vec![0.0; n + 1];
    for k in (1..=n).rev() {
        let next = if k < n { b[k + 1] } else { 0.0 };
        b[k - 1] = next + 2.0 * k as f64 * a[k];
    }
    b[0] *= 0.5;
    b.truncate(n);
    b
}

/// Which modulus a request asks for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Euler-angle modulus on `S^{d-1}`.
    Sphere,
    /// Same, with `sup` over both signs of θ and the request's weight.
    SphereWeighted,
    /// Ball modulus for `W_μ`, `μ = (m-1)/2`.
    Ball { mu: f64 },
    /// Interval modulus for `(1-x²)^{μ-1/2}`, any `μ ≥ 0`.
    Interval { mu: f64 },
    /// Ditzian–Totik analogue on the unweighted ball.
    DtBall,
    /// Weighted Ditzian–Totik analogue, `μ > 1/2`, `p < ∞`.
    DtBallWeighted { mu: f64 },
}

#[derive(Debug, Clone)]
pub struct ModulusRequest {
    pub f: FunctionHandle,
    pub r: usize,
    pub p: f64,
    pub t: f64,
    pub weight: WeightSpec,
    pub variant: Variant,
    pub theta_grid_size: usize,
}

/// Default number of step sizes sampled in `(0, t]`.
pub const DEFAULT_THETA_GRID: usize = 17;

impl ModulusRequest {
    pub fn new(f: FunctionHandle, r: usize, p: f64, t: f64, variant: Variant) -> Self {
        Self { f, r, p, t, weight: WeightSpec::Unit, variant, theta_grid_size: DEFAULT_THETA_GRID }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("r must be >= 1"));
        }
        if !(self.p >= 1.0) {
            return Err(Error::invalid(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.t > 0.0 && self.t <= PI) {
            return Err(Error::invalid(format!("t must lie in (0, π], got {}", self.t)));
        }
        if self.theta_grid_size == 0 {
            return Err(Error::invalid("θ grid needs at least one point"));
        }
        self.weight.validate()?;
        let dom = self.f.domain();
        let ok = match self.variant {
            Variant::Sphere | Variant::SphereWeighted => matches!(dom, Domain::Sphere(d) if d >= 2),
            Variant::Ball { mu } => {
                mu_to_m(mu)?;
                matches!(dom, Domain::Ball(_) | Domain::Interval)
            }
            Variant::Interval { mu } => {
                if mu < 0.0 {
                    return Err(Error::invalid(format!("μ must be >= 0, got {mu}")));
                }
                matches!(dom, Domain::Interval | Domain::Ball(1))
            }
            Variant::DtBall => matches!(dom, Domain::Ball(_) | Domain::Interval),
            Variant::DtBallWeighted { mu } => {
                if !(mu > 0.5) {
                    return Err(Error::invalid(format!("weighted DT modulus needs μ > 1/2, got {mu}")));
                }
                if self.p.is_infinite() {
                    return Err(Error::Unsupported("weighted DT modulus is not defined for p = ∞".into()));
                }
                matches!(dom, Domain::Ball(_) | Domain::Interval)
            }
        };
        if !ok {
            return Err(Error::invalid(format!("variant {:?} does not match domain {:?}", self.variant, dom)));
        }
        Ok(())
    }
}

/// Step sizes `t·2^{-k/2}`, `k = 0..size`.
pub fn theta_grid(t: f64, size: usize) -> Vec<f64> {
    (0..size).map(|k| t * 2f64.powf(-(k as f64) / 2.0)).collect()
}

/// Composite rules graded toward the singular set of the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptedQuad {
    pub points_per_panel: usize,
    pub hmax: f64,
    /// Smallest panel, relative to the step (angles) or its square (radii).
    pub rel_hmin: f64,
    /// Smallest panel at fixed singularities that do not move with the step.
    pub abs_hmin: f64,
    /// Equispaced azimuth count when no focal angle is known.
    pub azimuth_points: usize,
}

impl Default for AdaptedQuad {
    fn default() -> Self {
        Self { points_per_panel: 4, hmax: 0.25, rel_hmin: 1e-3, abs_hmin: 1e-6, azimuth_points: 64 }
    }
}

impl AdaptedQuad {
    fn grading(&self, hmin: f64) -> Grading {
        Grading { points_per_panel: self.points_per_panel, hmin, hmax: self.hmax }
    }
}

/// How norms are discretized.
#[derive(Debug, Clone)]
pub enum NormQuadrature {
    /// A caller-supplied rule on the domain of `f`. Extension terms use the
    /// product rule of the same exact degree.
    Rule(Arc<QuadratureRule>),
    /// Product rules exact to this degree; right for polynomial inputs.
    Exact {
        degree: usize,
    },
    Adapted(AdaptedQuad),
}

impl NormQuadrature {
    /// Exact rules for polynomials at `p = 2`, graded rules otherwise.
    pub fn auto(f: &FunctionHandle, p: f64) -> Self {
        match f.degree_hint() {
            Some(n) if p == 2.0 => NormQuadrature::Exact { degree: 2 * n + 2 },
            _ => NormQuadrature::Adapted(AdaptedQuad::default()),
        }
    }
}

/// Membership regions used by the weighted DT modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSpec {
    /// `s ∈ [-1 + 2t², 1 - 2t²]`.
    I { i: usize, t: f64 },
    /// `s ∈ [1 - 12t², 1]` (`sign = 1`) or `[-1, -1 + 12t²]` (`sign = -1`).
    J { sign: i8, i: usize, t: f64 },
}

impl RegionSpec {
    /// `s = x_i / √(1 - ‖x̂_i‖²)`, with `x̂_i` the point without coordinate `i`.
    pub fn coordinate(i: usize, x: &[f64]) -> f64 {
        let i0 = i - 1;
        let rest = norm2(x) - x[i0] * x[i0];
        let r = (1.0 - rest).max(0.0).sqrt();
        if r == 0.0 {
            0.0
        } else {
            x[i0] / r
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            RegionSpec::I { i, t } => {
                let s = Self::coordinate(i, x);
                s >= -1.0 + 2.0 * t * t && s <= 1.0 - 2.0 * t * t
            }
            RegionSpec::J { sign, i, t } => {
                let s = Self::coordinate(i, x);
                if sign > 0 {
                    s >= 1.0 - 12.0 * t * t
                } else {
                    s <= -1.0 + 12.0 * t * t
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Term {
    Euler(usize, usize),
    Tilde(usize),
    Central(usize),
    CentralI(usize),
    BackwardJ(usize),
    ForwardJ(usize),
}

/// Caches term norms so that curves over a geometric `t` grid reuse steps.
pub struct ModulusEvaluator {
    f: FunctionHandle,
    r: usize,
    p: f64,
    weight: WeightSpec,
    variant: Variant,
    quad: NormQuadrature,
    cache: Mutex<HashMap<(Term, i64, i64), f64>>,
}

fn key(x: f64) -> i64 {
    if x == 0.0 {
        return i64::MIN;
    }
    let k = (x.abs().log2() * 1e6).round() as i64;
    if x < 0.0 {
        -k - (1 << 40)
    } else {
        k
    }
}

impl ModulusEvaluator {
    pub fn new(req: &ModulusRequest, quad: NormQuadrature) -> Result<Self> {
        req.validate()?;
        Ok(Self {
            f: req.f.clone(),
            r: req.r,
            p: req.p,
            weight: req.weight.clone(),
            variant: req.variant,
            quad,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn d(&self) -> usize {
        self.f.domain().dim()
    }

    /// The modulus at scale `t` with a `grid`-point step grid.
    pub fn at(&self, t: f64, grid: usize) -> Result<f64> {
        if !(t > 0.0 && t <= PI) {
            return Err(Error::invalid(format!("t must lie in (0, π], got {t}")));
        }
        let d = self.d();
        let steps = theta_grid(t, grid.max(1));
        let euler_steps: Vec<f64> = match self.variant {
            Variant::SphereWeighted => steps.iter().flat_map(|&s| [s, -s]).collect(),
            _ => steps.clone(),
        };
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
        let sup = |term: Term, list: &[f64], region: f64| -> Result<f64> {
            let mut m: f64 = 0.0;
            for &s in list {
                m = m.max(self.term(term, s, region)?);
            }
            Ok(m)
        };
        let mut best: f64 = 0.0;
        match self.variant {
            Variant::Sphere | Variant::SphereWeighted => {
                for &(i, j) in &pairs {
                    best = best.max(sup(Term::Euler(i, j), &euler_steps, 0.0)?);
                }
            }
            Variant::Ball { .. } | Variant::Interval { .. } => {
                for &(i, j) in &pairs {
                    best = best.max(sup(Term::Euler(i, j), &steps, 0.0)?);
                }
                for i in 0..d {
                    best = best.max(sup(Term::Tilde(i), &steps, 0.0)?);
                }
            }
            Variant::DtBall => {
                for &(i, j) in &pairs {
                    best = best.max(sup(Term::Euler(i, j), &steps, 0.0)?);
                }
                for i in 0..d {
                    best = best.max(sup(Term::Central(i), &steps, 0.0)?);
                }
            }
            Variant::DtBallWeighted { .. } => {
                let mut e: f64 = 0.0;
                for &(i, j) in &pairs {
                    e = e.max(sup(Term::Euler(i, j), &steps, 0.0)?);
                }
                let mut c: f64 = 0.0;
                for &h in &steps {
                    for i in 0..d {
                        c = c.max(self.term(Term::CentralI(i), h, 0.0)?);
                    }
                }
                let rt = self.r as f64 * t;
                let hmax = 12.0 * rt * t * self.r as f64;
                let jsteps = theta_grid(hmax, grid.max(1));
                let mut jpart: f64 = 0.0;
                for &h in &jsteps {
                    for i in 0..d {
                        let v = self.term(Term::BackwardJ(i), h, rt)? + self.term(Term::ForwardJ(i), h, rt)?;
                        jpart = jpart.max(v);
                    }
                }
                best = e + c + jpart;
            }
        }
        Ok(best)
    }

    fn term(&self, term: Term, step: f64, region: f64) -> Result<f64> {
        let k = (term, key(step), key(region));
        if let Some(v) = self.cache.lock().expect("cache lock").get(&k) {
            return Ok(*v);
        }
        let v = self.compute(term, step, region)?;
        self.cache.lock().expect("cache lock").insert(k, v);
        Ok(v)
    }

    fn ball_mu(&self) -> f64 {
        match self.variant {
            Variant::Ball { mu } | Variant::Interval { mu } | Variant::DtBallWeighted { mu } => mu,
            _ => 0.5,
        }
    }

    fn compute(&self, term: Term, step: f64, region: f64) -> Result<f64> {
        let f = &self.f;
        let r = self.r;
        let d = self.d();
        let coef = signed_binomials(r);
        match term {
            Term::Euler(i0, j0) => {
                let st = EulerStencil::new(i0, j0, step, r);
                let g = |x: &[f64]| st.apply(|y| f.eval(y), x);
                match self.variant {
                    Variant::Sphere | Variant::SphereWeighted => {
                        let rule = self.sphere_euler_rule(i0, j0, step)?;
                        norm(rule.as_ref(), self.p, None, &self.weight, &g)
                    }
                    _ => {
                        let mu = self.ball_mu();
                        let rule = self.ball_rule_for(Some((i0, j0)), step, mu)?;
                        norm(rule.as_ref(), self.p, Some(ball_weight_mass(d, mu)), &self.weight, &g)
                    }
                }
            }
            Term::Tilde(i0) => {
                let mu = self.ball_mu();
                let st = EulerStencil::new(i0, d, step, r);
                let g = |y: &[f64]| st.apply(|z| f.eval(&z[..d]), y);
                let rule = self.tilde_rule(i0, step, mu)?;
                let mass = if mu == 0.0 { sphere_area(d + 1) } else { ball_weight_mass(d + 1, mu - 0.5) };
                norm(rule.as_ref(), self.p, Some(mass), &WeightSpec::Unit, &g)
            }
            Term::Central(i0) | Term::CentralI(i0) => {
                let mu = self.ball_mu();
                let rule = self.ball_rule_for(None, step, mu)?;
                let region_spec = RegionSpec::I { i: i0 + 1, t: r as f64 * step };
                let restrict = matches!(term, Term::CentralI(_));
                let g = |x: &[f64]| {
                    if restrict && !region_spec.contains(x) {
                        return 0.0;
                    }
                    central_raw(&|y| f.eval(y), i0, step, r, &coef, x)
                };
                norm(rule.as_ref(), self.p, Some(ball_weight_mass(d, mu)), &self.weight, &g)
            }
            Term::BackwardJ(i0) | Term::ForwardJ(i0) => {
                let mu = self.ball_mu();
                let (sign, dir) = match term {
                    Term::BackwardJ(_) => (1, Direction::Backward),
                    _ => (-1, Direction::Forward),
                };
                let region_spec = RegionSpec::J { sign, i: i0 + 1, t: region };
                // the one-sided step is already of order t², so grade to rel·h
                let rule = self.ball_rule_for(None, step.sqrt(), mu)?;
                let g = |x: &[f64]| {
                    if !region_spec.contains(x) {
                        return 0.0;
                    }
                    one_sided_raw(&|y| f.eval(y), i0, step, r, &coef, x, dir)
                };
                norm(rule.as_ref(), self.p, Some(ball_weight_mass(d, mu)), &self.weight, &g)
            }
        }
    }

    fn sphere_euler_rule(&self, i0: usize, j0: usize, step: f64) -> Result<Box<dyn Cubature>> {
        let d = self.d();
        let aq = match &self.quad {
            NormQuadrature::Rule(r) => return Ok(Box::new((**r).clone())),
            NormQuadrature::Exact { degree } => return Ok(Box::new(sphere_rule(d, *degree)?)),
            NormQuadrature::Adapted(a) => *a,
        };
        let h = (aq.rel_hmin * step.abs()).max(1e-14);
        let g = aq.grading(h);
        let shifted = shifted_singularities(self.f.singular_set(), i0, j0, step, self.r);
        if d == 2 {
            let mut foc = Vec::new();
            for s in &shifted {
                match s {
                    Singularity::Point(z) => foc.push((z[1].atan2(z[0]), h)),
                    Singularity::Hyperplane(n) => {
                        let a = n[1].atan2(n[0]);
                        foc.push((a + PI / 2.0, h));
                        foc.push((a - PI / 2.0, h));
                    }
                    Singularity::Boundary => {}
                }
            }
            let az = periodic_rule_with(aq.azimuth_points, &foc, &g)?;
            let nodes = az.nodes.iter().map(|t| vec![t.cos(), t.sin()]).collect();
            return Ok(Box::new(QuadratureRule::new(RuleDomain::Sphere { d: 2 }, nodes, az.weights, None)?));
        }
        let pole = if d == 3 {
            let mut e = vec![0.0; 3];
            e[3 - i0 - j0] = 1.0;
            e
        } else {
            first_point(&shifted).unwrap_or_else(|| {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            })
        };
        let chart = chart_with_focals(SphereChart::new(pole).azimuths(aq.azimuth_points), &shifted);
        Ok(Box::new(sphere_chart_rule(&chart, &g)?.rule))
    }

    /// Euler terms (`plane = Some`) or DT terms on the ball.
    fn ball_rule_for(&self, plane: Option<(usize, usize)>, step: f64, mu: f64) -> Result<Box<dyn Cubature>> {
        let d = self.d();
        let aq = match &self.quad {
            NormQuadrature::Rule(r) => return Ok(Box::new((**r).clone())),
            NormQuadrature::Exact { degree } => return Ok(Box::new(ball_rule(d, mu, *degree)?)),
            NormQuadrature::Adapted(a) => *a,
        };
        let (shifted, h_rad) = match plane {
            Some((i0, j0)) => {
                let h = (aq.rel_hmin * step.abs()).max(1e-14);
                (shifted_singularities(self.f.singular_set(), i0, j0, step, self.r), h)
            }
            None => {
                let h = (aq.rel_hmin * step * step).max(1e-14);
                (self.f.singular_set().to_vec(), h)
            }
        };
        let (radial, phis) = ball_focals(&shifted, d);
        let g_rad = aq.grading(h_rad);
        if d == 1 {
            let foc: Vec<(f64, f64)> = radial.iter().flat_map(|&r| [(r, h_rad), (-r, h_rad)]).collect();
            let rule = composite_rule_with(-1.0, 1.0, &foc, mu - 0.5, mu - 0.5, &g_rad)?;
            let nodes = rule.nodes.iter().map(|&x| vec![x]).collect();
            return Ok(Box::new(QuadratureRule::new(RuleDomain::Ball { d: 1, mu }, nodes, rule.weights, None)?));
        }
        let dirs = if d == 2 {
            BallDirections::Circle { phi_focals: phis, points: aq.azimuth_points }
        } else {
            let pole = match plane {
                Some((i0, j0)) if d == 3 => {
                    let mut e = vec![0.0; 3];
                    e[3 - i0 - j0] = 1.0;
                    e
                }
                _ => first_point(&shifted).unwrap_or_else(|| {
                    let mut e = vec![0.0; d];
                    e[0] = 1.0;
                    e
                }),
            };
            BallDirections::Sphere(chart_with_focals(SphereChart::new(pole).azimuths(aq.azimuth_points), &shifted))
        };
        Ok(Box::new(ball_chart_rule(d, mu, &radial, &dirs, &g_rad)?.rule))
    }

    fn tilde_rule(&self, i0: usize, step: f64, mu: f64) -> Result<Box<dyn Cubature>> {
        let d = self.d();
        let aq = match &self.quad {
            NormQuadrature::Rule(r) => {
                let deg = r.exact_degree().unwrap_or(32);
                return Ok(Box::new(tilde_gauss_rule(d, mu, deg, deg)?));
            }
            NormQuadrature::Exact { degree } => return Ok(Box::new(tilde_gauss_rule(d, mu, *degree, *degree)?)),
            NormQuadrature::Adapted(a) => *a,
        };
        let h_ang = (aq.rel_hmin * step.abs()).max(1e-14);
        let h_rad = (aq.rel_hmin * step * step).max(1e-15);
        let mut foc = TildeFocals {
            corner_floor: h_ang,
            beta_points: aq.azimuth_points,
            xhat_degree: 4 * aq.points_per_panel,
            ..Default::default()
        };
        for k in 0..=self.r {
            let shift = k as f64 * step;
            for s in self.f.singular_set() {
                match s {
                    Singularity::Point(z) => {
                        let zhat: Vec<f64> = (0..d).filter(|&a| a != i0).map(|a| z[a]).collect();
                        let big_r = (1.0 - norm2(&zhat)).max(0.0).sqrt();
                        if d == 2 {
                            foc.xhat.push((zhat[0], h_rad));
                        }
                        if big_r < 1e-12 {
                            continue;
                        }
                        let ratio = z[i0] / big_r;
                        if ratio.abs() >= 1.0 - 1e-9 {
                            foc.rho.push((1.0, h_rad));
                            foc.beta_corner.push(if ratio > 0.0 { -shift } else { PI - shift });
                        } else {
                            foc.rho.push((ratio.abs(), h_ang));
                            let b = ratio.acos();
                            foc.beta_fixed.push((b - shift, h_ang));
                            foc.beta_fixed.push((-b - shift, h_ang));
                        }
                    }
                    Singularity::Hyperplane(n) => {
                        let nn = norm2(n).sqrt();
                        if (n[i0].abs() - nn).abs() < 1e-12 * nn {
                            foc.beta_fixed.push((PI / 2.0 - shift, h_ang));
                            foc.beta_fixed.push((-PI / 2.0 - shift, h_ang));
                        } else if d == 2 && n[i0].abs() < 1e-12 * nn {
                            foc.xhat.push((0.0, aq.abs_hmin));
                        }
                    }
                    Singularity::Boundary => {
                        foc.rho.push((1.0, h_rad));
                        foc.beta_corner.push(-shift);
                        foc.beta_corner.push(PI - shift);
                        foc.xhat.push((-1.0, aq.abs_hmin));
                        foc.xhat.push((1.0, aq.abs_hmin));
                    }
                }
            }
        }
        Ok(Box::new(TildeRule::graded(d, mu, i0, &foc, &aq.grading(h_ang))?))
    }
}

/// Radial focals and (d = 2) azimuth focals of a singular set in `B^d`.
pub(crate) fn ball_focals(set: &[Singularity], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut radial: Vec<f64> = Vec::new();
    let mut phis: Vec<f64> = Vec::new();
    for s in set {
        match s {
            Singularity::Point(z) => {
                let rz = norm2(z).sqrt();
                radial.push(rz.min(1.0));
                if d == 1 {
                    radial.push(-z[0]);
                }
                if d == 2 && rz > 1e-12 {
                    phis.push(z[1].atan2(z[0]));
                }
            }
            Singularity::Hyperplane(n) => {
                if d == 1 {
                    radial.push(0.0);
                } else if d == 2 {
                    let a = n[1].atan2(n[0]);
                    phis.push(a + PI / 2.0);
                    phis.push(a - PI / 2.0);
                }
            }
            Singularity::Boundary => radial.push(1.0),
        }
    }
    (radial, phis)
}

/// A rule on the domain of `f` (weight `W_μ` for balls), graded toward the
/// singular set of `f` when `quad` is adapted.
pub(crate) fn domain_cubature(f: &FunctionHandle, mu: f64, quad: &NormQuadrature) -> Result<Box<dyn Cubature>> {
    let variant = match f.domain() {
        Domain::Sphere(_) => Variant::Sphere,
        Domain::Ball(_) => Variant::Ball { mu },
        Domain::Interval => Variant::Interval { mu },
    };
    let ev = ModulusEvaluator {
        f: f.clone(),
        r: 0,
        p: 2.0,
        weight: WeightSpec::Unit,
        variant,
        quad: quad.clone(),
        cache: Mutex::new(HashMap::new()),
    };
    match (f.domain(), quad) {
        (Domain::Sphere(_), NormQuadrature::Adapted(a)) => ev.sphere_euler_rule(0, 1, a.abs_hmin / a.rel_hmin),
        (Domain::Sphere(_), _) => ev.sphere_euler_rule(0, 1, 1.0),
        (_, NormQuadrature::Adapted(a)) => ev.ball_rule_for(None, (a.abs_hmin / a.rel_hmin).sqrt(), mu),
        _ => ev.ball_rule_for(None, 1.0, mu),
    }
}

/// Unweighted `L^p` norm over a cubature, divided by `mass` when given.
pub(crate) fn cubature_norm(
    rule: &dyn Cubature,
    p: f64,
    mass: Option<f64>,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<f64> {
    norm(rule, p, mass, &WeightSpec::Unit, g)
}

pub(crate) fn first_point(s: &[Singularity]) -> Option<Vec<f64>> {
    s.iter().find_map(|x| match x {
        Singularity::Point(z) if norm2(z) > 1e-20 => {
            let n = norm2(z).sqrt();
            Some(z.iter().map(|v| v / n).collect())
        }
        _ => None,
    })
}

/// Singular sets of `x ↦ f(Q_{kθ} x)`, `k = 0..=r`: `Q_{-kθ}` applied to each.
fn shifted_singularities(s: &[Singularity], i0: usize, j0: usize, step: f64, r: usize) -> Vec<Singularity> {
    let mut out = Vec::new();
    for k in 0..=r {
        let (sn, cs) = (-(k as f64) * step).sin_cos();
        for x in s {
            out.push(match x {
                Singularity::Point(z) => {
                    let mut z = z.clone();
                    rotate_plane(&mut z, i0, j0, cs, sn);
                    Singularity::Point(z)
                }
                Singularity::Hyperplane(n) => {
                    let mut n = n.clone();
                    rotate_plane(&mut n, i0, j0, cs, sn);
                    Singularity::Hyperplane(n)
                }
                Singularity::Boundary => Singularity::Boundary,
            });
        }
    }
    out
}

pub(crate) fn chart_with_focals(mut chart: SphereChart, s: &[Singularity]) -> SphereChart {
    let d = chart.pole.len();
    for x in s {
        match x {
            Singularity::Point(z) => {
                let n = norm2(z).sqrt();
                if n > 1e-12 {
                    let u: Vec<f64> = z.iter().map(|v| v / n).collect();
                    chart = chart.focus_point(&u);
                }
            }
            Singularity::Hyperplane(nrm) => {
                let nn = norm2(nrm).sqrt();
                let c: f64 = nrm.iter().zip(&chart.pole).map(|(a, b)| a * b).sum::<f64>() / nn;
                if (c.abs() - 1.0).abs() < 1e-12 {
                    chart = chart.psi(&[PI / 2.0]);
                } else if c.abs() < 1e-12 && d == 3 {
                    let u: Vec<f64> = nrm.iter().map(|v| v / nn).collect();
                    let (_, a) = chart.angles_of(&u);
                    chart = chart.phi(&[a + PI / 2.0, a - PI / 2.0]);
                }
            }
            Singularity::Boundary => {}
        }
    }
    chart
}

/// `(Σ w |g|^p weight / mass)^{1/p}`, or the node maximum for `p = ∞`.
fn norm(
    rule: &dyn Cubature,
    p: f64,
    mass: Option<f64>,
    weight: &WeightSpec,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<f64> {
    let unit = matches!(weight, WeightSpec::Unit);
    let v = if p.is_infinite() {
        rule.max_abs(g)
    } else {
        let s = rule.weighted_sum(&|x| {
            let v = g(x).abs();
            let a = if p == 2.0 { v * v } else { v.powf(p) };
            if unit {
                a
            } else {
                a * weight.eval(x)
            }
        });
        (s / mass.unwrap_or(1.0)).max(0.0).powf(1.0 / p)
    };
    if !v.is_finite() {
        return Err(Error::Numerical("non-finite value in a modulus norm".into()));
    }
    Ok(v)
}

/// `ω_r(f, t)_p` for the request's variant; see [`ModulusEvaluator::at`].
pub fn modulus(req: &ModulusRequest, quad: &NormQuadrature) -> Result<f64> {
    ModulusEvaluator::new(req, quad.clone())?.at(req.t, req.theta_grid_size)
}

/// Alias of [`modulus`] restricted to the DT variants.
pub fn dt_modulus(req: &ModulusRequest, quad: &NormQuadrature) -> Result<f64> {
    if !matches!(req.variant, Variant::DtBall | Variant::DtBallWeighted { .. }) {
        return Err(Error::invalid("dt_modulus needs a DT variant"));
    }
    modulus(req, quad)
}

/// The modulus at each `t` in `ts`, sharing step evaluations between scales.
pub fn modulus_curve(req: &ModulusRequest, ts: &[f64], quad: &NormQuadrature) -> Result<Vec<f64>> {
    let ev = ModulusEvaluator::new(req, quad.clone())?;
    ts.iter().map(|&t| ev.at(t, req.theta_grid_size)).collect()
}

/// A single difference norm `‖Δ^r_{i,j,θ} f‖_p` on the sphere or ball (1-based plane).
pub fn euler_difference_norm(
    f: &FunctionHandle,
    i: usize,
    j: usize,
    theta: f64,
    r: usize,
    p: f64,
    quad: &NormQuadrature,
) -> Result<f64> {
    let variant = match f.domain() {
        Domain::Sphere(_) => Variant::Sphere,
        _ => Variant::Ball { mu: 0.5 },
    };
    let (i0, j0) = pair(i, j, f.domain().dim())?;
    let req = ModulusRequest::new(f.clone(), r, p, theta.abs().clamp(1e-300, PI), variant);
    let ev = ModulusEvaluator::new(&req, quad.clone())?;
    ev.term(Term::Euler(i0.min(j0), i0.max(j0)), if i0 < j0 { theta } else { -theta }, 0.0)
}

/// The extension term `‖Δ^r_{i,d+1,θ} f̃‖` alone (axis 1-based), normalized
/// by the mass of `W_{μ-1/2}` on `B^{d+1}`.
pub fn tilde_difference_norm(
    f: &FunctionHandle,
    i: usize,
    theta: f64,
    r: usize,
    p: f64,
    mu: f64,
    quad: &NormQuadrature,
) -> Result<f64> {
    let d = f.domain().dim();
    let i0 = axis(i, d)?;
    let variant = if d == 1 { Variant::Interval { mu } } else { Variant::Ball { mu } };
    let req = ModulusRequest::new(f.clone(), r, p, theta.abs().min(PI), variant);
    ModulusEvaluator::new(&req, quad.clone())?.term(Term::Tilde(i0), theta, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sph(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FunctionHandle {
        FunctionHandle::new(Domain::Sphere(3), f)
    }

    #[test]
    fn euler_difference_examples() {
        let one = FunctionHandle::constant(Domain::Sphere(3), 2.0);
        assert_eq!(euler_difference(&one, 1, 2, 0.3, 3, &[0.0, 0.6, 0.8]).unwrap(), 0.0);
        let x1 = sph(|x| x[0]);
        let v = euler_difference(&x1, 1, 2, PI / 3.0, 2, &[1.0, 0.0, 0.0]).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
        let radial = FunctionHandle::new(Domain::Ball(3), |x| norm2(x).sqrt().powf(0.3));
        let v = euler_difference(&radial, 2, 3, 0.7, 2, &[0.1, 0.4, -0.2]).unwrap();
        assert!(v.abs() < 1e-14);
        assert!(euler_difference(&x1, 1, 1, 0.1, 2, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn central_and_one_sided_examples() {
        let sq = FunctionHandle::new(Domain::Interval, |x| x[0] * x[0]);
        for &x in &[-0.7, 0.0, 0.3] {
            let h = 0.1;
            let got = central_difference_phi(&sq, 1, h, 2, &[x]).unwrap();
            // second difference of x² with step s is exactly 2s², s = hφ(x)
            assert!((got - 2.0 * h * h * (1.0 - x * x)).abs() < 1e-14, "{x}");
        }
        assert_eq!(central_difference_phi(&sq, 1, 0.1, 2, &[1.0]).unwrap(), 0.0);
        assert_eq!(central_difference_phi(&sq, 1, 1.9, 2, &[0.5]).unwrap(), 0.0);
        let v = forward_backward_difference(&sq, 1, 0.1, 2, &[0.2], Direction::Forward).unwrap();
        assert!((v - 0.02).abs() < 1e-14);
        let v = forward_backward_difference(&sq, 1, 0.1, 2, &[0.2], Direction::Backward).unwrap();
        assert!((v - 0.02).abs() < 1e-14);
        let lin = FunctionHandle::new(Domain::Ball(2), |x| 3.0 * x[0] - x[1]);
        assert!(central_difference_phi(&lin, 1, 0.2, 2, &[0.1, 0.3]).unwrap().abs() < 1e-14);
        assert!(forward_backward_difference(&lin, 2, 0.05, 2, &[0.1, 0.3], Direction::Forward).unwrap().abs() < 1e-14);
    }

    #[test]
    fn dij_examples() {
        let x1 = sph(|x| x[0]).with_degree(1);
        assert!((dij_derivative(&x1, 1, 2, 1, &[0.0, 1.0, 0.0]).unwrap() - 1.0).abs() < 1e-13);
        let g = sph(|x| x[0] * x[1]).with_degree(2);
        let x = [0.48, 0.6, 0.64];
        let s: f64 = [(1, 2), (1, 3), (2, 3)].iter().map(|&(i, j)| dij_derivative(&g, i, j, 2, &x).unwrap()).sum();
        assert!((s + 6.0 * x[0] * x[1]).abs() < 1e-12);
        let radial = FunctionHandle::new(Domain::Ball(3), |x| (1.0 - norm2(x)).powf(0.4));
        assert!(dij_derivative(&radial, 1, 3, 2, &[0.1, 0.2, 0.3]).unwrap().abs() < 1e-9);
        let cube = sph(|x| x[0].powi(3)).with_degree(3);
        let y = [0.3, -0.5, (1.0f64 - 0.34).sqrt()];
        let want = 6.0 * y[0] * y[1] * y[1] - 3.0 * y[0].powi(3);
        assert!((dij_derivative(&cube, 1, 2, 2, &y).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn line_derivative_is_exact_on_polynomials() {
        let g = |x: &[f64]| x[0].powi(5) - 2.0 * x[0] * x[1] * x[1] + x[1];
        let x = [0.2, -0.3];
        let d2 = line_derivative(&g, &x, &[1.0, 0.0], 2, 5, 0.5);
        assert!((d2 - 20.0 * 0.2f64.powi(3)).abs() < 1e-11);
        let d1 = line_derivative(&g, &x, &[0.0, 1.0], 1, 5, 0.5);
        assert!((d1 - (-4.0 * 0.2 * -0.3 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn moduli_of_constants_vanish() {
        let q = NormQuadrature::Exact { degree: 8 };
        let c3 = FunctionHandle::constant(Domain::Sphere(3), 1.5);
        assert!(modulus(&ModulusRequest::new(c3, 2, 2.0, 0.1, Variant::Sphere), &q).unwrap() < 1e-13);
        let cb = FunctionHandle::constant(Domain::Ball(2), 1.5);
        for v in
            [Variant::Ball { mu: 0.5 }, Variant::Ball { mu: 0.0 }, Variant::DtBall, Variant::DtBallWeighted { mu: 1.0 }]
        {
            assert!(modulus(&ModulusRequest::new(cb.clone(), 2, 2.0, 0.1, v), &q).unwrap() < 1e-13, "{v:?}");
        }
        let ci = FunctionHandle::constant(Domain::Interval, 1.5);
        assert!(modulus(&ModulusRequest::new(ci, 2, 2.0, 0.1, Variant::Interval { mu: 0.3 }), &q).unwrap() < 1e-13);
    }

    #[test]
    fn request_validation() {
        let f = FunctionHandle::constant(Domain::Sphere(3), 1.0);
        let bad = ModulusRequest::new(f.clone(), 2, 2.0, 0.1, Variant::Ball { mu: 0.5 });
        assert!(bad.validate().is_err());
        let fb = FunctionHandle::constant(Domain::Ball(2), 1.0);
        let mut w = ModulusRequest::new(fb.clone(), 2, f64::INFINITY, 0.1, Variant::DtBallWeighted { mu: 1.0 });
        assert!(matches!(w.validate(), Err(Error::Unsupported(_))));
        w.p = 2.0;
        assert!(w.validate().is_ok());
        assert!(ModulusRequest::new(fb, 2, 2.0, 0.1, Variant::Ball { mu: 0.3 }).validate().is_err());
    }

    #[test]
    fn dt_interval_abs() {
        // central difference of |x| is h φ(x) - 2|x| when |x| < hφ(x)/2, else 0
        let f = FunctionHandle::new(Domain::Interval, |x| x[0].abs())
            .with_singularities(vec![Singularity::Hyperplane(vec![1.0])]);
        let t = 0.05;
        let mut req = ModulusRequest::new(f, 1, f64::INFINITY, t, Variant::DtBall);
        req.theta_grid_size = 1;
        let v = modulus(&req, &NormQuadrature::Adapted(AdaptedQuad::default())).unwrap();
        // r = 1: |x + hφ/2| - |x - hφ/2| peaks at hφ(x) for x ≥ hφ/2, so the sup is ≈ t
        assert!((v - t).abs() < 1e-3 * t, "{v}");
    }

    #[test]
    fn adapted_matches_exact_on_polynomials() {
        let p = sph(|x| x[0] * x[0] * x[1] + x[2]).with_degree(3);
        let a = euler_difference_norm(&p, 1, 3, 0.2, 2, 2.0, &NormQuadrature::Exact { degree: 8 }).unwrap();
        let b = euler_difference_norm(&p, 1, 3, 0.2, 2, 2.0, &NormQuadrature::Adapted(AdaptedQuad::default())).unwrap();
        assert!((a - b).abs() < 1e-9 * a, "{a} {b}");
        let pb = FunctionHandle::new(Domain::Ball(2), |x| x[0] * x[0] * x[1] + x[0]).with_degree(3);
        let a = tilde_difference_norm(&pb, 1, 0.2, 2, 2.0, 0.5, &NormQuadrature::Exact { degree: 8 }).unwrap();
        let b =
            tilde_difference_norm(&pb, 1, 0.2, 2, 2.0, 0.5, &NormQuadrature::Adapted(AdaptedQuad::default())).unwrap();
        assert!((a - b).abs() < 1e-6 * a, "{a} {b}");
    }
}

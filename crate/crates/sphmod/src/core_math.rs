//! Special functions and geometry shared by every other module.
//!
//! Gegenbauer polynomials use the normalization `C_n^λ(1) = binom(n+2λ-1, n)`.
//! Plane and axis indices in the public API are 1-based, matching the usual
//! mathematical notation `Q_{i,j,t}` and `D_{i,j}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{QuadratureRule, RuleDomain};

/// Largest ambient dimension handled with stack buffers.
pub const MAX_DIM: usize = 16;

const T_SLACK: f64 = 1e-12;

/// Surface area `σ_d = 2 π^{d/2} / Γ(d/2)` of the unit sphere `S^{d-1} ⊂ R^d`.
///
/// `σ_1 = 2` counts the two points of `S^0`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// `binom(a + n - 1 ... )` style generalized binomial `binom(x, n)` for real `x`.
pub fn binom_real(x: f64, n: usize) -> f64 {
    let mut acc = 1.0;
    for k in 1..=n {
        acc *= (x - (k as f64) + 1.0) / k as f64;
    }
    acc
}

/// Integer binomial coefficient as `f64`.
pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    binom_real(n as f64, k.min(n - k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GegenbauerParams {
    pub n: usize,
    pub lambda: f64,
}

impl GegenbauerParams {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("Gegenbauer index must be > 0, got {lambda}")));
        }
        Ok(Self { n, lambda })
    }

    /// Index `λ = (d-2)/2` of the zonal harmonics on `S^{d-1}`.
    pub fn for_sphere(n: usize, d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        Self::new(n, (d as f64 - 2.0) / 2.0)
    }

    /// `C_n^λ(1)`.
    pub fn value_at_one(&self) -> f64 {
        binom_real(self.n as f64 + 2.0 * self.lambda - 1.0, self.n)
    }
}

fn check_t(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + T_SLACK {
        return Err(Error::Domain(format!("|t| must be <= 1, got {t}")));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// `C_n^λ(t)` by the forward three-term recurrence.
pub fn gegenbauer(params: GegenbauerParams, t: f64) -> Result<f64> {
    if !(params.lambda > 0.0) {
        return Err(Error::invalid("Gegenbauer index must be > 0"));
    }
    let t = check_t(t)?;
    let mut out = Vec::with_capacity(params.n + 1);
    gegenbauer_sweep(params.n, params.lambda, t, &mut out);
    Ok(out[params.n])
}

/// Fill `out` with `C_0^λ(t), ..., C_nmax^λ(t)`. No domain checks.
pub fn gegenbauer_sweep(nmax: usize, lambda: f64, t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if nmax == 0 {
        return;
    }
    out.push(2.0 * lambda * t);
    for n in 2..=nmax {
        let nf = n as f64;
        let c = (2.0 * (nf + lambda - 1.0) * t * out[n - 1] - (nf + 2.0 * lambda - 2.0) * out[n - 2]) / nf;
        out.push(c);
    }
}

/// The C^∞ cutoff: 1 on `[0,1]`, 0 on `[2,∞)`, smooth step in between.
pub fn eta(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let a = smooth_h(2.0 - x);
        let b = smooth_h(x - 1.0);
        a / (a + b)
    }
}

fn smooth_h(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// `Z_{n,d}(c) = (n+λ)/λ · C_n^λ(c)`, `λ = (d-2)/2`.
pub fn zonal_kernel(n: usize, d: usize, c: f64) -> Result<f64> {
    let params = GegenbauerParams::for_sphere(n, d)?;
    let lam = params.lambda;
    Ok((n as f64 + lam) / lam * gegenbauer(params, c)?)
}

/// Coefficient table of `K_n(t) = Σ_k η(k/n) (k+λ)/λ C_k^λ(t)`.
#[derive(Debug, Clone)]
pub struct SmoothedKernel {
    n: usize,
    d: usize,
    lambda: f64,
    coef: Vec<f64>,
}

impl SmoothedKernel {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("smoothed kernel needs n >= 1"));
        }
        if d < 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        let lambda = (d as f64 - 2.0) / 2.0;
        let coef = (0..=2 * n).map(|k| eta(k as f64 / n as f64) * (k as f64 + lambda) / lambda).collect();
        Ok(Self { n, d, lambda, coef })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Multiplier `η(k/n)` applied to degree `k`.
    pub fn multiplier(&self, k: usize) -> f64 {
        eta(k as f64 / self.n as f64)
    }

    /// Clenshaw-free direct sweep; `t` is clamped into `[-1,1]`.
    pub fn eval_unchecked(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        let lam = self.lambda;
        let mut c0 = 1.0;
        let mut c1 = 2.0 * lam * t;
        let mut acc = self.coef[0] + self.coef[1] * c1;
        for k in 2..self.coef.len() {
            let kf = k as f64;
            let c2 = (2.0 * (kf + lam - 1.0) * t * c1 - (kf + 2.0 * lam - 2.0) * c0) / kf;
            acc += self.coef[k] * c2;
            c0 = c1;
            c1 = c2;
        }
        acc
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.eval_unchecked(check_t(t)?))
    }
}

/// `K_n(t)` for the sphere `S^{d-1}`.
pub fn smoothed_kernel_kn(n: usize, d: usize, t: f64) -> Result<f64> {
    SmoothedKernel::new(n, d)?.eval(t)
}

/// Plane rotation `Q_{i,j,t}` in `R^d` (1-based axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerRotation {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub d: usize,
}

impl EulerRotation {
    pub fn new(i: usize, j: usize, t: f64, d: usize) -> Result<Self> {
        if i == 0 || j == 0 || i > d || j > d || i == j {
            return Err(Error::invalid(format!("rotation plane ({i},{j}) invalid for d={d}")));
        }
        Ok(Self { i, j, t, d })
    }
}

/// Rotate coordinates `i0, j0` (0-based) of `x` in place by angle `t`.
#[inline]
pub fn rotate_plane(x: &mut [f64], i0: usize, j0: usize, cos_t: f64, sin_t: f64) {
    let xi = x[i0];
    let xj = x[j0];
    x[i0] = xi * cos_t - xj * sin_t;
    x[j0] = xi * sin_t + xj * cos_t;
}

/// `x_i' = x_i cos t - x_j sin t`, `x_j' = x_i sin t + x_j cos t`.
pub fn euler_rotate(rot: EulerRotation, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != rot.d {
        return Err(Error::invalid(format!("point has {} coordinates, rotation expects {}", x.len(), rot.d)));
    }
    let mut y = x.to_vec();
    rotate_plane(&mut y, rot.i - 1, rot.j - 1, rot.t.cos(), rot.t.sin());
    Ok(y)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x)
}

fn check_unit(x: &[f64]) -> Result<()> {
    let r = norm2(x).sqrt();
    if (r - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("expected a unit vector, norm is {r}")));
    }
    Ok(())
}

/// `arccos⟨x,y⟩` with the inner product clamped to `[-1,1]`.
pub fn geodesic_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("points of different dimension"));
    }
    check_unit(x)?;
    check_unit(y)?;
    Ok(dot(x, y).clamp(-1.0, 1.0).acos())
}

/// Angle `t` with `Q_{i,j,t} x = y` for points differing only in coordinates `i, j`.
pub fn recover_rotation_angle(x: &[f64], y: &[f64], i: usize, j: usize) -> Result<f64> {
    let d = x.len();
    EulerRotation::new(i, j, 0.0, d)?;
    if y.len() != d {
        return Err(Error::invalid("points of different dimension"));
    }
    let (i0, j0) = (i - 1, j - 1);
    for k in 0..d {
        if k != i0 && k != j0 && (x[k] - y[k]).abs() > 1e-10 {
            return Err(Error::invalid(format!("points differ in coordinate {}", k + 1)));
        }
    }
    let s2 = x[i0] * x[i0] + x[j0] * x[j0];
    if s2.sqrt() < 1e-12 {
        return Err(Error::DegeneratePlane(format!("x has no component in plane ({i},{j})")));
    }
    let s2y = y[i0] * y[i0] + y[j0] * y[j0];
    if (s2 - s2y).abs() > 1e-10 {
        return Err(Error::invalid("plane components have different lengths"));
    }
    let c = (x[i0] * y[i0] + x[j0] * y[j0]) / s2;
    let s = (x[i0] * y[j0] - x[j0] * y[i0]) / s2;
    Ok(s.atan2(c))
}

/// Where a function lives. Sphere and ball carry the ambient dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Domain {
    Sphere(usize),
    Ball(usize),
    Interval,
}

impl Domain {
    pub fn dim(&self) -> usize {
        match *self {
            Domain::Sphere(d) | Domain::Ball(d) => d,
            Domain::Interval => 1,
        }
    }

    pub fn is_ball_like(&self) -> bool {
        matches!(self, Domain::Ball(_) | Domain::Interval)
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Where a function fails to be smooth. Used only to place quadrature nodes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Singularity {
    /// A single point.
    Point(Vec<f64>),
    /// The hyperplane through the origin with this normal.
    Hyperplane(Vec<f64>),
    /// The boundary sphere of a ball domain.
    Boundary,
}

/// A pure scalar function of a point, tagged with its domain.
#[derive(Clone)]
pub struct FunctionHandle {
    f: Arc<EvalFn>,
    domain: Domain,
    degree_hint: Option<usize>,
    singular: Vec<Singularity>,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionHandle").field("domain", &self.domain).field("degree_hint", &self.degree_hint).finish()
    }
}

impl FunctionHandle {
    pub fn new(domain: Domain, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), domain, degree_hint: None, singular: Vec::new() }
    }

    pub fn with_singularities(mut self, s: Vec<Singularity>) -> Self {
        self.singular = s;
        self
    }

    pub fn singular_set(&self) -> &[Singularity] {
        &self.singular
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree_hint = Some(degree);
        self
    }

    pub fn constant(domain: Domain, c: f64) -> Self {
        Self::new(domain, move |_| c).with_degree(0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn degree_hint(&self) -> Option<usize> {
        self.degree_hint
    }

    /// `a·self + b·other` on the same domain.
    pub fn linear_combination(&self, a: f64, other: &FunctionHandle, b: f64) -> Result<FunctionHandle> {
        if self.domain != other.domain {
            return Err(Error::invalid("linear combination of functions on different domains"));
        }
        let (f, g) = (self.clone(), other.clone());
        let deg = match (self.degree_hint, other.degree_hint) {
            (Some(p), Some(q)) => Some(p.max(q)),
            _ => None,
        };
        let mut h = FunctionHandle::new(self.domain, move |x| a * f.eval(x) + b * g.eval(x));
        h.degree_hint = deg;
        h.singular = self.singular.clone();
        for s in &other.singular {
            if !h.singular.contains(s) {
                h.singular.push(s.clone());
            }
        }
        Ok(h)
    }
}

/// `F(x, x') = f(x)` on `S^{d+m-1}` for `f` on the ball `B^d`.
pub fn lift_to_sphere(f: &FunctionHandle, m: usize) -> Result<FunctionHandle> {
    if m == 0 {
        return Err(Error::invalid("lift needs m >= 1"));
    }
    let d = match f.domain() {
        Domain::Ball(d) => d,
        Domain::Interval => 1,
        Domain::Sphere(_) => return Err(Error::invalid("lift_to_sphere expects a ball function")),
    };
    let g = f.clone();
    let mut h = FunctionHandle::new(Domain::Sphere(d + m), move |x| g.eval(&x[..d]));
    h.degree_hint = f.degree_hint();
    h.singular = f
        .singular
        .iter()
        .filter_map(|s| match s {
            Singularity::Hyperplane(p) => {
                let mut v = p.clone();
                v.resize(d + m, 0.0);
                Some(Singularity::Hyperplane(v))
            }
            _ => None,
        })
        .collect();
    Ok(h)
}

/// `f̃(x, x_{d+1}) = f(x)` on `B^{d+1}`.
pub fn tilde_extension(f: &FunctionHandle) -> Result<FunctionHandle> {
    let d = match f.domain() {
        Domain::Ball(d) => d,
        Domain::Interval => 1,
        Domain::Sphere(_) => return Err(Error::invalid("tilde_extension expects a ball function")),
    };
    let g = f.clone();
    let mut h = FunctionHandle::new(Domain::Ball(d + 1), move |x| g.eval(&x[..d]));
    h.degree_hint = f.degree_hint();
    h.singular = f
        .singular
        .iter()
        .filter_map(|s| match s {
            Singularity::Hyperplane(p) => {
                let mut v = p.clone();
                v.push(0.0);
                Some(Singularity::Hyperplane(v))
            }
            _ => None,
        })
        .collect();
    Ok(h)
}

/// `m = 2μ + 1` when it is a positive integer.
pub fn mu_to_m(mu: f64) -> Result<usize> {
    let m = 2.0 * mu + 1.0;
    if !(m >= 1.0 - 1e-12) || (m - m.round()).abs() > 1e-12 {
        return Err(Error::Unsupported(format!("μ = {mu} is not of the form (m-1)/2 with m >= 1")));
    }
    Ok(m.round() as usize)
}

/// Ball kernel `K_n^μ(x,y)` with the fixed choice `x' = (√(1-‖x‖²), 0, …, 0)`.
///
/// The `S^{m-1}` integral uses the normalized measure, so `V_n^μ` built with
/// `a_μ = 1/∫W_μ` reproduces polynomials. For `m = 1` this is the average
/// `(K_n(u_+) + K_n(u_-))/2`.
pub fn ball_kernel_kn_mu(
    kernel: &SmoothedKernel,
    mu: f64,
    x: &[f64],
    y: &[f64],
    sphere_rule: &QuadratureRule,
) -> Result<f64> {
    let m = mu_to_m(mu)?;
    let mut xp = vec![0.0; m];
    xp[0] = (1.0 - norm2(x)).max(0.0).sqrt();
    ball_kernel_with_xprime(kernel, mu, x, &xp, y, sphere_rule)
}

/// Ball kernel for an explicit admissible `x'` with `‖x‖² + ‖x'‖² = 1`.
pub fn ball_kernel_with_xprime(
    kernel: &SmoothedKernel,
    mu: f64,
    x: &[f64],
    xprime: &[f64],
    y: &[f64],
    sphere_rule: &QuadratureRule,
) -> Result<f64> {
    let m = mu_to_m(mu)?;
    let d = x.len();
    if kernel.d() != d + m {
        return Err(Error::invalid(format!(
            "kernel built for d={} but ball dimension {} with m={} needs {}",
            kernel.d(),
            d,
            m,
            d + m
        )));
    }
    if xprime.len() != m {
        return Err(Error::invalid("x' must have m coordinates"));
    }
    if sphere_rule.domain() != (RuleDomain::Sphere { d: m }) {
        return Err(Error::invalid(format!("need a rule on S^{}", m - 1)));
    }
    let xy = dot(x, y);
    let ry = (1.0 - norm2(y)).max(0.0).sqrt();
    let total = sphere_area(m);
    let mut acc = 0.0;
    for (xi, w) in sphere_rule.iter() {
        let u = xy + ry * dot(xprime, xi);
        acc += w * kernel.eval_unchecked(u);
    }
    Ok(acc / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::sphere_rule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::gamma::ln_gamma;

    /// Explicit series, independent of the recurrence:
    /// `C_n^λ(t) = Σ_k (-1)^k Γ(n-k+λ) / (Γ(λ) k! (n-2k)!) (2t)^{n-2k}`.
    fn series_oracle(n: usize, lambda: f64, t: f64) -> f64 {
        series_with_scale(n, lambda, t).0
    }

    /// Value and `Σ|term|`, the scale of the rounding error in the sum.
    fn series_with_scale(n: usize, lambda: f64, t: f64) -> (f64, f64) {
        let mut acc = 0.0;
        let mut scale = 0.0;
        for k in 0..=n / 2 {
            let log_mag = ln_gamma(n as f64 - k as f64 + lambda)
                - ln_gamma(lambda)
                - ln_gamma(k as f64 + 1.0)
                - ln_gamma((n - 2 * k) as f64 + 1.0);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let term = log_mag.exp() * (2.0 * t).powi((n - 2 * k) as i32);
            acc += sign * term;
            scale += term.abs();
        }
        (acc, scale)
    }

    #[test]
    fn gegenbauer_spec_examples() {
        let g = |n, l, t| gegenbauer(GegenbauerParams::new(n, l).unwrap(), t).unwrap();
        assert_eq!(g(0, 0.5, 0.3), 1.0);
        assert_relative_eq!(g(2, 0.5, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(g(3, 1.0, 0.5), series_oracle(3, 1.0, 0.5), epsilon = 1e-14);
    }

    #[test]
    fn gegenbauer_matches_series() {
        for &lam in &[0.5, 1.0, 1.5, 2.5] {
            for n in 0..20 {
                for &t in &[-0.9, -0.31, 0.0, 0.42, 0.77, 1.0] {
                    let (want, scale) = series_with_scale(n, lam, t);
                    let got = gegenbauer(GegenbauerParams::new(n, lam).unwrap(), t).unwrap();
                    assert!((got - want).abs() <= 1e-13 * scale.max(1.0), "n={n} λ={lam} t={t}");
                }
            }
        }
    }

    #[test]
    fn gegenbauer_domain_error() {
        let p = GegenbauerParams::new(3, 1.0).unwrap();
        assert!(matches!(gegenbauer(p, 1.1), Err(Error::Domain(_))));
        assert!(gegenbauer(p, 1.0 + 1e-13).is_ok());
        assert!(GegenbauerParams::new(3, 0.0).is_err());
    }

    #[test]
    fn zonal_examples() {
        assert_relative_eq!(zonal_kernel(0, 3, 0.7).unwrap(), 1.0);
        assert_relative_eq!(zonal_kernel(1, 3, 1.0).unwrap(), 3.0, epsilon = 1e-14);
        // λ = 1 for d = 4: (2+1)/1 · C_2^1(0), and C_2^1(0) = -1 from the series.
        let want = 3.0 * series_oracle(2, 1.0, 0.0);
        assert_relative_eq!(zonal_kernel(2, 4, 0.0).unwrap(), want, epsilon = 1e-14);
        assert!(matches!(zonal_kernel(2, 2, 0.0), Err(Error::UnsupportedDimension(2))));
    }

    #[test]
    fn smoothed_kernel_examples() {
        for &t in &[-1.0, -0.3, 0.0, 0.6, 1.0] {
            assert_relative_eq!(smoothed_kernel_kn(1, 3, t).unwrap(), 1.0 + 3.0 * t, epsilon = 1e-13);
        }
        let at0 = smoothed_kernel_kn(4, 3, 1.0).unwrap().abs();
        let at90 = smoothed_kernel_kn(4, 3, 0.0).unwrap().abs();
        assert!(at0 >= 10.0 * at90);
        // Legendre case: C_k^{1/2}(1) = 1.
        let want: f64 = (0..=16).map(|k| eta(k as f64 / 8.0) * (2.0 * k as f64 + 1.0)).sum();
        assert_relative_eq!(smoothed_kernel_kn(8, 3, 1.0).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn eta_axioms() {
        assert_eq!(eta(0.0), 1.0);
        assert_eq!(eta(1.0), 1.0);
        assert_eq!(eta(2.0), 0.0);
        assert_eq!(eta(7.0), 0.0);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = eta(1.0 + k as f64 / 1000.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        let h = 1e-3;
        for &x0 in &[1.0, 2.0] {
            let d1 = (eta(x0 + h) - eta(x0 - h)) / (2.0 * h);
            let d2 = (eta(x0 + h) - 2.0 * eta(x0) + eta(x0 - h)) / (h * h);
            assert!(d1.abs() < 1e-8 && d2.abs() < 1e-8, "x0={x0} d1={d1} d2={d2}");
        }
    }

    #[test]
    fn rotation_examples() {
        let r = EulerRotation::new(1, 2, PI / 2.0, 3).unwrap();
        let y = euler_rotate(r, &[1.0, 0.0, 0.0]).unwrap();
        assert!((y[0]).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15 && y[2] == 0.0);
        let x = [0.3, -0.2, 0.5];
        assert_eq!(euler_rotate(EulerRotation::new(1, 2, 0.0, 3).unwrap(), &x).unwrap(), x.to_vec());
        let y = euler_rotate(EulerRotation::new(2, 3, PI / 3.0, 3).unwrap(), &[0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(y[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(y[2], (PI / 3.0).sin(), epsilon = 1e-15);
        assert!(EulerRotation::new(1, 1, 0.1, 3).is_err());
        assert!(EulerRotation::new(1, 4, 0.1, 3).is_err());
    }

    #[test]
    fn geodesic_examples() {
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(geodesic_distance(&e1, &e1).unwrap(), 0.0);
        assert_relative_eq!(geodesic_distance(&e1, &[0.0, 1.0, 0.0]).unwrap(), PI / 2.0);
        assert_relative_eq!(geodesic_distance(&e1, &[-1.0, 0.0, 0.0]).unwrap(), PI);
        assert!(geodesic_distance(&e1, &[2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn recover_angle_examples() {
        let t = recover_rotation_angle(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 1, 2).unwrap();
        assert_relative_eq!(t, PI / 2.0, epsilon = 1e-15);
        let x = [0.6, 0.8, 0.0];
        assert_eq!(recover_rotation_angle(&x, &x, 1, 2).unwrap(), 0.0);
        let y = [0.8, 0.6, 0.0];
        let t = recover_rotation_angle(&x, &y, 1, 2).unwrap();
        let back = euler_rotate(EulerRotation::new(1, 2, t, 3).unwrap(), &x).unwrap();
        for k in 0..3 {
            assert!((back[k] - y[k]).abs() < 1e-10);
        }
        assert!(matches!(
            recover_rotation_angle(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], 1, 2),
            Err(Error::DegeneratePlane(_))
        ));
        assert!(recover_rotation_angle(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], 1, 2).is_err());
    }

    #[test]
    fn lift_and_tilde() {
        let f = FunctionHandle::new(Domain::Ball(2), |x| x[0]);
        let big = lift_to_sphere(&f, 2).unwrap();
        assert_eq!(big.domain(), Domain::Sphere(4));
        assert_eq!(big.eval(&[0.3, 0.1, 0.5, 0.2]), 0.3);
        let one = lift_to_sphere(&FunctionHandle::constant(Domain::Ball(2), 1.0), 3).unwrap();
        assert_eq!(one.eval(&[0.0, 0.0, 1.0, 0.0, 0.0]), 1.0);
        let ft = tilde_extension(&f).unwrap();
        let h = 1e-5;
        let dz = (ft.eval(&[0.2, 0.1, 0.3 + h]) - ft.eval(&[0.2, 0.1, 0.3 - h])) / (2.0 * h);
        assert_eq!(dz, 0.0);
    }

    #[test]
    fn ball_kernel_m1_is_two_point_average() {
        let k = SmoothedKernel::new(3, 3).unwrap();
        let s0 = sphere_rule(1, 0).unwrap();
        let x = [0.3, -0.4];
        let y = [0.1, 0.5];
        let rx = (1.0 - norm2(&x)).sqrt();
        let ry = (1.0 - norm2(&y)).sqrt();
        let up = dot(&x, &y) + rx * ry;
        let um = dot(&x, &y) - rx * ry;
        let want = 0.5 * (k.eval(up).unwrap() + k.eval(um).unwrap());
        let got = ball_kernel_kn_mu(&k, 0.0, &x, &y, &s0).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-13);
    }

    #[test]
    fn ball_kernel_xprime_independent() {
        let k = SmoothedKernel::new(4, 4).unwrap();
        let circle = sphere_rule(2, 40).unwrap();
        let x = [0.3, 0.5];
        let y = [-0.2, 0.4];
        let r = (1.0 - norm2(&x)).sqrt();
        let a = ball_kernel_with_xprime(&k, 0.5, &x, &[r, 0.0], &y, &circle).unwrap();
        let b = ball_kernel_with_xprime(&k, 0.5, &x, &[r * 0.6, r * 0.8], &y, &circle).unwrap();
        assert!((a - b).abs() < 1e-8);
        assert!(ball_kernel_kn_mu(&k, 0.25, &x, &y, &circle).is_err());
    }

    proptest! {
        #[test]
        fn rotation_round_trip_and_norm(
            x in prop::collection::vec(-1.0f64..1.0, 4),
            t in -7.0f64..7.0,
            s in -7.0f64..7.0,
        ) {
            let r = EulerRotation::new(2, 4, t, 4).unwrap();
            let y = euler_rotate(r, &x).unwrap();
            let back = euler_rotate(EulerRotation { t: -t, ..r }, &y).unwrap();
            for k in 0..4 {
                prop_assert!((back[k] - x[k]).abs() < 1e-14);
            }
            prop_assert!((norm2(&y).sqrt() - norm2(&x).sqrt()).abs() < 1e-14);
            let two = euler_rotate(EulerRotation { t: s, ..r }, &y).unwrap();
            let once = euler_rotate(EulerRotation { t: s + t, ..r }, &x).unwrap();
            for k in 0..4 {
                prop_assert!((two[k] - once[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn gegenbauer_recurrence_and_bound(t in -1.0f64..=1.0, li in 0usize..3) {
            let lam = [0.5, 1.0, 1.5][li];
            let mut c = Vec::new();
            gegenbauer_sweep(64, lam, t, &mut c);
            for n in 2..=64 {
                let nf = n as f64;
                let res = nf * c[n] - 2.0 * (nf + lam - 1.0) * t * c[n - 1] + (nf + 2.0 * lam - 2.0) * c[n - 2];
                prop_assert!(res.abs() < 1e-10 * c[n].abs().max(1.0));
                let top = GegenbauerParams::new(n, lam).unwrap().value_at_one();
                prop_assert!(c[n].abs() <= top * (1.0 + 1e-12));
            }
        }

        #[test]
        fn lift_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, p in prop::collection::vec(-0.5f64..0.5, 2)) {
            let f = FunctionHandle::new(Domain::Ball(2), |x| x[0] * x[1] + 1.0);
            let g = FunctionHandle::new(Domain::Ball(2), |x| (x[0] - x[1]).cos());
            let lhs = lift_to_sphere(&f.linear_combination(a, &g, b).unwrap(), 2).unwrap();
            let (lf, lg) = (lift_to_sphere(&f, 2).unwrap(), lift_to_sphere(&g, 2).unwrap());
            let rest = (1.0 - p[0] * p[0] - p[1] * p[1]).sqrt();
            let x = [p[0], p[1], rest, 0.0];
            prop_assert!((lhs.eval(&x) - (a * lf.eval(&x) + b * lg.eval(&x))).abs() < 1e-14);
        }
    }
}

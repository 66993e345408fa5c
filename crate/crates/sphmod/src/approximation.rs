//! Smoothed projections `V_n`, harmonic projections and orthogonal
//! expansions, best approximation, the realized K-functional, and numerical
//! checks of the differential identities behind them.
//!
//! Degrees of freedom are handled two ways. Kernel sums against a product
//! rule work in any dimension and are exact for polynomial input. For `S^2`,
//! the disc and the interval there are also orthonormal expansions computed
//! with rules graded toward the singular set of the input; these are what
//! make the `p = 2` rate experiments affordable at `n = 64`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_math::{
    ball_kernel_kn_mu, dot, eta, mu_to_m, norm2, rotate_plane, sphere_area, zonal_kernel, Domain, FunctionHandle,
    SmoothedKernel,
};
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::quadrature::{
    ball_chart_rule, ball_rule, ball_weight_mass, composite_rule_with, gauss_jacobi, jacobi_orthonormal,
    jacobi_recurrence, sphere_chart_rule, sphere_rule, tilde_gauss_rule, BallDirections, Grading, QuadratureRule,
    RuleDomain, SphereChart,
};
use crate::smoothness::{
    ball_focals, chart_with_focals, cubature_norm, domain_cubature, first_point, line_derivative, phi, DijOperator,
    NormQuadrature, Variant,
};

fn sphere_dim(f: &FunctionHandle) -> Result<usize> {
    match f.domain() {
        Domain::Sphere(d) => Ok(d),
        _ => Err(Error::invalid("expected a function on the sphere")),
    }
}

fn ball_dim(f: &FunctionHandle) -> Result<usize> {
    match f.domain() {
        Domain::Ball(d) => Ok(d),
        Domain::Interval => Ok(1),
        Domain::Sphere(_) => Err(Error::invalid("expected a function on the ball or the interval")),
    }
}

/// Rule nodes with `scale · w_k f(y_k)` precomputed.
struct Sampled {
    d: usize,
    coords: Vec<f64>,
    wf: Vec<f64>,
}

impl Sampled {
    fn new(f: &FunctionHandle, rule: &QuadratureRule, scale: f64) -> Result<Self> {
        let wf: Vec<f64> = rule.par_iter().map(|(y, w)| scale * w * f.eval(y)).collect();
        if let Some(k) = wf.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: k, point: rule.node(k).to_vec(), value: wf[k] });
        }
        let d = rule.dim();
        let mut coords = Vec::with_capacity(rule.len() * d);
        let mut kept = Vec::with_capacity(rule.len());
        for (k, &v) in wf.iter().enumerate() {
            if v != 0.0 {
                coords.extend_from_slice(rule.node(k));
                kept.push(v);
            }
        }
        Ok(Self { d, coords, wf: kept })
    }

    fn sum(&self, kernel: impl Fn(&[f64]) -> f64) -> f64 {
        self.coords.chunks_exact(self.d).zip(&self.wf).map(|(y, w)| w * kernel(y)).sum()
    }
}

fn check_rule(rule: &QuadratureRule, want: RuleDomain) -> Result<()> {
    let ok = match (rule.domain(), want) {
        (RuleDomain::Ball { d: 1, mu: a }, RuleDomain::Interval { mu: b })
        | (RuleDomain::Interval { mu: a }, RuleDomain::Ball { d: 1, mu: b }) => a == b,
        (a, b) => a == b,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("rule domain {:?} does not match {:?}", rule.domain(), want)))
    }
}

/// `V_n f(x) = σ^{-1} ∫ f(y) K_n(⟨x,y⟩) dσ(y)` by the given rule.
pub fn vn_operator(f: &FunctionHandle, n: usize, rule: &QuadratureRule) -> Result<FunctionHandle> {
    let d = sphere_dim(f)?;
    check_rule(rule, RuleDomain::Sphere { d })?;
    let kernel = SmoothedKernel::new(n, d)?;
    let s = Sampled::new(f, rule, 1.0 / sphere_area(d))?;
    Ok(FunctionHandle::new(Domain::Sphere(d), move |x| s.sum(|y| kernel.eval_unchecked(dot(x, y)))).with_degree(2 * n))
}

/// `V_n^μ f(x) = a_μ ∫ f(y) K_n^μ(x,y) W_μ(y) dy` for `μ = (m-1)/2`.
pub fn vn_mu_operator(f: &FunctionHandle, n: usize, mu: f64, rule: &QuadratureRule) -> Result<FunctionHandle> {
    let d = ball_dim(f)?;
    let m = mu_to_m(mu)?;
    check_rule(rule, RuleDomain::Ball { d, mu })?;
    let kernel = SmoothedKernel::new(n, d + m)?;
    let inner = sphere_rule(m, 2 * n + 1)?;
    let s = Sampled::new(f, rule, 1.0 / ball_weight_mass(d, mu))?;
    Ok(FunctionHandle::new(f.domain(), move |x| {
        s.sum(|y| ball_kernel_kn_mu(&kernel, mu, x, y, &inner).unwrap_or(f64::NAN))
    })
    .with_degree(2 * n))
}

/// `proj_k f(x) = σ^{-1} ∫ f(y) Z_k(⟨x,y⟩) dσ(y)`.
pub fn project_harmonic(f: &FunctionHandle, k: usize, rule: &QuadratureRule) -> Result<FunctionHandle> {
    let d = sphere_dim(f)?;
    check_rule(rule, RuleDomain::Sphere { d })?;
    zonal_kernel(k, d, 1.0)?;
    let s = Arc::new(Sampled::new(f, rule, 1.0 / sphere_area(d))?);
    Ok(zonal_projection(s, k, d))
}

fn zonal_projection(s: Arc<Sampled>, k: usize, d: usize) -> FunctionHandle {
    FunctionHandle::new(Domain::Sphere(d), move |x| {
        s.sum(|y| zonal_kernel(k, d, dot(x, y).clamp(-1.0, 1.0)).unwrap_or(f64::NAN))
    })
    .with_degree(k)
}

/// The harmonic components `proj_k f`, `k ≤ max_degree`.
#[derive(Debug, Clone)]
pub struct SpectralExpansion {
    pub components: Vec<FunctionHandle>,
    pub max_degree: usize,
    pub domain: Domain,
}

impl SpectralExpansion {
    pub fn new(f: &FunctionHandle, max_degree: usize, rule: &QuadratureRule) -> Result<Self> {
        let d = sphere_dim(f)?;
        check_rule(rule, RuleDomain::Sphere { d })?;
        zonal_kernel(0, d, 1.0)?;
        let s = Arc::new(Sampled::new(f, rule, 1.0 / sphere_area(d))?);
        let components = (0..=max_degree).map(|k| zonal_projection(s.clone(), k, d)).collect();
        Ok(Self { components, max_degree, domain: Domain::Sphere(d) })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.eval(x)).sum()
    }

    /// `∫ |proj_k f|² dσ` for each `k`, by the given rule.
    pub fn energies(&self, rule: &QuadratureRule) -> Vec<f64> {
        self.components.iter().map(|c| rule.sum_map(|x| c.eval(x).powi(2))).collect()
    }
}

/// `Σ_k mult(k) proj_k f`.
pub fn spectral_multiplier(exp: &SpectralExpansion, mult: impl Fn(usize) -> f64) -> FunctionHandle {
    let parts: Vec<(f64, FunctionHandle)> =
        exp.components.iter().enumerate().map(|(k, c)| (mult(k), c.clone())).filter(|(m, _)| *m != 0.0).collect();
    FunctionHandle::new(exp.domain, move |x| parts.iter().map(|(m, c)| m * c.eval(x)).sum()).with_degree(exp.max_degree)
}

/// Quadrature for the orthogonal expansions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionQuad {
    pub points_per_panel: usize,
    /// Panel width at singular points.
    pub hmin: f64,
    /// Largest panel; shrunk further so that each panel sees a bounded
    /// number of oscillations of the highest degree.
    pub hmax: f64,
    pub azimuth_points: usize,
}

impl Default for ExpansionQuad {
    fn default() -> Self {
        Self { points_per_panel: 12, hmin: 1e-10, hmax: 0.1, azimuth_points: 64 }
    }
}

impl ExpansionQuad {
    fn grading(&self, degree: usize) -> Grading {
        Grading {
            points_per_panel: self.points_per_panel,
            hmin: self.hmin,
            hmax: self.hmax.min(8.0 / (degree + 1) as f64),
        }
    }
}

/// An orthonormal expansion truncated at `max_degree`, grouped by degree.
pub trait OrthogonalExpansion: Send + Sync {
    fn domain(&self) -> Domain;
    fn max_degree(&self) -> usize;
    /// `Σ |coefficient|²` per degree.
    fn degree_energies(&self) -> Vec<f64>;
    /// `∫ f²` against the measure the basis is orthonormal for.
    fn norm2(&self) -> f64;
    /// The mass dividing norms under this crate's conventions: 1 on the
    /// sphere, the weight mass on balls.
    fn norm_mass(&self) -> f64;
    /// `Σ_k mult(k) proj_k f(x)` for `k ≤ max_degree`.
    fn eval_with(&self, x: &[f64], mult: &dyn Fn(usize) -> f64) -> f64;
}

fn check_finite(vals: &[f64], node: impl Fn(usize) -> Vec<f64>) -> Result<()> {
    match vals.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::NonFinite { index: k, point: node(k), value: vals[k] }),
        None => Ok(()),
    }
}

/// `row(i, acc, scratch)` over `0..n` in fixed chunks evaluated in
/// parallel; chunk results are added in order so the outcome does not depend
/// on the thread pool.
fn chunked_sum<A, F, G>(n: usize, zero: A, row: F, add: G) -> A
where
    A: Clone + Send + Sync,
    F: Fn(usize, &mut A, &mut Vec<f64>) + Sync,
    G: Fn(&mut A, &A),
{
    let chunk = (n / 64).max(4);
    let parts: Vec<A> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = zero.clone();
            let mut buf = Vec::new();
            for i in c * chunk..((c + 1) * chunk).min(n) {
                row(i, &mut acc, &mut buf);
            }
            acc
        })
        .collect();
    let mut out = zero;
    for p in &parts {
        add(&mut out, p);
    }
    out
}

fn lidx(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Associated Legendre functions normalized by
/// `2π ∫_0^π P̄_l^m(cos ψ)² sin ψ dψ = 1`, stored at `l(l+1)/2 + m`.
fn legendre_table(lmax: usize, x: f64, s: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize((lmax + 1) * (lmax + 2) / 2, 0.0);
    let mut pmm = (0.25 / PI).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        out[lidx(m, m)] = pmm;
        if m < lmax {
            out[lidx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * pmm;
        }
        let mf = m as f64;
        for l in m + 2..=lmax {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            out[lidx(l, m)] = a * (x * out[lidx(l - 1, m)] - b * out[lidx(l - 2, m)]);
        }
    }
}

/// Real spherical-harmonic coefficients on `S^2` in a polar chart.
///
/// Degree `l` occupies `coef[l², (l+1)²)`: the zonal coefficient, then cosine
/// and sine coefficients for `m = 1..=l`. Azimuths are measured about the
/// pole, so `D_{i,j}` for the plane orthogonal to the pole is `∂_φ`.
#[derive(Debug, Clone)]
pub struct SphereExpansion {
    frame: Vec<Vec<f64>>,
    lmax: usize,
    coef: Vec<f64>,
    norm2: f64,
}

impl SphereExpansion {
    pub fn compute(f: &FunctionHandle, lmax: usize, pole: &[f64], eq: &ExpansionQuad) -> Result<Self> {
        if f.domain() != Domain::Sphere(3) || pole.len() != 3 {
            return Err(Error::invalid("sphere expansions are for S^2 in R^3"));
        }
        let chart = chart_with_focals(
            SphereChart::new(pole.to_vec()).azimuths(eq.azimuth_points.max(2 * lmax + 2)),
            f.singular_set(),
        );
        let cr = sphere_chart_rule(&chart, &eq.grading(lmax))?;
        let az = cr.azimuth.as_ref().ok_or_else(|| Error::Numerical("chart without azimuth rule".into()))?;
        let np = az.nodes.len();
        let vals: Vec<f64> = cr.rule.par_iter().map(|(x, _)| f.eval(x)).collect();
        check_finite(&vals, |k| cr.rule.node(k).to_vec())?;
        let w1 = lmax + 1;
        let mut trig = vec![(0.0, 0.0); np * w1];
        for (k, &p) in az.nodes.iter().enumerate() {
            for m in 0..w1 {
                trig[k * w1 + m] = (m as f64 * p).sin_cos();
            }
        }
        let ncoef = w1 * w1;
        let (coef, norm2) = chunked_sum(
            cr.radial.nodes.len(),
            (vec![0.0; ncoef], 0.0),
            |ip, (acc, n2), buf| {
                let wr = cr.radial.weights[ip];
                let row = &vals[ip * np..(ip + 1) * np];
                let mut fc = vec![0.0; w1];
                let mut fs = vec![0.0; w1];
                for (k, (&v, &w)) in row.iter().zip(&az.weights).enumerate() {
                    let wv = w * v;
                    *n2 += wr * wv * v;
                    for (m, &(s, c)) in trig[k * w1..(k + 1) * w1].iter().enumerate() {
                        fc[m] += wv * c;
                        fs[m] += wv * s;
                    }
                }
                let (s, c) = cr.radial.nodes[ip].sin_cos();
                legendre_table(lmax, c, s, buf);
                for l in 0..=lmax {
                    acc[l * l] += wr * buf[lidx(l, 0)] * fc[0];
                    for m in 1..=l {
                        let p = wr * SQRT_2 * buf[lidx(l, m)];
                        acc[l * l + 2 * m - 1] += p * fc[m];
                        acc[l * l + 2 * m] += p * fs[m];
                    }
                }
            },
            |(a, n), (b, m)| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                *n += m;
            },
        );
        Ok(Self { frame: cr.frame, lmax, coef, norm2 })
    }

    pub fn pole(&self) -> &[f64] {
        &self.frame[0]
    }

    /// Coefficient of degree `l`, order `m`; `sine` selects the sine partner.
    pub fn coefficient(&self, l: usize, m: usize, sine: bool) -> f64 {
        match (m, sine) {
            (0, false) => self.coef[l * l],
            (0, true) => 0.0,
            _ => self.coef[l * l + 2 * m - usize::from(!sine)],
        }
    }

    /// `Σ_l mult(l)² Σ_m m^{2r} (a_{lm}² + b_{lm}²) = ‖∂_φ^r Σ_l mult(l) proj_l f‖²`.
    pub fn azimuthal_energy(&self, r: usize, mult: &dyn Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for l in 1..=self.lmax {
            let ml = mult(l);
            if ml == 0.0 {
                continue;
            }
            let mut e = 0.0;
            for m in 1..=l {
                let w = (m as f64).powi(2 * r as i32);
                e += w * (self.coef[l * l + 2 * m - 1].powi(2) + self.coef[l * l + 2 * m].powi(2));
            }
            acc += ml * ml * e;
        }
        acc
    }
}

impl OrthogonalExpansion for SphereExpansion {
    fn domain(&self) -> Domain {
        Domain::Sphere(3)
    }

    fn max_degree(&self) -> usize {
        self.lmax
    }

    fn degree_energies(&self) -> Vec<f64> {
        (0..=self.lmax).map(|l| self.coef[l * l..(l + 1) * (l + 1)].iter().map(|c| c * c).sum()).collect()
    }

    fn norm2(&self) -> f64 {
        self.norm2
    }

    fn norm_mass(&self) -> f64 {
        1.0
    }

    fn eval_with(&self, x: &[f64], mult: &dyn Fn(usize) -> f64) -> f64 {
        let n = norm2(x).sqrt();
        let c = (dot(x, &self.frame[0]) / n).clamp(-1.0, 1.0);
        let ph = dot(x, &self.frame[2]).atan2(dot(x, &self.frame[1]));
        let s = (1.0 - c * c).max(0.0).sqrt();
        let mut buf = Vec::new();
        legendre_table(self.lmax, c, s, &mut buf);
        let trig: Vec<(f64, f64)> = (0..=self.lmax).map(|m| (m as f64 * ph).sin_cos()).collect();
        let mut acc = 0.0;
        for l in 0..=self.lmax {
            let ml = mult(l);
            if ml == 0.0 {
                continue;
            }
            let mut v = self.coef[l * l] * buf[lidx(l, 0)];
            for (m, &(sm, cm)) in trig.iter().enumerate().take(l + 1).skip(1) {
                v += SQRT_2 * buf[lidx(l, m)] * (self.coef[l * l + 2 * m - 1] * cm + self.coef[l * l + 2 * m] * sm);
            }
            acc += ml * v;
        }
        acc
    }
}

/// Orthonormal expansion on the disc `B^2` for `W_μ(x) = (1-|x|²)^{μ-1/2}`
/// in the basis `c_m p_j^{(μ-1/2, m)}(2ρ²-1) ρ^m {cos mφ, sin mφ}` of
/// degree `2j + m`.
#[derive(Debug, Clone)]
pub struct DiscExpansion {
    mu: f64,
    nmax: usize,
    /// `(cos, sin)` coefficients indexed `[m][j]`.
    coef: Vec<Vec<(f64, f64)>>,
    recs: Vec<(Vec<f64>, Vec<f64>, f64)>,
    cm: Vec<f64>,
    norm2: f64,
}

impl DiscExpansion {
    pub fn compute(f: &FunctionHandle, nmax: usize, mu: f64, eq: &ExpansionQuad) -> Result<Self> {
        if f.domain() != Domain::Ball(2) {
            return Err(Error::invalid("disc expansions are for functions on B^2"));
        }
        if mu < 0.0 {
            return Err(Error::invalid(format!("μ must be >= 0, got {mu}")));
        }
        let (radial, phis) = ball_focals(f.singular_set(), 2);
        let dirs = BallDirections::Circle { phi_focals: phis, points: eq.azimuth_points.max(2 * nmax + 2) };
        let cr = ball_chart_rule(2, mu, &radial, &dirs, &eq.grading(nmax))?;
        let az = cr.azimuth.as_ref().ok_or_else(|| Error::Numerical("chart without azimuth rule".into()))?;
        let np = az.nodes.len();
        let vals: Vec<f64> = cr.rule.par_iter().map(|(x, _)| f.eval(x)).collect();
        check_finite(&vals, |k| cr.rule.node(k).to_vec())?;
        let (recs, cm) = disc_basis(nmax, mu)?;
        let w1 = nmax + 1;
        let mut trig = vec![(0.0, 0.0); np * w1];
        for (k, &p) in az.nodes.iter().enumerate() {
            for m in 0..w1 {
                trig[k * w1 + m] = (m as f64 * p).sin_cos();
            }
        }
        let zero: Vec<Vec<(f64, f64)>> = (0..=nmax).map(|m| vec![(0.0, 0.0); (nmax - m) / 2 + 1]).collect();
        let (coef, norm2) = chunked_sum(
            cr.radial.nodes.len(),
            (zero, 0.0),
            |ir, (acc, n2), buf| {
                let rho = cr.radial.nodes[ir];
                let wr = cr.radial.weights[ir];
                let row = &vals[ir * np..(ir + 1) * np];
                let mut fc = vec![0.0; w1];
                let mut fs = vec![0.0; w1];
                for (k, (&v, &w)) in row.iter().zip(&az.weights).enumerate() {
                    let wv = w * v;
                    *n2 += wr * wv * v;
                    for (m, &(s, c)) in trig[k * w1..(k + 1) * w1].iter().enumerate() {
                        fc[m] += wv * c;
                        fs[m] += wv * s;
                    }
                }
                let v = 2.0 * rho * rho - 1.0;
                let mut rm = 1.0;
                for m in 0..=nmax {
                    let jm = (nmax - m) / 2;
                    jacobi_orthonormal(jm, v, &recs[m], buf);
                    for j in 0..=jm {
                        let b = wr * cm[m] * buf[j] * rm;
                        acc[m][j].0 += b * fc[m];
                        acc[m][j].1 += b * fs[m];
                    }
                    rm *= rho;
                }
            },
            |(a, n), (b, m)| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        x.0 += y.0;
                        x.1 += y.1;
                    }
                }
                *n += m;
            },
        );
        Ok(Self { mu, nmax, coef, recs, cm, norm2 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `Σ_{m,j} mult(2j+m)² m^{2r} (a² + b²) = ‖∂_φ^r Σ_k mult(k) proj_k f‖²`, unnormalized.
    pub fn azimuthal_energy(&self, r: usize, mult: &dyn Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (m, row) in self.coef.iter().enumerate().skip(1) {
            let w = (m as f64).powi(2 * r as i32);
            for (j, &(a, b)) in row.iter().enumerate() {
                let ml = mult(2 * j + m);
                acc += ml * ml * w * (a * a + b * b);
            }
        }
        acc
    }
}

type JacobiRecurrence = (Vec<f64>, Vec<f64>, f64);

fn disc_basis(nmax: usize, mu: f64) -> Result<(Vec<JacobiRecurrence>, Vec<f64>)> {
    let a = mu - 0.5;
    let mut recs = Vec::with_capacity(nmax + 1);
    let mut cm = Vec::with_capacity(nmax + 1);
    for m in 0..=nmax {
        recs.push(jacobi_recurrence((nmax - m) / 2 + 1, a, m as f64)?);
        let ang = if m == 0 { 2.0 * PI } else { PI };
        cm.push((2f64.powf(m as f64 + a + 2.0) / ang).sqrt());
    }
    Ok((recs, cm))
}

impl OrthogonalExpansion for DiscExpansion {
    fn domain(&self) -> Domain {
        Domain::Ball(2)
    }

    fn max_degree(&self) -> usize {
        self.nmax
    }

    fn degree_energies(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.nmax + 1];
        for (m, row) in self.coef.iter().enumerate() {
            for (j, &(a, b)) in row.iter().enumerate() {
                e[2 * j + m] += a * a + b * b;
            }
        }
        e
    }

    fn norm2(&self) -> f64 {
        self.norm2
    }

    fn norm_mass(&self) -> f64 {
        ball_weight_mass(2, self.mu)
    }

    fn eval_with(&self, x: &[f64], mult: &dyn Fn(usize) -> f64) -> f64 {
        let rho = norm2(x).sqrt();
        let ph = x[1].atan2(x[0]);
        let v = 2.0 * rho * rho - 1.0;
        let mut buf = Vec::new();
        let mut rm = 1.0;
        let mut acc = 0.0;
        for (m, row) in self.coef.iter().enumerate() {
            let jm = row.len() - 1;
            jacobi_orthonormal(jm, v, &self.recs[m], &mut buf);
            let (s, c) = (m as f64 * ph).sin_cos();
            for (j, &(a, b)) in row.iter().enumerate() {
                let ml = mult(2 * j + m);
                if ml != 0.0 {
                    acc += ml * self.cm[m] * buf[j] * rm * (a * c + b * s);
                }
            }
            rm *= rho;
        }
        acc
    }
}

/// Orthonormal Gegenbauer expansion on `[-1,1]` for `(1-x²)^{μ-1/2}`.
#[derive(Debug, Clone)]
pub struct IntervalExpansion {
    mu: f64,
    coef: Vec<f64>,
    rec: (Vec<f64>, Vec<f64>, f64),
    norm2: f64,
}

impl IntervalExpansion {
    pub fn compute(f: &FunctionHandle, nmax: usize, mu: f64, eq: &ExpansionQuad) -> Result<Self> {
        if ball_dim(f)? != 1 {
            return Err(Error::invalid("interval expansions are for one-dimensional functions"));
        }
        let (radial, _) = ball_focals(f.singular_set(), 1);
        let foc: Vec<(f64, f64)> = radial.iter().flat_map(|&r| [(r, eq.hmin), (-r, eq.hmin)]).collect();
        let rule = composite_rule_with(-1.0, 1.0, &foc, mu - 0.5, mu - 0.5, &eq.grading(nmax))?;
        let rec = jacobi_recurrence(nmax + 1, mu - 0.5, mu - 0.5)?;
        let vals: Vec<f64> = rule.nodes.iter().map(|&x| f.eval(&[x])).collect();
        check_finite(&vals, |k| vec![rule.nodes[k]])?;
        let mut coef = vec![0.0; nmax + 1];
        let mut buf = Vec::new();
        let mut norm2 = 0.0;
        for ((&x, &w), &v) in rule.nodes.iter().zip(&rule.weights).zip(&vals) {
            jacobi_orthonormal(nmax, x, &rec, &mut buf);
            for (c, p) in coef.iter_mut().zip(&buf) {
                *c += w * v * p;
            }
            norm2 += w * v * v;
        }
        Ok(Self { mu, coef, rec, norm2 })
    }
}

impl OrthogonalExpansion for IntervalExpansion {
    fn domain(&self) -> Domain {
        Domain::Interval
    }

    fn max_degree(&self) -> usize {
        self.coef.len() - 1
    }

    fn degree_energies(&self) -> Vec<f64> {
        self.coef.iter().map(|c| c * c).collect()
    }

    fn norm2(&self) -> f64 {
        self.norm2
    }

    fn norm_mass(&self) -> f64 {
        ball_weight_mass(1, self.mu)
    }

    fn eval_with(&self, x: &[f64], mult: &dyn Fn(usize) -> f64) -> f64 {
        let mut buf = Vec::new();
        jacobi_orthonormal(self.coef.len() - 1, x[0], &self.rec, &mut buf);
        self.coef.iter().zip(&buf).enumerate().map(|(k, (c, p))| mult(k) * c * p).sum()
    }
}

/// Where best approximation and smoothed projections are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApproxVariant {
    Sphere,
    /// Ball or interval with the weight `W_μ`.
    Ball {
        mu: f64,
    },
}

impl ApproxVariant {
    fn mu(&self) -> f64 {
        match *self {
            ApproxVariant::Sphere => 0.5,
            ApproxVariant::Ball { mu } => mu,
        }
    }

    fn check(&self, f: &FunctionHandle) -> Result<()> {
        match (self, f.domain()) {
            (ApproxVariant::Sphere, Domain::Sphere(_)) => Ok(()),
            (ApproxVariant::Ball { mu }, Domain::Ball(_) | Domain::Interval) if *mu >= 0.0 => Ok(()),
            _ => Err(Error::invalid(format!("variant {self:?} does not fit a function on {:?}", f.domain()))),
        }
    }

    fn mass(&self, f: &FunctionHandle) -> Option<f64> {
        match self {
            ApproxVariant::Sphere => None,
            ApproxVariant::Ball { mu } => Some(ball_weight_mass(f.domain().dim(), *mu)),
        }
    }
}

fn default_pole(f: &FunctionHandle) -> Vec<f64> {
    first_point(f.singular_set()).unwrap_or_else(|| vec![0.0, 0.0, 1.0])
}

/// An orthonormal expansion of `f` to degree `max_degree` when one exists for
/// its domain (`S^2`, the disc, the interval).
pub fn expansion_for(
    f: &FunctionHandle,
    max_degree: usize,
    variant: ApproxVariant,
    eq: &ExpansionQuad,
) -> Result<Option<Arc<dyn OrthogonalExpansion>>> {
    variant.check(f)?;
    Ok(match f.domain() {
        Domain::Sphere(3) => Some(Arc::new(SphereExpansion::compute(f, max_degree, &default_pole(f), eq)?)),
        Domain::Ball(2) => Some(Arc::new(DiscExpansion::compute(f, max_degree, variant.mu(), eq)?)),
        Domain::Interval | Domain::Ball(1) => {
            Some(Arc::new(IntervalExpansion::compute(f, max_degree, variant.mu(), eq)?))
        }
        _ => None,
    })
}

fn expansion_handle(e: Arc<dyn OrthogonalExpansion>, n: usize, domain: Domain) -> FunctionHandle {
    let nf = n as f64;
    FunctionHandle::new(domain, move |x| e.eval_with(x, &|k| eta(k as f64 / nf))).with_degree(2 * n)
}

fn kernel_rule_degree(f: &FunctionHandle, n: usize) -> usize {
    match f.degree_hint() {
        Some(k) => k + 2 * n,
        None => 4 * n + 16,
    }
}

/// `V_n f` (sphere) or `V_n^μ f` (ball): from an orthogonal expansion where
/// available, otherwise by kernel quadrature (exact for polynomial `f`).
pub fn smoothed_projection(f: &FunctionHandle, n: usize, variant: ApproxVariant) -> Result<FunctionHandle> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if let Some(e) = expansion_for(f, 2 * n - 1, variant, &ExpansionQuad::default())? {
        return Ok(expansion_handle(e, n, f.domain()));
    }
    let deg = kernel_rule_degree(f, n);
    match f.domain() {
        Domain::Sphere(d) => vn_operator(f, n, &sphere_rule(d, deg)?),
        Domain::Ball(d) => vn_mu_operator(f, n, variant.mu(), &ball_rule(d, variant.mu(), deg)?),
        Domain::Interval => vn_mu_operator(f, n, variant.mu(), &ball_rule(1, variant.mu(), deg)?),
    }
}

/// `total - part`, with differences at rounding level of `total` set to 0.
fn cancelled(total: f64, part: f64) -> f64 {
    let v = total - part;
    if v <= 1e-13 * total.abs() {
        0.0
    } else {
        v
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("p must lie in [1, ∞], got {p}")))
    }
}

/// `E_n(f)_p` (see [`best_approx_curve`]).
pub fn best_approx(f: &FunctionHandle, n: usize, p: f64, quad: &NormQuadrature, variant: ApproxVariant) -> Result<f64> {
    Ok(best_approx_curve(f, &[n], p, quad, variant)?[0])
}

/// `E_n(f)_p` for each `n`: exact via orthogonal projection when `p = 2`,
/// otherwise the near-best surrogate `‖f - V_{⌊n/2⌋} f‖_p` (with `V_1` for
/// `n = 1`). Polynomials of degree `< n` give exactly 0.
///
/// At `p = 2` the sphere `S^2`, the disc and the interval use graded
/// orthogonal expansions; other spheres use harmonic projections on the rule
/// from `quad`. Balls of dimension `≥ 3` are only supported for `p ≠ 2`.
pub fn best_approx_curve(
    f: &FunctionHandle,
    ns: &[usize],
    p: f64,
    quad: &NormQuadrature,
    variant: ApproxVariant,
) -> Result<Vec<f64>> {
    variant.check(f)?;
    check_p(p)?;
    if ns.contains(&0) {
        return Err(Error::invalid("n must be >= 1"));
    }
    let below = |n: usize| matches!(f.degree_hint(), Some(k) if k < n);
    let todo: Vec<usize> = ns.iter().copied().filter(|&n| !below(n)).collect();
    let mut vals = std::collections::HashMap::new();
    if let Some(&nmax) = todo.iter().max() {
        if p == 2.0 {
            let (energies, norm2, mass) = l2_energies(f, nmax - 1, variant, quad)?;
            for &n in &todo {
                let low: f64 = energies[..n].iter().sum();
                vals.insert(n, (cancelled(norm2, low) / mass).sqrt());
            }
        } else {
            let rule = domain_cubature(f, variant.mu(), quad)?;
            let mass = variant.mass(f);
            let mut cached: Option<Arc<dyn OrthogonalExpansion>> = None;
            let half_max = (nmax / 2).max(1);
            let exp_ok = matches!(f.domain(), Domain::Sphere(3) | Domain::Ball(2) | Domain::Interval | Domain::Ball(1));
            if exp_ok {
                cached = expansion_for(f, 2 * half_max - 1, variant, &ExpansionQuad::default())?;
            }
            for &n in &todo {
                let m = (n / 2).max(1);
                let g = match &cached {
                    Some(e) => expansion_handle(e.clone(), m, f.domain()),
                    None => smoothed_projection(f, m, variant)?,
                };
                let v = cubature_norm(rule.as_ref(), p, mass, &|x| f.eval(x) - g.eval(x))?;
                vals.insert(n, v);
            }
        }
    }
    Ok(ns.iter().map(|n| vals.get(n).copied().unwrap_or(0.0)).collect())
}

/// Degree energies up to `max_degree`, `∫ f²`, and the norm mass.
fn l2_energies(
    f: &FunctionHandle,
    max_degree: usize,
    variant: ApproxVariant,
    quad: &NormQuadrature,
) -> Result<(Vec<f64>, f64, f64)> {
    if let Some(e) = expansion_for(f, max_degree, variant, &ExpansionQuad::default())? {
        return Ok((e.degree_energies(), e.norm2(), e.norm_mass()));
    }
    match f.domain() {
        Domain::Sphere(d) => {
            let rule = match quad {
                NormQuadrature::Rule(r) => (**r).clone(),
                NormQuadrature::Exact { degree } => sphere_rule(d, *degree)?,
                NormQuadrature::Adapted(_) => {
                    sphere_rule(d, kernel_rule_degree(f, max_degree).max(2 * max_degree + 2))?
                }
            };
            let exp = SpectralExpansion::new(f, max_degree, &rule)?;
            let norm2 = rule.sum_map(|x| f.eval(x).powi(2));
            Ok((exp.energies(&rule), norm2, 1.0))
        }
        _ => Err(Error::Unsupported("exact L2 best approximation on balls of dimension >= 3".into())),
    }
}

/// `K_r(f, 1/n)_p` realized by `g = V_n f` (see [`kfunctional_curve`]).
pub fn kfunctional_realized(
    f: &FunctionHandle,
    r: usize,
    n: usize,
    p: f64,
    variant: &Variant,
    quad: &NormQuadrature,
) -> Result<f64> {
    Ok(kfunctional_curve(f, r, &[n], p, variant, quad)?[0])
}

/// The realized K-functional at `t = 1/n` for each `n`:
/// `‖f - g‖ + n^{-r} (max_{i<j} ‖D^r_{i,j} g‖ + T)` with `g = V_n f` or
/// `V_n^μ f`, where `T` is `max_i ‖D^r_{i,d+1} g̃‖` for the ball variants and
/// `max_i ‖φ^r ∂_i^r g‖` for the DT variants. Norms follow the same
/// conventions as the moduli.
pub fn kfunctional_curve(
    f: &FunctionHandle,
    r: usize,
    ns: &[usize],
    p: f64,
    variant: &Variant,
    quad: &NormQuadrature,
) -> Result<Vec<f64>> {
    check_p(p)?;
    if r == 0 {
        return Err(Error::invalid("r must be >= 1"));
    }
    if ns.contains(&0) {
        return Err(Error::invalid("n must be >= 1"));
    }
    let (av, second) = match (variant, f.domain()) {
        (Variant::Sphere, Domain::Sphere(_)) => (ApproxVariant::Sphere, Second::None),
        (Variant::Ball { mu }, Domain::Ball(_)) | (Variant::Interval { mu }, Domain::Interval) => {
            mu_to_m(*mu)?;
            (ApproxVariant::Ball { mu: *mu }, Second::Tilde)
        }
        (Variant::DtBall, Domain::Ball(_) | Domain::Interval) => (ApproxVariant::Ball { mu: 0.5 }, Second::Dt),
        (Variant::DtBallWeighted { mu }, Domain::Ball(_) | Domain::Interval) => {
            (ApproxVariant::Ball { mu: *mu }, Second::Dt)
        }
        (Variant::SphereWeighted, _) => return Err(Error::Unsupported("weighted sphere K-functional".into())),
        _ => return Err(Error::invalid(format!("variant {variant:?} does not fit {:?}", f.domain()))),
    };
    let nmax = *ns.iter().max().unwrap_or(&1);
    let fast = p == 2.0 && matches!(f.domain(), Domain::Sphere(3) | Domain::Ball(2));
    if fast {
        let eq = ExpansionQuad::default();
        return match f.domain() {
            Domain::Sphere(3) => sphere_k_curve(f, r, ns, 2 * nmax - 1, &eq),
            _ => disc_k_curve(f, r, ns, av.mu(), second, 2 * nmax - 1, &eq),
        };
    }
    ns.iter().map(|&n| k_generic(f, r, n, p, av, second, quad)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Second {
    None,
    Tilde,
    Dt,
}

fn tilde_mass(d: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        sphere_area(d + 1)
    } else {
        ball_weight_mass(d + 1, mu - 0.5)
    }
}

fn eta_mult(n: usize) -> impl Fn(usize) -> f64 {
    move |k| eta(k as f64 / n as f64)
}

/// `Σ (1-η(k/n))² e_k` plus the energy above the truncation degree.
fn residual_energy(energies: &[f64], norm2: f64, n: usize) -> f64 {
    let captured: f64 = energies.iter().sum();
    let tail = cancelled(norm2, captured);
    let low: f64 = energies.iter().enumerate().map(|(k, e)| (1.0 - eta(k as f64 / n as f64)).powi(2) * e).sum();
    low + tail
}

fn sphere_k_curve(f: &FunctionHandle, r: usize, ns: &[usize], lmax: usize, eq: &ExpansionQuad) -> Result<Vec<f64>> {
    let poles = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let exps = poles.iter().map(|p| SphereExpansion::compute(f, lmax, p, eq)).collect::<Result<Vec<_>>>()?;
    let energies = exps[2].degree_energies();
    let norm2 = exps[2].norm2();
    Ok(ns
        .iter()
        .map(|&n| {
            let e = &energies[..(2 * n).min(energies.len())];
            let approx = residual_energy(e, norm2, n).sqrt();
            let mult = eta_mult(n);
            let d = exps.iter().map(|x| x.azimuthal_energy(r, &mult).sqrt()).fold(0.0, f64::max);
            approx + (n as f64).powi(-(r as i32)) * d
        })
        .collect())
}

fn disc_k_curve(
    f: &FunctionHandle,
    r: usize,
    ns: &[usize],
    mu: f64,
    second: Second,
    nmax: usize,
    eq: &ExpansionQuad,
) -> Result<Vec<f64>> {
    let exp = Arc::new(DiscExpansion::compute(f, nmax, mu, eq)?);
    let energies = exp.degree_energies();
    let mass = exp.norm_mass();
    ns.iter()
        .map(|&n| {
            let e = &energies[..(2 * n).min(energies.len())];
            let approx = (residual_energy(e, exp.norm2(), n) / mass).sqrt();
            let mult = eta_mult(n);
            let dterm = (exp.azimuthal_energy(r, &mult) / mass).sqrt();
            let ex = exp.clone();
            let v = move |x: &[f64]| ex.eval_with(x, &eta_mult(n));
            let deg = 2 * n - 1;
            let mut t: f64 = 0.0;
            for axis in 0..2 {
                let s = match second {
                    Second::Tilde => (disc_tilde_energy(&v, deg, axis, r, mu)? / tilde_mass(2, mu)).sqrt(),
                    Second::Dt => (disc_dt_energy(&v, deg, axis, r, mu)? / mass).sqrt(),
                    Second::None => 0.0,
                };
                t = t.max(s);
            }
            Ok(approx + (n as f64).powi(-(r as i32)) * (dterm + t))
        })
        .collect()
}

/// Chebyshev coefficients of the interpolant at `cos(πl/N)`, `l = 0..=N`.
fn cheb_coeffs(vals: &[f64]) -> Vec<f64> {
    let n = vals.len() - 1;
    if n == 0 {
        return vals.to_vec();
    }
    let table: Vec<f64> = (0..2 * n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
    (0..=n)
        .map(|k| {
            let mut s = 0.0;
            for (l, &v) in vals.iter().enumerate() {
                let w = if l == 0 || l == n { 0.5 } else { 1.0 };
                s += w * v * table[(k * l) % (2 * n)];
            }
            let c = 2.0 * s / n as f64;
            if k == 0 || k == n {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

fn cheb_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len() - 1;
    let mut b = vec![0.0; n + 1];
    for k in (1..=n).rev() {
        let next = if k < n { b[k + 1] } else { 0.0 };
        b[k - 1] = next + 2.0 * k as f64 * c[k];
    }
    b[0] /= 2.0;
    b
}

fn clenshaw(c: &[f64], u: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * u * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    u * b1 - b2 + c[0]
}

/// Derivative series of `s ↦ g(x + s e_axis)` along the chord of the unit
/// ball through `x`; `(∂_axis)^k g` at chord coordinate `R u` is
/// `clenshaw(series[k], u)`.
struct Chord {
    series: Vec<Vec<f64>>,
}

impl Chord {
    fn new(g: &dyn Fn(&[f64]) -> f64, x: &[f64], axis: usize, r: usize, deg: usize) -> Self {
        let mut y = x.to_vec();
        y[axis] = 0.0;
        let big_r = (1.0 - norm2(&y)).max(0.0).sqrt();
        let n = deg.max(r).max(1);
        let vals: Vec<f64> = (0..=n)
            .map(|l| {
                y[axis] = big_r * (PI * l as f64 / n as f64).cos();
                g(&y)
            })
            .collect();
        let mut series = vec![cheb_coeffs(&vals)];
        for k in 1..=r {
            let mut d = cheb_derivative(&series[k - 1]);
            if big_r > 0.0 {
                d.iter_mut().for_each(|c| *c /= big_r);
            } else {
                d.iter_mut().for_each(|c| *c = 0.0);
            }
            series.push(d);
        }
        Self { series }
    }

    fn derivatives(&self, u: f64) -> Vec<f64> {
        self.series.iter().map(|c| clenshaw(c, u)).collect()
    }
}

/// `(-1)^r (d/dt)^r h(x cos t - y sin t)` at `t = 0` from `h^{(k)}(x)`, `k ≤ r`.
fn rotated_derivative(hd: &[f64], x: f64, y: f64, r: usize) -> f64 {
    let mut delta = vec![0.0; r + 1];
    let mut fact = 1.0;
    for (j, dj) in delta.iter_mut().enumerate().skip(1) {
        fact *= j as f64;
        let (c, s) = match j % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        *dj = (x * c - y * s) / fact;
    }
    let mut pow = vec![0.0; r + 1];
    pow[0] = 1.0;
    let mut acc = vec![0.0; r + 1];
    let mut kfact = 1.0;
    for (k, &h) in hd.iter().enumerate().take(r + 1) {
        if k > 0 {
            kfact *= k as f64;
            let mut next = vec![0.0; r + 1];
            for a in 0..=r {
                for b in 1..=r - a {
                    next[a + b] += pow[a] * delta[b];
                }
            }
            pow = next;
        }
        for (t, pt) in pow.iter().enumerate() {
            acc[t] += h / kfact * pt;
        }
    }
    let rf: f64 = (1..=r).map(|k| k as f64).product();
    let sign = if r % 2 == 1 { -1.0 } else { 1.0 };
    sign * rf * acc[r]
}

type SplitIntegrand<'a> = dyn Fn(&[f64], f64, f64, &[f64]) -> f64 + Sync + 'a;

/// `Σ_outer w Σ_inner w F` on the disc: the coordinate `x_{1-axis}` from the
/// outer rule, the chord coordinate `R u` with the inner nodes `u`.
fn disc_chord_sum(
    v: &(dyn Fn(&[f64]) -> f64 + Sync),
    deg: usize,
    axis: usize,
    r: usize,
    outer: &(Vec<f64>, Vec<f64>),
    inner: &[(Vec<f64>, f64)],
    integrand: &SplitIntegrand<'_>,
) -> f64 {
    outer
        .0
        .par_iter()
        .zip(&outer.1)
        .map(|(&xo, &wo)| {
            let mut x = [0.0; 2];
            x[1 - axis] = xo;
            let chord = Chord::new(v, &x, axis, r, deg);
            let big_r = (1.0 - xo * xo).max(0.0).sqrt();
            let mut acc = 0.0;
            for (u, wu) in inner {
                let hd = chord.derivatives(u[0]);
                acc += wu * integrand(&hd, xo, big_r, u);
            }
            wo * acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// `∫_{B^2} |φ^r ∂_axis^r v|² W_μ`, exact for polynomial `v` of degree `≤ deg`.
fn disc_dt_energy(v: &(dyn Fn(&[f64]) -> f64 + Sync), deg: usize, axis: usize, r: usize, mu: f64) -> Result<f64> {
    let npts = deg + r + 2;
    let outer = gauss_jacobi(npts, mu, mu)?;
    let (un, uw) = gauss_jacobi(npts, mu - 0.5, mu - 0.5)?;
    let inner: Vec<(Vec<f64>, f64)> = un.into_iter().map(|u| vec![u]).zip(uw).collect();
    Ok(disc_chord_sum(v, deg, axis, r, &outer, &inner, &|hd, xo, big_r, u| {
        let xa = big_r * u[0];
        (1.0 - xo * xo - xa * xa).max(0.0).powi(r as i32) * hd[r] * hd[r]
    }))
}

/// `∫ |D^r_{axis,3} ṽ|²` over `B^3` with `W_{μ-1/2}` (over `S^2` when `μ = 0`),
/// exact for polynomial `v` of degree `≤ deg`.
fn disc_tilde_energy(v: &(dyn Fn(&[f64]) -> f64 + Sync), deg: usize, axis: usize, r: usize, mu: f64) -> Result<f64> {
    let exact = 2 * deg + 2;
    let outer = gauss_jacobi(deg + 2, mu, mu)?;
    let inner_rule = if mu == 0.0 { sphere_rule(2, exact)? } else { ball_rule(2, mu - 0.5, exact)? };
    let inner: Vec<(Vec<f64>, f64)> = inner_rule.iter().map(|(u, w)| (u.to_vec(), w)).collect();
    Ok(disc_chord_sum(v, deg, axis, r, &outer, &inner, &|hd, _xo, big_r, u| {
        let t = rotated_derivative(hd, big_r * u[0], big_r * u[1], r);
        t * t
    }))
}

fn k_generic(
    f: &FunctionHandle,
    r: usize,
    n: usize,
    p: f64,
    av: ApproxVariant,
    second: Second,
    quad: &NormQuadrature,
) -> Result<f64> {
    let d = f.domain().dim();
    let mu = av.mu();
    let g = smoothed_projection(f, n, av)?;
    let dg = 2 * n;
    let rule = domain_cubature(f, mu, quad)?;
    let mass = av.mass(f);
    let approx = cubature_norm(rule.as_ref(), p, mass, &|x| f.eval(x) - g.eval(x))?;
    let exact = 2 * dg + 2 * r + 2;
    let prule = match f.domain() {
        Domain::Sphere(_) => sphere_rule(d, exact)?,
        _ => ball_rule(d, mu, exact)?,
    };
    let gv = |y: &[f64]| g.eval(y);
    let mut dmax: f64 = 0.0;
    for i in 1..=d {
        for j in i + 1..=d {
            let op = DijOperator::new(i, j, r, d, Some(dg))?;
            dmax = dmax.max(cubature_norm(&prule, p, mass, &|x| op.apply(&gv, x))?);
        }
    }
    let mut t: f64 = 0.0;
    match second {
        Second::None => {}
        Second::Tilde => {
            let trule = tilde_gauss_rule(d, mu, exact, 2 * r + 2)?;
            let gt = |y: &[f64]| g.eval(&y[..d]);
            for i in 1..=d {
                let op = DijOperator::new(i, d + 1, r, d + 1, Some(dg))?;
                t = t.max(cubature_norm(&trule, p, Some(tilde_mass(d, mu)), &|y| op.apply(&gt, y))?);
            }
        }
        Second::Dt => {
            for i in 0..d {
                let v = cubature_norm(&prule, p, mass, &|x| {
                    let ch = Chord::new(&gv, x, i, r, dg);
                    let big_r = (1.0 - (norm2(x) - x[i] * x[i])).max(0.0).sqrt();
                    let u = if big_r > 0.0 { x[i] / big_r } else { 0.0 };
                    phi(x).powi(r as i32) * ch.derivatives(u)[r]
                })?;
                t = t.max(v);
            }
        }
    }
    Ok(approx + (n as f64).powi(-(r as i32)) * (dmax + t))
}

/// Outcome of a pointwise identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub identity: String,
    /// Largest absolute residual over the samples.
    pub residual: f64,
    pub samples: usize,
    pub seed: u64,
}

impl OperatorReport {
    fn new(identity: &str, residual: f64, samples: usize) -> Self {
        Self { identity: identity.into(), residual, samples, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Uniform points in the ball of radius `radius`.
pub fn random_ball_points(d: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
        if norm2(&x) <= radius * radius {
            out.push(x);
        }
    }
    out
}

/// Uniform points on `S^{d-1}`.
pub fn random_sphere_points(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    random_ball_points(d, count, 1.0, seed)
        .into_iter()
        .filter(|x| norm2(x) > 1e-4)
        .map(|x| {
            let n = norm2(&x).sqrt();
            x.iter().map(|v| v / n).collect()
        })
        .collect()
}

/// Points `u` with every `u_i ≥ margin` and `1 - Σu_i ≥ margin`.
pub fn random_simplex_points(d: usize, count: usize, margin: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 - (d + 1) as f64 * margin;
    (0..count)
        .map(|_| {
            let mut e: Vec<f64> = (0..=d).map(|_| -rng.gen_range(f64::EPSILON..1.0f64).ln()).collect();
            let s: f64 = e.iter().sum();
            e.iter_mut().for_each(|v| *v = margin + scale * *v / s);
            e.truncate(d);
            e
        })
        .collect()
}

/// `Σ_{i<j} D²_{i,j} f` against the Laplacian of the radial extension
/// `f(x/|x|)`, by a fourth-order difference stencil.
pub fn laplace_beltrami_check(f: &FunctionHandle, points: &[Vec<f64>]) -> Result<OperatorReport> {
    let d = sphere_dim(f)?;
    let mut worst: f64 = 0.0;
    for x in points {
        if x.len() != d {
            return Err(Error::invalid("sample point has the wrong dimension"));
        }
        let mut lhs = 0.0;
        for i in 1..=d {
            for j in i + 1..=d {
                lhs += crate::smoothness::dij_derivative(f, i, j, 2, x)?;
            }
        }
        let rhs = match f.degree_hint() {
            Some(deg) => ambient_laplace_beltrami(f, x, deg.max(2)),
            None => radial_fd_laplacian(f, x),
        };
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(OperatorReport::new("laplace_beltrami", worst, points.len()))
}

/// `ΔF - Σ x_i x_j ∂_ij F - (d-1) Σ x_i ∂_i F` at `|x| = 1` for the
/// polynomial extension `F`; exact up to rounding.
fn ambient_laplace_beltrami(f: &FunctionHandle, x: &[f64], deg: usize) -> f64 {
    let d = x.len();
    let dv = derivs(&|y: &[f64]| f.eval(y), x, deg);
    let mut v = 0.0;
    for i in 0..d {
        v += dv.hess[i][i] - (d as f64 - 1.0) * x[i] * dv.grad[i];
        for j in 0..d {
            v -= x[i] * x[j] * dv.hess[i][j];
        }
    }
    v
}

/// Ambient Laplacian of `f(y/|y|)` by fourth-order central differences.
fn radial_fd_laplacian(f: &FunctionHandle, x: &[f64]) -> f64 {
    let h = 1e-2;
    let ext = |y: &[f64]| {
        let n = norm2(y).sqrt();
        let z: Vec<f64> = y.iter().map(|v| v / n).collect();
        f.eval(&z)
    };
    let f0 = ext(x);
    (0..x.len())
        .map(|i| {
            let at = |s: f64| {
                let mut y = x.to_vec();
                y[i] += s;
                ext(&y)
            };
            (-at(2.0 * h) + 16.0 * at(h) - 30.0 * f0 + 16.0 * at(-h) - at(-2.0 * h)) / (12.0 * h * h)
        })
        .sum()
}

/// First and second partial derivatives of `g` at `x`, exact for
/// polynomials of degree `≤ deg` (Chebyshev interpolation along lines).
struct Derivs {
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
}

fn derivs(g: &dyn Fn(&[f64]) -> f64, x: &[f64], deg: usize) -> Derivs {
    let d = x.len();
    let h = 0.25;
    let mut grad = vec![0.0; d];
    let mut hess = vec![vec![0.0; d]; d];
    let mut e = vec![0.0; d];
    for i in 0..d {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[i] = 1.0;
        grad[i] = line_derivative(g, x, &e, 1, deg, h);
        hess[i][i] = line_derivative(g, x, &e, 2, deg, h);
    }
    for i in 0..d {
        for j in i + 1..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = std::f64::consts::FRAC_1_SQRT_2;
            e[j] = std::f64::consts::FRAC_1_SQRT_2;
            let dvv = line_derivative(g, x, &e, 2, deg, h);
            let m = dvv - 0.5 * (hess[i][i] + hess[j][j]);
            hess[i][j] = m;
            hess[j][i] = m;
        }
    }
    Derivs { grad, hess }
}

fn degree_or_default(g: &FunctionHandle) -> usize {
    g.degree_hint().unwrap_or(16).max(2)
}

/// `D²_{i,i} g = (1-|x|²) ∂_i² g - (2μ+1) x_i ∂_i g` (0-based `i`).
fn dii(dv: &Derivs, x: &[f64], i: usize, mu: f64) -> f64 {
    (1.0 - norm2(x)) * dv.hess[i][i] - (2.0 * mu + 1.0) * x[i] * dv.grad[i]
}

/// `D_μ g` against `Σ_i D²_{i,i} g + Σ_{i<j} D²_{i,j} g` at interior points.
pub fn dmu_decomposition_check(g: &FunctionHandle, mu: f64, points: &[Vec<f64>]) -> Result<OperatorReport> {
    let d = ball_dim(g)?;
    let deg = degree_or_default(g);
    let gv = |y: &[f64]| g.eval(y);
    let mut worst: f64 = 0.0;
    for x in points {
        if x.len() != d || norm2(x) >= 1.0 {
            return Err(Error::invalid("sample points must be interior points of the ball"));
        }
        let dv = derivs(&gv, x, deg);
        let mut lhs = 0.0;
        for i in 0..d {
            lhs += (1.0 - x[i] * x[i]) * dv.hess[i][i] - (d as f64 + 2.0 * mu) * x[i] * dv.grad[i];
            for j in i + 1..d {
                lhs -= 2.0 * x[i] * x[j] * dv.hess[i][j];
            }
        }
        let mut rhs = 0.0;
        for i in 0..d {
            rhs += dii(&dv, x, i, mu);
            for j in i + 1..d {
                rhs += crate::smoothness::dij_derivative(g, i + 1, j + 1, 2, x)?;
            }
        }
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(OperatorReport::new("dmu_decomposition", worst, points.len()))
}

const SIMPLEX_STEP: f64 = 1e-3;

/// First derivative of `s ↦ q(s)` at 0 by Richardson-extrapolated central differences.
fn richardson1(q: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let c = |h: f64| (q(h) - q(-h)) / (2.0 * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

fn richardson2(q: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let q0 = q(0.0);
    let c = |h: f64| (q(h) - 2.0 * q0 + q(-h)) / (h * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

/// `W(u) = Π u_k^{-1/2} (1-|u|)^{μ-1/2}` on the simplex.
fn simplex_weight(u: &[f64], mu: f64) -> f64 {
    let s: f64 = u.iter().sum();
    u.iter().map(|v| v.powf(-0.5)).product::<f64>() * (1.0 - s).powf(mu - 0.5)
}

/// `D²_{i,j} g(ψ(u)) = 4 U_{i,j}(g∘ψ)(u)` for all `i ≤ j`, with
/// `ψ(u) = (√u_1, …, √u_d)`; the simplex operators are evaluated by nested
/// central differences.
pub fn simplex_transfer_check(g: &FunctionHandle, mu: f64, points: &[Vec<f64>]) -> Result<OperatorReport> {
    let d = ball_dim(g)?;
    let deg = degree_or_default(g);
    let h = SIMPLEX_STEP;
    let margin = 5.0 * h;
    let gv = |y: &[f64]| g.eval(y);
    let psi = |u: &[f64]| -> Vec<f64> { u.iter().map(|v| v.max(0.0).sqrt()).collect() };
    let gpsi = |u: &[f64]| g.eval(&psi(u));
    let mut worst: f64 = 0.0;
    for u in points {
        if u.len() != d {
            return Err(Error::invalid("sample point has the wrong dimension"));
        }
        let s: f64 = u.iter().sum();
        if u.iter().any(|&v| v <= margin) || 1.0 - s <= margin {
            return Err(Error::Domain(format!("sample {u:?} is on or too close to the simplex boundary")));
        }
        let x = psi(u);
        let dv = derivs(&gv, &x, deg);
        for i in 0..d {
            let along = |k: usize, t: f64| {
                let mut v = u.clone();
                v[k] += t;
                gpsi(&v)
            };
            let g1 = richardson1(&|t| along(i, t), h);
            let g2 = richardson2(&|t| along(i, t), h);
            let rhs = 4.0 * (u[i] * (1.0 - s) * g2 + ((1.0 - s) / 2.0 - (mu + 0.5) * u[i]) * g1);
            worst = worst.max((dii(&dv, &x, i, mu) - rhs).abs());
            for j in i + 1..d {
                let shift = |t: f64| {
                    let mut v = u.clone();
                    v[i] += t;
                    v[j] -= t;
                    v
                };
                let inner = |t: f64| {
                    let v = shift(t);
                    let dij = richardson1(&|q| gpsi(&shift(t + q)), h);
                    v[i] * v[j] * simplex_weight(&v, mu) * dij
                };
                let rhs = 4.0 * richardson1(&inner, h) / simplex_weight(u, mu);
                let lhs = crate::smoothness::dij_derivative(g, i + 1, j + 1, 2, &x)?;
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(OperatorReport::new("simplex_transfer", worst, points.len()))
}

/// Ratios `‖D^r_{i,j}P‖/(n^r‖P‖)` and `‖φ^r ∂_i^r P‖/(n^r‖P‖)` on the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub degree: usize,
    pub r: usize,
    pub p: f64,
    pub mu: f64,
    /// Largest over `i < j`; 0 when `d = 1`.
    pub dij_ratio: f64,
    pub phi_ratio: f64,
}

/// Bernstein ratios for a polynomial on `B^d` with weight `W_μ`; `rule`
/// defaults to a product rule exact for `|P|²`-type integrands.
pub fn bernstein_check(
    poly: &Polynomial,
    r: usize,
    p: f64,
    mu: f64,
    rule: Option<&QuadratureRule>,
) -> Result<BernsteinReport> {
    check_p(p)?;
    let d = poly.dim();
    let n = poly.degree();
    let own;
    let rule = match rule {
        Some(q) => {
            check_rule(q, RuleDomain::Ball { d, mu })?;
            q
        }
        None => {
            own = ball_rule(d, mu, 2 * n + 2 * r + 2)?;
            &own
        }
    };
    let mass = Some(ball_weight_mass(d, mu));
    let pv = |x: &[f64]| poly.eval(x);
    let base = cubature_norm(rule, p, mass, &pv)?;
    let mut report = BernsteinReport { degree: n, r, p, mu, dij_ratio: 0.0, phi_ratio: 0.0 };
    if n == 0 || base == 0.0 {
        return Ok(report);
    }
    let scale = (n as f64).powi(r as i32) * base;
    for i in 1..=d {
        for j in i + 1..=d {
            let op = DijOperator::new(i, j, r, d, Some(n))?;
            let v = cubature_norm(rule, p, mass, &|x| op.apply(&pv, x))?;
            report.dij_ratio = report.dij_ratio.max(v / scale);
        }
    }
    for i in 0..d {
        let mut q = poly.clone();
        for _ in 0..r {
            q = q.partial(i);
        }
        let v = cubature_norm(rule, p, mass, &|x| phi(x).powi(r as i32) * q.eval(x))?;
        report.phi_ratio = report.phi_ratio.max(v / scale);
    }
    Ok(report)
}

/// `Δ^r_{i,j,θ}` applied pointwise to any function (1-based plane).
pub fn rotated_difference(f: &FunctionHandle, i: usize, j: usize, theta: f64, r: usize) -> Result<FunctionHandle> {
    let d = f.domain().dim();
    if i == 0 || j == 0 || i > d || j > d || i == j {
        return Err(Error::DegeneratePlane(format!("({i},{j}) in dimension {d}")));
    }
    let g = f.clone();
    let mut h = FunctionHandle::new(f.domain(), move |x| {
        let mut acc = 0.0;
        let mut y = x.to_vec();
        let mut c = 1.0;
        for k in 0..=r {
            y.copy_from_slice(x);
            let (s, co) = (k as f64 * theta).sin_cos();
            rotate_plane(&mut y, i - 1, j - 1, co, s);
            acc += c * g.eval(&y);
            c *= -((r - k) as f64) / (k + 1) as f64;
        }
        acc
    });
    if let Some(k) = f.degree_hint() {
        h = h.with_degree(k);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothness::dij_derivative;
    use approx::assert_relative_eq;

    fn sph(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FunctionHandle {
        FunctionHandle::new(Domain::Sphere(3), f)
    }

    #[test]
    fn vn_reproduces_low_degree() {
        let one = FunctionHandle::constant(Domain::Sphere(3), 1.0).with_degree(0);
        let rule = sphere_rule(3, 12).unwrap();
        let v = vn_operator(&one, 3, &rule).unwrap();
        assert_relative_eq!(v.eval(&[0.6, 0.0, 0.8]), 1.0, epsilon = 1e-10);
        let f = sph(|x| x[0] * x[1]).with_degree(2);
        let v = vn_operator(&f, 2, &sphere_rule(3, 8).unwrap()).unwrap();
        for x in random_sphere_points(3, 20, 3) {
            assert!((v.eval(&x) - f.eval(&x)).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_projection_examples() {
        let rule = sphere_rule(3, 8).unwrap();
        let x1 = sph(|x| x[0]).with_degree(1);
        let p1 = project_harmonic(&x1, 1, &rule).unwrap();
        let p2 = project_harmonic(&x1, 2, &rule).unwrap();
        let p0 = project_harmonic(&FunctionHandle::constant(Domain::Sphere(3), 1.0), 0, &rule).unwrap();
        for x in random_sphere_points(3, 10, 1) {
            assert!((p1.eval(&x) - x[0]).abs() < 1e-9);
            assert!(p2.eval(&x).abs() < 1e-9);
            assert!((p0.eval(&x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplier_on_x1x2() {
        let f = sph(|x| x[0] * x[1]).with_degree(2);
        let rule = sphere_rule(3, 8).unwrap();
        let exp = SpectralExpansion::new(&f, 3, &rule).unwrap();
        let g = spectral_multiplier(&exp, |k| (k * (k + 1)) as f64);
        let z = spectral_multiplier(&exp, |_| 0.0);
        let id = spectral_multiplier(&exp, |_| 1.0);
        for x in random_sphere_points(3, 10, 2) {
            assert!((g.eval(&x) - 6.0 * f.eval(&x)).abs() < 1e-9);
            assert_eq!(z.eval(&x), 0.0);
            assert!((id.eval(&x) - f.eval(&x)).abs() < 1e-9);
        }
    }

    #[test]
    fn legendre_addition_theorem() {
        let mut buf = Vec::new();
        let (s, c) = 0.7f64.sin_cos();
        legendre_table(12, c, s, &mut buf);
        for l in 0..=12 {
            let sum: f64 = buf[lidx(l, 0)].powi(2) + 2.0 * (1..=l).map(|m| buf[lidx(l, m)].powi(2)).sum::<f64>();
            assert_relative_eq!(sum, (2 * l + 1) as f64 / (4.0 * PI), epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_expansion_of_polynomial() {
        let p = Polynomial::random(3, 5, 11);
        let f = p.to_handle(Domain::Sphere(3)).unwrap();
        let exp = SphereExpansion::compute(&f, 8, &[0.0, 0.6, 0.8], &ExpansionQuad::default()).unwrap();
        let e = exp.degree_energies();
        assert!(e[6..].iter().all(|v| v.abs() < 1e-20));
        assert_relative_eq!(e.iter().sum::<f64>(), exp.norm2(), max_relative = 1e-12);
        for x in random_sphere_points(3, 10, 5) {
            assert!((exp.eval_with(&x, &|_| 1.0) - f.eval(&x)).abs() < 1e-11);
        }
        let x1x2 = sph(|x| x[0] * x[1]).with_degree(2);
        let ez = SphereExpansion::compute(&x1x2, 4, &[0.0, 0.0, 1.0], &ExpansionQuad::default()).unwrap();
        // x1 x2 = ρ² sin 2φ / 2, so ‖∂_φ f‖² = 4 ‖f‖²
        assert_relative_eq!(ez.azimuthal_energy(1, &|_| 1.0), 4.0 * ez.norm2(), max_relative = 1e-12);
    }

    #[test]
    fn disc_expansion_of_polynomial() {
        for &mu in &[0.5, 1.0, 0.0] {
            let p = Polynomial::random(2, 5, 4);
            let f = p.to_handle(Domain::Ball(2)).unwrap();
            let exp = DiscExpansion::compute(&f, 7, mu, &ExpansionQuad::default()).unwrap();
            let e = exp.degree_energies();
            assert!(e[6..].iter().all(|v| v.abs() < 1e-20), "{e:?}");
            assert_relative_eq!(e.iter().sum::<f64>(), exp.norm2(), max_relative = 1e-11);
            for x in random_ball_points(2, 10, 1.0, 2) {
                assert!((exp.eval_with(&x, &|_| 1.0) - f.eval(&x)).abs() < 1e-10);
            }
        }
        // ∫_{B^2} x_1² dx = π/4
        let x1 = FunctionHandle::new(Domain::Ball(2), |x| x[0]).with_degree(1);
        let exp = DiscExpansion::compute(&x1, 3, 0.5, &ExpansionQuad::default()).unwrap();
        assert_relative_eq!(exp.degree_energies()[1], PI / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn interval_expansion_of_polynomial() {
        let f = FunctionHandle::new(Domain::Interval, |x| x[0].powi(3) - x[0]).with_degree(3);
        let exp = IntervalExpansion::compute(&f, 5, 1.0, &ExpansionQuad::default()).unwrap();
        let e = exp.degree_energies();
        assert!(e[4..].iter().all(|v| v.abs() < 1e-24));
        assert!((exp.eval_with(&[0.3], &|_| 1.0) - f.eval(&[0.3])).abs() < 1e-12);
    }

    #[test]
    fn kernel_and_expansion_smoothing_agree() {
        let p = Polynomial::random(2, 4, 9);
        let f = p.to_handle(Domain::Ball(2)).unwrap();
        for &mu in &[0.5, 1.0] {
            let kern = vn_mu_operator(&f, 3, mu, &ball_rule(2, mu, 12).unwrap()).unwrap();
            let exp = DiscExpansion::compute(&f, 5, mu, &ExpansionQuad::default()).unwrap();
            for x in random_ball_points(2, 8, 0.95, 1) {
                let a = kern.eval(&x);
                let b = exp.eval_with(&x, &eta_mult(3));
                assert!((a - b).abs() < 1e-9, "μ={mu}: {a} vs {b}");
            }
        }
        let g = Polynomial::random(3, 5, 2).to_handle(Domain::Sphere(3)).unwrap();
        let kern = vn_operator(&g, 3, &sphere_rule(3, 12).unwrap()).unwrap();
        let exp = SphereExpansion::compute(&g, 6, &[0.0, 0.0, 1.0], &ExpansionQuad::default()).unwrap();
        for x in random_sphere_points(3, 8, 4) {
            assert!((kern.eval(&x) - exp.eval_with(&x, &eta_mult(3))).abs() < 1e-9);
        }
    }

    #[test]
    fn best_approx_examples() {
        let f = sph(|x| x[0] * x[1] * x[2]).with_degree(3);
        let quad = NormQuadrature::Exact { degree: 10 };
        let e = best_approx_curve(&f, &[1, 3, 4], 2.0, &quad, ApproxVariant::Sphere).unwrap();
        // x1x2x3 is harmonic of degree 3: ‖f‖² = 4π/105
        let norm = (4.0 * PI / 105.0).sqrt();
        assert_relative_eq!(e[0], norm, max_relative = 1e-9);
        assert_relative_eq!(e[1], norm, max_relative = 1e-9);
        assert_eq!(e[2], 0.0);
        let e4 = best_approx(&f, 4, 3.0, &NormQuadrature::Exact { degree: 12 }, ApproxVariant::Sphere).unwrap();
        assert_eq!(e4, 0.0);
        // generic harmonic projections agree on S^3
        let g = FunctionHandle::new(Domain::Sphere(4), |x| x[0] * x[1] + x[2]).with_degree(2);
        let e =
            best_approx_curve(&g, &[1, 2], 2.0, &NormQuadrature::Exact { degree: 8 }, ApproxVariant::Sphere).unwrap();
        // on S^3: ∫x_i² = π²/2, ∫x1²x2² = π²/12
        assert_relative_eq!(e[1], (PI * PI / 12.0).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(e[0], (PI * PI / 12.0 + PI * PI / 2.0).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn chord_and_rotation_derivatives() {
        let g = |x: &[f64]| x[0].powi(3) * x[1] + x[1];
        let ch = Chord::new(&g, &[0.3, 0.4], 0, 3, 4);
        let big_r = (1.0f64 - 0.16).sqrt();
        let d = ch.derivatives(0.3 / big_r);
        assert_relative_eq!(d[1], 3.0 * 0.09 * 0.4, epsilon = 1e-12);
        assert_relative_eq!(d[2], 6.0 * 0.3 * 0.4, epsilon = 1e-12);
        assert_relative_eq!(d[3], 6.0 * 0.4, epsilon = 1e-11);
        // r = 2: y² h'' - x h'
        let hd = [1.0, 2.0, 3.0];
        assert_relative_eq!(rotated_derivative(&hd, 0.5, 0.2, 2), 0.04 * 3.0 - 0.5 * 2.0, epsilon = 1e-14);
        // against trigonometric differentiation for r = 3
        let f3 = FunctionHandle::new(Domain::Ball(3), |z| z[0].powi(4) + z[0]).with_degree(4);
        let z = [0.3, -0.2, 0.5];
        let h = |x: f64, k: usize| match k {
            0 => x.powi(4) + x,
            1 => 4.0 * x.powi(3) + 1.0,
            2 => 12.0 * x * x,
            _ => 24.0 * x,
        };
        let hd: Vec<f64> = (0..4).map(|k| h(z[0], k)).collect();
        let want = dij_derivative(&f3, 1, 3, 3, &z).unwrap();
        assert_relative_eq!(rotated_derivative(&hd, z[0], z[2], 3), want, epsilon = 1e-10);
    }

    #[test]
    fn fast_and_generic_k_agree() {
        let quad = NormQuadrature::Exact { degree: 24 };
        let f = Polynomial::random(3, 4, 3).to_handle(Domain::Sphere(3)).unwrap();
        let fast = kfunctional_realized(&f, 2, 3, 2.0, &Variant::Sphere, &quad).unwrap();
        let slow = k_generic(&f, 2, 3, 2.0, ApproxVariant::Sphere, Second::None, &quad).unwrap();
        assert_relative_eq!(fast, slow, max_relative = 1e-8);
        let g = Polynomial::random(2, 4, 5).to_handle(Domain::Ball(2)).unwrap();
        for (variant, second) in [
            (Variant::Ball { mu: 0.5 }, Second::Tilde),
            (Variant::Ball { mu: 1.0 }, Second::Tilde),
            (Variant::DtBall, Second::Dt),
        ] {
            let mu = match variant {
                Variant::Ball { mu } => mu,
                _ => 0.5,
            };
            let fast = kfunctional_realized(&g, 2, 3, 2.0, &variant, &quad).unwrap();
            let slow = k_generic(&g, 2, 3, 2.0, ApproxVariant::Ball { mu }, second, &quad).unwrap();
            assert_relative_eq!(fast, slow, max_relative = 1e-8);
        }
    }

    #[test]
    fn k_for_band_limited_input() {
        // f of degree ≤ n: V_n f = f, so K = n^{-r} max ‖D^r f‖
        let f = sph(|x| x[0] * x[1]).with_degree(2);
        let k = kfunctional_realized(&f, 2, 2, 2.0, &Variant::Sphere, &NormQuadrature::Exact { degree: 12 }).unwrap();
        // D_{1,2}² (x1x2) = -4 x1x2, ‖x1x2‖² = 4π/15
        assert_relative_eq!(k, 4.0 * (4.0 * PI / 15.0).sqrt() / 4.0, max_relative = 1e-9);
    }

    #[test]
    fn operator_checks() {
        let f = sph(|x| x[0] * x[1]).with_degree(2);
        let pts = random_sphere_points(3, 5, 0);
        let rep = laplace_beltrami_check(&f, &pts).unwrap();
        assert!(rep.residual < 1e-7, "{rep:?}");
        for d in [2, 3] {
            for &mu in &[0.5, 1.0, 1.5] {
                let g = Polynomial::random(d, 6, 1).to_handle(Domain::Ball(d)).unwrap();
                let rep = dmu_decomposition_check(&g, mu, &random_ball_points(d, 5, 0.9, 2)).unwrap();
                assert!(rep.residual < 1e-8, "{rep:?}");
            }
        }
        let g = FunctionHandle::new(Domain::Ball(2), |x| x[0] * x[0] * x[1] * x[1]).with_degree(4);
        let rep = simplex_transfer_check(&g, 0.5, &random_simplex_points(2, 5, 0.05, 1)).unwrap();
        assert!(rep.residual < 1e-6, "{rep:?}");
        assert!(simplex_transfer_check(&g, 0.5, &[vec![0.0, 0.5]]).is_err());
    }

    #[test]
    fn bernstein_examples() {
        let c = Polynomial::new(2, vec![(vec![0, 0], 1.0)]).unwrap();
        let rep = bernstein_check(&c, 1, 2.0, 0.5, None).unwrap();
        assert_eq!((rep.dij_ratio, rep.phi_ratio), (0.0, 0.0));
        // interval, P = x, μ = 1/2: ‖φ‖/‖x‖ = √(2/3)/√(1/3) = √2
        let x = Polynomial::monomial(vec![1]);
        let rep = bernstein_check(&x, 1, 2.0, 0.5, None).unwrap();
        assert_relative_eq!(rep.phi_ratio, SQRT_2, max_relative = 1e-12);
    }

    #[test]
    fn rotated_difference_commutes_with_vn() {
        let f = Polynomial::random(3, 4, 8).to_handle(Domain::Sphere(3)).unwrap();
        let rule = sphere_rule(3, 16).unwrap();
        let v = vn_operator(&f, 4, &rule).unwrap();
        let a = rotated_difference(&v, 1, 3, 0.3, 2).unwrap();
        let b = vn_operator(&rotated_difference(&f, 1, 3, 0.3, 2).unwrap(), 4, &rule).unwrap();
        for x in random_sphere_points(3, 5, 9) {
            assert!((a.eval(&x) - b.eval(&x)).abs() < 1e-10);
        }
    }
}

//! Quadrature on `S^{d-1}`, `B^d` and `[-1,1]`, weighted `L^p` norms,
//! doubling weights and separated point sets.
//!
//! Two families of rules live here. The product rules (`sphere_rule`,
//! `ball_rule`, `interval_rule`) are exact on polynomials up to a declared
//! degree. The chart rules (`sphere_chart_rule`, `ball_chart_rule`) are
//! composite Gauss rules in polar coordinates, geometrically graded toward
//! chosen angles or radii, for integrands with point or curve singularities.

use std::f64::consts::PI;
use std::io::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::core_math::{dot, norm2, sphere_area, FunctionHandle, MAX_DIM};
use crate::error::{Error, Result};

/// Domain descriptor carried by a rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RuleDomain {
    /// `S^{d-1} ⊂ R^d` with surface measure.
    Sphere { d: usize },
    /// `B^d` with weight `W_μ(x) = (1-‖x‖²)^{μ-1/2}`.
    Ball { d: usize, mu: f64 },
    /// `[-1,1]` with weight `(1-x²)^{μ-1/2}`.
    Interval { mu: f64 },
}

impl RuleDomain {
    pub fn dim(&self) -> usize {
        match *self {
            RuleDomain::Sphere { d } | RuleDomain::Ball { d, .. } => d,
            RuleDomain::Interval { .. } => 1,
        }
    }

    /// Total mass of the measure.
    pub fn measure(&self) -> f64 {
        match *self {
            RuleDomain::Sphere { d } => sphere_area(d),
            RuleDomain::Ball { d, mu } => ball_weight_mass(d, mu),
            RuleDomain::Interval { mu } => ball_weight_mass(1, mu),
        }
    }
}

/// `∫_{B^d} (1-‖x‖²)^{μ-1/2} dx = (σ_d / 2) B(d/2, μ+1/2)`.
pub fn ball_weight_mass(d: usize, mu: f64) -> f64 {
    let a = d as f64 / 2.0;
    let b = mu + 0.5;
    0.5 * sphere_area(d) * (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    domain: RuleDomain,
    exact_degree: Option<usize>,
}

impl QuadratureRule {
    pub fn new(
        domain: RuleDomain,
        nodes: Vec<Vec<f64>>,
        weights: Vec<f64>,
        exact_degree: Option<usize>,
    ) -> Result<Self> {
        let dim = domain.dim();
        if nodes.len() != weights.len() {
            return Err(Error::invalid("nodes and weights differ in length"));
        }
        let mut coords = Vec::with_capacity(nodes.len() * dim);
        for x in &nodes {
            if x.len() != dim {
                return Err(Error::invalid("node of the wrong dimension"));
            }
            coords.extend_from_slice(x);
        }
        Ok(Self::from_flat(domain, coords, weights, exact_degree))
    }

    fn from_flat(domain: RuleDomain, coords: Vec<f64>, weights: Vec<f64>, exact_degree: Option<usize>) -> Self {
        Self { dim: domain.dim(), coords, weights, domain, exact_degree }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> RuleDomain {
        self.domain
    }

    /// Declared polynomial exactness; `None` for graded chart rules.
    pub fn exact_degree(&self) -> Option<usize> {
        self.exact_degree
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn par_iter(&self) -> impl IndexedParallelIterator<Item = (&[f64], f64)> + '_ {
        self.coords.par_chunks_exact(self.dim).zip(self.weights.par_iter().copied())
    }

    /// `Σ_k w_k g(x_k)` evaluated in parallel, summed in node order.
    pub fn sum_map<F>(&self, g: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        ordered_sum(self.par_iter().map(|(x, w)| w * g(x)))
    }

    /// CSV with header `x1,...,xd,weight`, one node per row.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        wtr.write_record(&header).map_err(io_err)?;
        for (x, w) in self.iter() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            row.push(format!("{w:.17e}"));
            wtr.write_record(&row).map_err(io_err)?;
        }
        wtr.flush().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(())
    }

    /// Parse the CSV produced by [`QuadratureRule::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R, domain: RuleDomain) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let dim = domain.dim();
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(io_err)?;
            if rec.len() != dim + 1 {
                return Err(Error::invalid("row has the wrong number of fields"));
            }
            for k in 0..dim {
                coords.push(parse_f64(&rec[k])?);
            }
            weights.push(parse_f64(&rec[dim])?);
        }
        Ok(Self::from_flat(domain, coords, weights, None))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv: {e}"))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
}

/// Recurrence data of the orthonormal Jacobi polynomials for
/// `(1-x)^a (1+x)^b` on `[-1,1]`: diagonal `α_k` (`k < n`), off-diagonal
/// `√β_k` (`k = 1..n`), and the total mass `μ_0`.
pub fn jacobi_recurrence(n: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::invalid(format!("Jacobi exponents must exceed -1, got ({a},{b})")));
    }
    let ab = a + b;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    for (k, dk) in diag.iter_mut().enumerate() {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        *dk = if k == 0 { (b - a) / (ab + 2.0) } else { (b * b - a * a) / (s * (s + 2.0)) };
    }
    for (k0, ok) in off.iter_mut().enumerate() {
        let k = (k0 + 1) as f64;
        let s = 2.0 * k + ab;
        let beta = if k0 == 0 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        *ok = beta.sqrt();
    }
    let mu0 = ((a + b + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp();
    Ok((diag, off, mu0))
}

/// Values `p_0(x), …, p_{n}(x)` of the orthonormal Jacobi polynomials.
pub fn jacobi_orthonormal(n: usize, x: f64, rec: &(Vec<f64>, Vec<f64>, f64), out: &mut Vec<f64>) {
    let (alpha, sb, mu0) = rec;
    out.clear();
    out.push(1.0 / mu0.sqrt());
    if n == 0 {
        return;
    }
    out.push((x - alpha[0]) * out[0] / sb[0]);
    for k in 1..n {
        let v = ((x - alpha[k]) * out[k] - sb[k - 1] * out[k - 1]) / sb[k];
        out.push(v);
    }
}

/// Gauss–Jacobi nodes and weights on `[-1,1]` for `(1-x)^a (1+x)^b`.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Ok((vec![], vec![]));
    }
    let (diag, off, mu0) = jacobi_recurrence(n, a, b)?;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = diag[k];
        if k + 1 < n {
            m[(k, k + 1)] = off[k];
            m[(k + 1, k)] = off[k];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(pairs.into_iter().unzip())
}

pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi(n, 0.0, 0.0).expect("Legendre exponents are valid")
}

/// One-dimensional rule (nodes, weights).
#[derive(Debug, Clone, Default)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Panel layout for composite Gauss rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grading {
    /// Gauss points per panel.
    pub points_per_panel: usize,
    /// Width of the panels adjacent to a focal point.
    pub hmin: f64,
    /// Maximal panel width away from focal points.
    pub hmax: f64,
}

impl Default for Grading {
    fn default() -> Self {
        Self { points_per_panel: 12, hmin: 1e-6, hmax: 0.15 }
    }
}

#[cfg(test)]
fn graded_breaks(lo: f64, hi: f64, focals: &[f64], g: &Grading) -> Vec<f64> {
    let pairs: Vec<(f64, f64)> = focals.iter().map(|&c| (c, g.hmin)).collect();
    graded_breaks_with(lo, hi, &pairs, g)
}

/// Break points marching from `lo` to `hi`: panel width grows geometrically
/// away from the last focal and halves toward the next one, down to that
/// focal's own minimal width.
fn graded_breaks_with(lo: f64, hi: f64, focals: &[(f64, f64)], g: &Grading) -> Vec<f64> {
    let floor = 1e-15 * (hi - lo);
    let mut foc: Vec<(f64, f64)> = focals
        .iter()
        .filter(|&&(c, _)| c >= lo - 1e-15 && c <= hi + 1e-15)
        .map(|&(c, h)| (c.clamp(lo, hi), h.max(floor).min(g.hmax)))
        .collect();
    foc.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(foc.len());
    for (c, h) in foc {
        match merged.last_mut() {
            Some(last) if c - last.0 < 0.25 * h.min(last.1) => last.1 = last.1.min(h),
            _ => merged.push((c, h)),
        }
    }
    let mut out = vec![lo];
    let mut x = lo;
    let mut next = 0;
    while hi - x > floor.max(1e-300) {
        while next < merged.len() && merged[next].0 <= x + 0.25 * merged[next].1 {
            next += 1;
        }
        let mut step = if next > 0 {
            let (c, h) = merged[next - 1];
            (x - c).max(h).min(g.hmax)
        } else {
            g.hmax
        };
        if let Some(&(c, h)) = merged.get(next) {
            let dn = c - x;
            step = if dn <= 2.0 * h { dn } else { step.min(dn / 2.0) };
        }
        let rest = hi - x;
        if step >= rest || (next >= merged.len() && rest < 1.5 * step) {
            x = hi;
        } else {
            x += step;
        }
        out.push(x);
    }
    out
}

/// Composite rule for `∫_lo^hi g(s) (s-lo)^{a_lo} (hi-s)^{b_hi} ds`.
pub fn composite_rule(lo: f64, hi: f64, focals: &[f64], a_lo: f64, b_hi: f64, g: &Grading) -> Result<Rule1D> {
    let pairs: Vec<(f64, f64)> = focals.iter().map(|&c| (c, g.hmin)).collect();
    composite_rule_with(lo, hi, &pairs, a_lo, b_hi, g)
}

/// [`composite_rule`] with a separate minimal panel width for each focal `(c, h)`.
pub fn composite_rule_with(
    lo: f64,
    hi: f64,
    focals: &[(f64, f64)],
    a_lo: f64,
    b_hi: f64,
    g: &Grading,
) -> Result<Rule1D> {
    if !(hi > lo) {
        return Err(Error::invalid("empty interval"));
    }
    let q = g.points_per_panel.max(1);
    let breaks = graded_breaks_with(lo, hi, focals, g);
    let (gl_x, gl_w) = gauss_legendre(q);
    let left = if a_lo != 0.0 { Some(gauss_jacobi(q, 0.0, a_lo)?) } else { None };
    let right = if b_hi != 0.0 { Some(gauss_jacobi(q, b_hi, 0.0)?) } else { None };
    let both =
        if breaks.len() == 2 && (a_lo != 0.0 || b_hi != 0.0) { Some(gauss_jacobi(q, b_hi, a_lo)?) } else { None };
    let mut rule = Rule1D::default();
    for w in breaks.windows(2) {
        let (p0, p1) = (w[0], w[1]);
        let h = p1 - p0;
        let first = p0 == lo;
        let last = p1 == hi;
        let (xs, ws, ea, eb) = if let Some((x, wt)) = both.as_ref() {
            (x, wt, b_hi, a_lo)
        } else if first && a_lo != 0.0 {
            let (x, wt) = left.as_ref().unwrap();
            (x, wt, 0.0, a_lo)
        } else if last && b_hi != 0.0 {
            let (x, wt) = right.as_ref().unwrap();
            (x, wt, b_hi, 0.0)
        } else {
            (&gl_x, &gl_w, 0.0, 0.0)
        };
        let scale = (h / 2.0).powf(1.0 + ea + eb);
        for (&x, &wt) in xs.iter().zip(ws) {
            let s = p0 + (x + 1.0) * h / 2.0;
            let mut weight = wt * scale;
            if eb == 0.0 && a_lo != 0.0 {
                weight *= (s - lo).powf(a_lo);
            }
            if ea == 0.0 && b_hi != 0.0 {
                weight *= (hi - s).powf(b_hi);
            }
            rule.nodes.push(s);
            rule.weights.push(weight);
        }
    }
    Ok(rule)
}

/// Rule for 2π-periodic integrands over one period.
///
/// Without focal angles this is the equispaced rule with `n` points, offset by
/// half a step so that no node sits at angle 0.
pub fn periodic_rule(n: usize, focals: &[f64], g: &Grading) -> Result<Rule1D> {
    let pairs: Vec<(f64, f64)> = focals.iter().map(|&c| (c, g.hmin)).collect();
    periodic_rule_with(n, &pairs, g)
}

/// [`periodic_rule`] with a separate minimal panel width for each focal `(c, h)`.
pub fn periodic_rule_with(n: usize, focals: &[(f64, f64)], g: &Grading) -> Result<Rule1D> {
    if focals.is_empty() {
        if n == 0 {
            return Err(Error::invalid("periodic rule needs at least one point"));
        }
        let h = 2.0 * PI / n as f64;
        return Ok(Rule1D { nodes: (0..n).map(|k| (k as f64 + 0.5) * h).collect(), weights: vec![h; n] });
    }
    let (lo, h0) = focals[0];
    let hi = lo + 2.0 * PI;
    let inner: Vec<(f64, f64)> =
        focals.iter().map(|&(f, h)| (lo + (f - lo).rem_euclid(2.0 * PI), h)).chain([(lo, h0), (hi, h0)]).collect();
    composite_rule_with(lo, hi, &inner, 0.0, 0.0, g)
}

/// Product rule on `S^{d-1}` exact on `Π_degree`.
///
/// `d = 1` is the two-point set `S^0`, `d = 2` the equispaced circle rule.
/// For `d ≥ 3` the rule follows the decomposition
/// `x = (s cos φ, s sin φ, √(1-s²) ξ)`, `ξ ∈ S^{d-3}`, with measure
/// `s (1-s²)^{(d-4)/2} ds dφ dσ(ξ)`.
pub fn sphere_rule(d: usize, exact_degree: usize) -> Result<QuadratureRule> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::invalid(format!("unsupported sphere dimension d={d}")));
    }
    let (coords, weights) = sphere_product(d, exact_degree)?;
    Ok(QuadratureRule::from_flat(RuleDomain::Sphere { d }, coords, weights, Some(exact_degree)))
}

fn sphere_product(d: usize, deg: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match d {
        1 => Ok((vec![1.0, -1.0], vec![1.0, 1.0])),
        2 => {
            let n = deg + 1;
            let h = 2.0 * PI / n as f64;
            let mut c = Vec::with_capacity(2 * n);
            for k in 0..n {
                let t = k as f64 * h;
                c.push(t.cos());
                c.push(t.sin());
            }
            Ok((c, vec![h; n]))
        }
        _ => {
            let (inner_c, inner_w) = sphere_product(d - 2, deg)?;
            let a = (d as f64 - 4.0) / 2.0;
            let (vs, vw) = gauss_jacobi(deg / 4 + 1, a, 0.0)?;
            let scale = 2f64.powf(-a) / 4.0;
            let n_phi = deg + 1;
            let h = 2.0 * PI / n_phi as f64;
            let m = d - 2;
            let mut coords = Vec::new();
            let mut weights = Vec::new();
            for (&v, &w) in vs.iter().zip(&vw) {
                let s = ((1.0 + v) / 2.0).sqrt();
                let c = (1.0 - s * s).max(0.0).sqrt();
                for k in 0..n_phi {
                    let phi = k as f64 * h;
                    for (xi, &wi) in inner_c.chunks_exact(m).zip(&inner_w) {
                        coords.push(s * phi.cos());
                        coords.push(s * phi.sin());
                        coords.extend(xi.iter().map(|t| c * t));
                        weights.push(w * scale * h * wi);
                    }
                }
            }
            Ok((coords, weights))
        }
    }
}

/// Product rule on `B^d` for `W_μ`, exact on `Π_degree`.
///
/// Polar coordinates `x = ρ ξ`; with `v = 2ρ²-1` the radial measure
/// `ρ^{d-1}(1-ρ²)^{μ-1/2} dρ` becomes a Jacobi weight.
pub fn ball_rule(d: usize, mu: f64, exact_degree: usize) -> Result<QuadratureRule> {
    if mu < 0.0 {
        return Err(Error::invalid(format!("μ must be >= 0, got {mu}")));
    }
    if d == 0 || d > MAX_DIM {
        return Err(Error::invalid(format!("unsupported ball dimension d={d}")));
    }
    let (sc, sw) = sphere_product(d, exact_degree)?;
    let a = mu - 0.5;
    let b = (d as f64 - 2.0) / 2.0;
    let (vs, vw) = gauss_jacobi(exact_degree / 4 + 1, a, b)?;
    let scale = 2f64.powf(-a - b) / 4.0;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (&v, &w) in vs.iter().zip(&vw) {
        let rho = ((1.0 + v) / 2.0).sqrt();
        for (xi, &wi) in sc.chunks_exact(d).zip(&sw) {
            coords.extend(xi.iter().map(|t| rho * t));
            weights.push(w * scale * wi);
        }
    }
    Ok(QuadratureRule::from_flat(RuleDomain::Ball { d, mu }, coords, weights, Some(exact_degree)))
}

/// Gauss–Gegenbauer rule on `[-1,1]` for `(1-x²)^{μ-1/2}`.
pub fn interval_rule(mu: f64, exact_degree: usize) -> Result<QuadratureRule> {
    if mu < 0.0 {
        return Err(Error::invalid(format!("μ must be >= 0, got {mu}")));
    }
    let (x, w) = gauss_jacobi(exact_degree / 2 + 1, mu - 0.5, mu - 0.5)?;
    Ok(QuadratureRule::from_flat(RuleDomain::Interval { mu }, x, w, Some(exact_degree)))
}

/// Orthonormal basis of `R^d` whose first vector is `e` (assumed unit).
pub fn complete_frame(e: &[f64]) -> Vec<Vec<f64>> {
    let d = e.len();
    let mut frame = vec![e.to_vec()];
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&p, &q| e[p].abs().total_cmp(&e[q].abs()));
    for k in order {
        if frame.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for f in &frame {
            let c = dot(&v, f);
            for (vi, fi) in v.iter_mut().zip(f) {
                *vi -= c * fi;
            }
        }
        let n = norm2(&v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|t| *t /= n);
            frame.push(v);
        }
    }
    if d == 3 {
        // keep (e, u, v) right-handed so that e_1 gives (e_2, e_3)
        let (a, b) = (&frame[0], &frame[1]);
        frame[2] = vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    }
    frame
}

/// Polar chart `x = cos ψ · pole + sin ψ · ξ` on `S^{d-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereChart {
    pub pole: Vec<f64>,
    /// Polar angles in `[0, π]` toward which ψ-panels are graded.
    pub psi_focals: Vec<f64>,
    /// Azimuths (d = 3 only) toward which φ-panels are graded.
    pub phi_focals: Vec<f64>,
    /// Azimuth count when `phi_focals` is empty, or inner rule degree for `d ≥ 4`.
    pub azimuth_points: usize,
}

impl SphereChart {
    pub fn new(pole: Vec<f64>) -> Self {
        Self { pole, psi_focals: vec![], phi_focals: vec![], azimuth_points: 128 }
    }

    pub fn psi(mut self, f: &[f64]) -> Self {
        self.psi_focals.extend_from_slice(f);
        self
    }

    pub fn phi(mut self, f: &[f64]) -> Self {
        self.phi_focals.extend_from_slice(f);
        self
    }

    pub fn azimuths(mut self, n: usize) -> Self {
        self.azimuth_points = n;
        self
    }

    /// Polar angle and (d = 3) azimuth of a unit point in this chart.
    pub fn angles_of(&self, p: &[f64]) -> (f64, f64) {
        let frame = complete_frame(&unit(&self.pole));
        let psi = dot(p, &frame[0]).clamp(-1.0, 1.0).acos();
        let phi = if frame.len() >= 3 { dot(p, &frame[2]).atan2(dot(p, &frame[1])) } else { 0.0 };
        (psi, phi)
    }

    /// Grade toward a point singularity at `p`.
    pub fn focus_point(mut self, p: &[f64]) -> Self {
        let (psi, phi) = self.angles_of(p);
        self.psi_focals.push(psi);
        if psi > 1e-9 && psi < PI - 1e-9 && self.pole.len() == 3 {
            self.phi_focals.push(phi);
        }
        self
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm2(v).sqrt();
    v.iter().map(|t| t / n).collect()
}

/// Rule in polar form: radial 1-D factor times a set of directions.
#[derive(Debug, Clone)]
pub struct ChartRule {
    pub rule: QuadratureRule,
    /// ψ (sphere) or ρ (ball) nodes and weights, Jacobian included.
    pub radial: Rule1D,
    /// Azimuth nodes and weights when the direction factor is a circle.
    pub azimuth: Option<Rule1D>,
    /// Orthonormal frame; for spheres `frame[0]` is the pole.
    pub frame: Vec<Vec<f64>>,
}

impl ChartRule {
    pub fn n_inner(&self) -> usize {
        self.rule.len() / self.radial.nodes.len()
    }
}

fn circle_dirs(az: &Rule1D, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = u.len();
    let mut c = Vec::with_capacity(az.nodes.len() * d);
    for &phi in &az.nodes {
        let (s, co) = phi.sin_cos();
        for k in 0..d {
            c.push(co * u[k] + s * v[k]);
        }
    }
    (c, az.weights.clone())
}

/// Graded polar rule on `S^{d-1}`, `d ≥ 3`.
pub fn sphere_chart_rule(chart: &SphereChart, g: &Grading) -> Result<ChartRule> {
    let d = chart.pole.len();
    if !(3..=MAX_DIM).contains(&d) {
        return Err(Error::invalid(format!("chart rules need 3 <= d <= {MAX_DIM}")));
    }
    let e = unit(&chart.pole);
    let frame = complete_frame(&e);
    let mut radial = composite_rule(0.0, PI, &chart.psi_focals, 0.0, 0.0, g)?;
    for (s, w) in radial.nodes.iter().zip(radial.weights.iter_mut()) {
        *w *= s.sin().powi(d as i32 - 2);
    }
    let (dirs, dw, azimuth) = if d == 3 {
        let az = periodic_rule(chart.azimuth_points, &chart.phi_focals, g)?;
        let (c, w) = circle_dirs(&az, &frame[1], &frame[2]);
        (c, w, Some(az))
    } else {
        let (ic, iw) = sphere_product(d - 1, chart.azimuth_points)?;
        let mut c = Vec::with_capacity(iw.len() * d);
        for xi in ic.chunks_exact(d - 1) {
            for k in 0..d {
                c.push(xi.iter().zip(&frame[1..]).map(|(x, e)| x * e[k]).sum());
            }
        }
        (c, iw, None)
    };
    let mut coords = Vec::with_capacity(radial.nodes.len() * dw.len() * d);
    let mut weights = Vec::with_capacity(radial.nodes.len() * dw.len());
    for (&psi, &wr) in radial.nodes.iter().zip(&radial.weights) {
        let (s, c) = psi.sin_cos();
        for (xi, &wi) in dirs.chunks_exact(d).zip(&dw) {
            for k in 0..d {
                coords.push(c * e[k] + s * xi[k]);
            }
            weights.push(wr * wi);
        }
    }
    Ok(ChartRule {
        rule: QuadratureRule::from_flat(RuleDomain::Sphere { d }, coords, weights, None),
        radial,
        azimuth,
        frame,
    })
}

/// Direction factor for a graded ball rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BallDirections {
    /// `d = 2`: azimuth from `e_1`, graded toward the listed angles.
    Circle { phi_focals: Vec<f64>, points: usize },
    /// `d ≥ 3`: a sphere chart on `S^{d-1}`.
    Sphere(SphereChart),
}

/// Graded polar rule on `B^d` (`d ≥ 2`) for `W_μ`; `d = 1` gives a graded interval rule.
pub fn ball_chart_rule(
    d: usize,
    mu: f64,
    radial_focals: &[f64],
    dirs: &BallDirections,
    g: &Grading,
) -> Result<ChartRule> {
    if mu < 0.0 {
        return Err(Error::invalid(format!("μ must be >= 0, got {mu}")));
    }
    let e_mu = mu - 0.5;
    if d == 1 {
        let foc: Vec<f64> = radial_focals.iter().flat_map(|&r| [r, -r]).collect();
        let r = composite_rule(-1.0, 1.0, &foc, e_mu, e_mu, g)?;
        let rule = QuadratureRule::from_flat(RuleDomain::Interval { mu }, r.nodes.clone(), r.weights.clone(), None);
        return Ok(ChartRule { rule, radial: r, azimuth: None, frame: vec![vec![1.0]] });
    }
    let mut radial = composite_rule(0.0, 1.0, radial_focals, 0.0, e_mu, g)?;
    for (r, w) in radial.nodes.iter().zip(radial.weights.iter_mut()) {
        *w *= r.powi(d as i32 - 1) * (1.0 + r).powf(e_mu);
    }
    let (dc, dw, azimuth, frame) = match dirs {
        BallDirections::Circle { phi_focals, points } => {
            if d != 2 {
                return Err(Error::invalid("circle directions need d = 2"));
            }
            let az = periodic_rule(*points, phi_focals, g)?;
            let (c, w) = circle_dirs(&az, &[1.0, 0.0], &[0.0, 1.0]);
            (c, w, Some(az), vec![vec![1.0, 0.0], vec![0.0, 1.0]])
        }
        BallDirections::Sphere(chart) => {
            if chart.pole.len() != d {
                return Err(Error::invalid("sphere chart dimension does not match the ball"));
            }
            let inner = sphere_chart_rule(chart, g)?;
            let w = inner.rule.weights.clone();
            (inner.rule.coords, w, None, inner.frame)
        }
    };
    let mut coords = Vec::with_capacity(radial.nodes.len() * dw.len() * d);
    let mut weights = Vec::with_capacity(radial.nodes.len() * dw.len());
    for (&rho, &wr) in radial.nodes.iter().zip(&radial.weights) {
        for (xi, &wi) in dc.chunks_exact(d).zip(&dw) {
            coords.extend(xi.iter().map(|t| rho * t));
            weights.push(wr * wi);
        }
    }
    Ok(ChartRule {
        rule: QuadratureRule::from_flat(RuleDomain::Ball { d, mu }, coords, weights, None),
        radial,
        azimuth,
        frame,
    })
}

/// `Σ w_k f(x_k)`; a non-finite value is reported with its node.
pub fn integrate(rule: &QuadratureRule, f: &FunctionHandle) -> Result<f64> {
    check_dims(rule, f)?;
    let vals: Vec<f64> = rule.par_iter().map(|(x, _)| f.eval(x)).collect();
    let mut acc = 0.0;
    for (k, (v, w)) in vals.iter().zip(rule.weights()).enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: k, point: rule.node(k).to_vec(), value: *v });
        }
        acc += w * v;
    }
    Ok(acc)
}

fn check_dims(rule: &QuadratureRule, f: &FunctionHandle) -> Result<()> {
    if f.domain().dim() != rule.dim() {
        return Err(Error::invalid(format!(
            "function dimension {} does not match rule dimension {}",
            f.domain().dim(),
            rule.dim()
        )));
    }
    Ok(())
}

/// Extra multiplicative weight in norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    Unit,
    /// `(1-‖x‖²)^{μ-1/2}`.
    WMu(f64),
    /// `Π_j |x·v_j|^{α_j}`.
    HAlpha {
        directions: Vec<Vec<f64>>,
        exponents: Vec<f64>,
    },
    /// Cap average `w_n` of a base weight on the sphere.
    Doubling {
        base: Box<WeightSpec>,
        n: usize,
        cap_degree: usize,
    },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Unit => Ok(()),
            WeightSpec::WMu(mu) if *mu >= 0.0 => Ok(()),
            WeightSpec::WMu(mu) => Err(Error::invalid(format!("W_μ needs μ >= 0, got {mu}"))),
            WeightSpec::HAlpha { directions, exponents } => {
                if directions.len() != exponents.len() {
                    return Err(Error::invalid("h_α needs one exponent per direction"));
                }
                for (v, a) in directions.iter().zip(exponents) {
                    if !(*a > 0.0) || (norm2(v).sqrt() - 1.0).abs() > 1e-10 {
                        return Err(Error::invalid("h_α needs α_j > 0 and unit directions"));
                    }
                }
                Ok(())
            }
            WeightSpec::Doubling { base, n, .. } => {
                if *n == 0 {
                    return Err(Error::invalid("w_n needs n >= 1"));
                }
                base.validate()
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            WeightSpec::Unit => 1.0,
            WeightSpec::WMu(mu) => (1.0 - norm2(x)).max(0.0).powf(mu - 0.5),
            WeightSpec::HAlpha { directions, exponents } => {
                directions.iter().zip(exponents).map(|(v, a)| dot(x, v).abs().powf(*a)).product()
            }
            WeightSpec::Doubling { base, n, cap_degree } => doubling_wn(base, *n, x, *cap_degree).unwrap_or(f64::NAN),
        }
    }
}

/// `(Σ w_k weight(x_k) |f(x_k)|^p)^{1/p}`; `p = ∞` maximizes over nodes and
/// refines locally around the best node.
pub fn lp_norm(rule: &QuadratureRule, f: &FunctionHandle, p: f64, weight: &WeightSpec) -> Result<f64> {
    check_dims(rule, f)?;
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return sup_norm(rule, |x| f.eval(x));
    }
    let vals: Vec<f64> = rule
        .par_iter()
        .map(|(x, w)| {
            let v = f.eval(x);
            if v.is_finite() {
                w * weight.eval(x) * v.abs().powf(p)
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut acc = 0.0;
    for (k, v) in vals.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: k, point: rule.node(k).to_vec(), value: f.eval(rule.node(k)) });
        }
        acc += v;
    }
    Ok(acc.powf(1.0 / p))
}

/// Node maximum of `|g|` followed by a local pattern search around the argmax.
pub fn sup_norm(rule: &QuadratureRule, g: impl Fn(&[f64]) -> f64 + Sync) -> Result<f64> {
    let (best_k, best) = rule
        .par_iter()
        .enumerate()
        .map(|(k, (x, _))| (k, g(x).abs()))
        .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    if best_k == usize::MAX {
        return Ok(0.0);
    }
    if !best.is_finite() {
        return Err(Error::NonFinite { index: best_k, point: rule.node(best_k).to_vec(), value: best });
    }
    let dim = rule.dim();
    let mut x = rule.node(best_k).to_vec();
    let mut fx = best;
    let mut h = 0.5 * nearest_gap(rule, best_k).max(1e-6);
    let domain = rule.domain();
    let mut y = vec![0.0; dim];
    while h > 1e-7 {
        let mut moved = false;
        for axis in 0..dim {
            for sgn in [-1.0, 1.0] {
                y.copy_from_slice(&x);
                y[axis] += sgn * h;
                project_into(domain, &mut y);
                let v = g(&y).abs();
                if v.is_finite() && v > fx {
                    fx = v;
                    x.copy_from_slice(&y);
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(fx)
}

fn nearest_gap(rule: &QuadratureRule, k: usize) -> f64 {
    let x = rule.node(k);
    rule.iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, (y, _))| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .filter(|&d2| d2 > 0.0)
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn project_into(domain: RuleDomain, y: &mut [f64]) {
    let r = norm2(y).sqrt();
    match domain {
        RuleDomain::Sphere { .. } => y.iter_mut().for_each(|t| *t /= r),
        _ if r > 1.0 => y.iter_mut().for_each(|t| *t /= r),
        _ => {}
    }
}

/// Product rule on the geodesic cap `c(center, radius)` of `S^{d-1}`.
pub fn cap_rule(center: &[f64], radius: f64, degree: usize) -> Result<QuadratureRule> {
    let d = center.len();
    if d < 2 {
        return Err(Error::invalid("caps need d >= 2"));
    }
    let e = unit(center);
    let frame = complete_frame(&e);
    let (gx, gw) = gauss_legendre(degree / 2 + 2);
    let (ic, iw) = sphere_product(d - 1, degree + 2)?;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (&x, &w) in gx.iter().zip(&gw) {
        let psi = 0.5 * radius * (x + 1.0);
        let wr = 0.5 * radius * w * psi.sin().powi(d as i32 - 2);
        let (s, c) = psi.sin_cos();
        for (xi, &wi) in ic.chunks_exact(d - 1).zip(&iw) {
            for k in 0..d {
                let dir: f64 = (0..d - 1).map(|a| xi[a] * frame[a + 1][k]).sum();
                coords.push(c * e[k] + s * dir);
            }
            weights.push(wr * wi);
        }
    }
    Ok(QuadratureRule::from_flat(RuleDomain::Sphere { d }, coords, weights, None))
}

/// `w_n(x) = n^{d-1} ∫_{c(x,1/n)} w dσ`.
pub fn doubling_wn(w: &WeightSpec, n: usize, x: &[f64], cap_rule_degree: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("w_n needs n >= 1"));
    }
    let d = x.len();
    let cap = cap_rule(x, 1.0 / n as f64, cap_rule_degree)?;
    let integral: f64 = cap.iter().map(|(y, wy)| wy * w.eval(y)).sum();
    Ok((n as f64).powi(d as i32 - 1) * integral)
}

/// Smallest `L` with `∫_{c(x,2t)} w ≤ L ∫_{c(x,t)} w` over the given samples.
pub fn fit_doubling_constant(w: &WeightSpec, centers: &[Vec<f64>], radii: &[f64], degree: usize) -> Result<f64> {
    let mut l: f64 = 0.0;
    for x in centers {
        for &t in radii {
            let small: f64 = cap_rule(x, t, degree)?.iter().map(|(y, wy)| wy * w.eval(y)).sum();
            let big: f64 = cap_rule(x, (2.0 * t).min(PI), degree)?.iter().map(|(y, wy)| wy * w.eval(y)).sum();
            if small <= 0.0 {
                return Err(Error::Numerical("cap integral vanished".into()));
            }
            l = l.max(big / small);
        }
    }
    Ok(l)
}

/// Maximal δ-separated subset of `S^{d-1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub centers: Vec<Vec<f64>>,
    pub delta: f64,
}

impl SeparatedSet {
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (a, x) in self.centers.iter().enumerate() {
            for y in &self.centers[a + 1..] {
                m = m.min(dot(x, y).clamp(-1.0, 1.0).acos());
            }
        }
        m
    }

    /// Largest distance from a test point to its nearest center.
    pub fn covering_radius(&self, test: &[Vec<f64>]) -> f64 {
        test.par_iter()
            .map(|x| self.centers.iter().map(|c| dot(x, c).clamp(-1.0, 1.0).acos()).fold(f64::INFINITY, f64::min))
            .reduce(|| 0.0, f64::max)
    }
}

/// Deterministic quasi-uniform points on `S^{d-1}`: the Fibonacci lattice
/// for `d = 3`, equispaced for `d = 2`, and a Kronecker sequence pushed
/// through the normal quantile otherwise.
pub fn lattice_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5f64.sqrt()) / 2.0;
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = 2.0 * PI * (k as f64 / golden).fract();
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            use statrs::distribution::{ContinuousCDF, Normal};
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            let mut g = 2.0f64;
            for _ in 0..64 {
                g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
            }
            let alpha: Vec<f64> = (1..=d).map(|k| (1.0 / g.powi(k as i32)).fract()).collect();
            (1..=count)
                .map(|k| {
                    let v: Vec<f64> = alpha
                        .iter()
                        .map(|a| {
                            let u = (0.5 + a * k as f64).fract().clamp(1e-12, 1.0 - 1e-12);
                            normal.inverse_cdf(u)
                        })
                        .collect();
                    unit(&v)
                })
                .collect()
        }
    }
}

/// Greedy maximal δ-separated set from the lattice stream, then a second
/// greedy pass over a validation grid so that the grid is covered.
pub fn separated_set(d: usize, delta: f64) -> Result<SeparatedSet> {
    if !(delta > 0.0 && delta <= PI) {
        return Err(Error::invalid(format!("δ must lie in (0, π], got {delta}")));
    }
    if d < 2 {
        return Err(Error::invalid("separated sets need d >= 2"));
    }
    let density = match d {
        2 => 8.0 * PI / delta,
        3 => 40.0 / (delta * delta),
        _ => 20.0 * (2.0 / delta).powi(d as i32 - 1),
    };
    let count = (density as usize).clamp(64, 400_000);
    let cos_delta = delta.cos();
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let stream = lattice_points(d, count);
    let validation = lattice_points(d, (count / 3).max(64));
    for x in stream.iter().chain(validation.iter()) {
        if centers.iter().all(|c| dot(x, c) <= cos_delta + 1e-15) {
            centers.push(x.clone());
        }
    }
    let set = SeparatedSet { centers, delta };
    debug_assert!(set.covering_radius(&validation) <= delta + 1e-12);
    Ok(set)
}

/// Discrete sums of the Marcinkiewicz–Zygmund comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MzReport {
    pub n: usize,
    pub delta: f64,
    pub p: f64,
    pub centers: usize,
    pub sum_min: f64,
    pub sum_max: f64,
    pub norm_pp: f64,
}

impl MzReport {
    /// Largest of `norm/sum_min` and `sum_max/norm`.
    pub fn bracket_factor(&self) -> f64 {
        (self.norm_pp / self.sum_min).max(self.sum_max / self.norm_pp)
    }
}

/// `Σ λ_ω min_{c(ω,δ/n)} |f|^p` and the corresponding max, against `‖f‖_p^p`.
pub fn mz_sums(
    f: &FunctionHandle,
    n: usize,
    delta: f64,
    p: f64,
    w: &WeightSpec,
    reference: &QuadratureRule,
) -> Result<MzReport> {
    let d = f.domain().dim();
    let set = separated_set(d, delta / n as f64)?;
    let radius = delta / n as f64;
    let (sum_min, sum_max) = set
        .centers
        .par_iter()
        .map(|c| {
            let cap = cap_rule(c, radius, 8).expect("cap rule");
            let lam: f64 = cap.iter().map(|(y, wy)| wy * w.eval(y)).sum();
            let mut lo = f.eval(c).abs();
            let mut hi = lo;
            for (y, _) in cap.iter() {
                let v = f.eval(y).abs();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            for y in cap_boundary(c, radius, 24) {
                let v = f.eval(&y).abs();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lam * lo.powf(p), lam * hi.powf(p))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let norm_pp = lp_norm(reference, f, p, w)?.powf(p);
    Ok(MzReport { n, delta, p, centers: set.centers.len(), sum_min, sum_max, norm_pp })
}

fn cap_boundary(c: &[f64], radius: f64, k: usize) -> Vec<Vec<f64>> {
    let d = c.len();
    let frame = complete_frame(c);
    let dirs = lattice_points(d - 1, k);
    let (s, co) = radius.sin_cos();
    dirs.iter()
        .map(|xi| (0..d).map(|m| co * c[m] + s * (0..d - 1).map(|a| xi[a] * frame[a + 1][m]).sum::<f64>()).collect())
        .collect()
}

/// Scalar integrand accepted by [`Cubature`].
pub type Integrand<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// A node set with positive weights that can be summed against lazily.
pub trait Cubature: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// `Σ w_k g(x_k)`; a non-finite value propagates as NaN.
    fn weighted_sum(&self, g: Integrand<'_>) -> f64;
    /// `max_k |g(x_k)|`.
    fn max_abs(&self, g: Integrand<'_>) -> f64;
    fn mass(&self) -> f64 {
        self.weighted_sum(&|_| 1.0)
    }
}

impl Cubature for QuadratureRule {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn weighted_sum(&self, g: Integrand<'_>) -> f64 {
        let parts = self
            .coords
            .par_chunks(self.dim.max(1) * 256)
            .zip(self.weights.par_chunks(256))
            .map(|(c, w)| c.chunks_exact(self.dim.max(1)).zip(w).map(|(x, wk)| wk * g(x)).sum::<f64>());
        ordered_sum(parts)
    }

    fn max_abs(&self, g: Integrand<'_>) -> f64 {
        self.coords
            .par_chunks(self.dim.max(1) * 256)
            .map(|c| c.chunks_exact(self.dim.max(1)).map(|x| g(x).abs()).fold(0.0, nan_max))
            .reduce(|| 0.0, nan_max)
    }
}

/// Parallel evaluation with a sequential sum, so results do not depend on
/// how the work was split.
pub(crate) fn ordered_sum(it: impl IndexedParallelIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    v.iter().sum()
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Lazy product rule on `B^{d+1}` for `(1-‖y‖²)^{μ-1}` (`μ > 0`) or on
/// `S^d` (`μ = 0`), in the coordinates
/// `y = (x̂, Rρ cos β, Rρ sin β)` with `R = √(1-‖x̂‖²)`, where the pair
/// `(Rρ cos β, Rρ sin β)` occupies slots `i` and `d`.
///
/// Rotations in the `(i, d)` plane shift `β`, so singular sets of
/// `f(Q_{i,d+1,t} y)` stay aligned with the β-panels.
#[derive(Debug, Clone)]
pub struct TildeRule {
    d: usize,
    axis: usize,
    mu: f64,
    xhat: Vec<(Vec<f64>, f64)>,
    rho: Rule1D,
    /// One β rule per ρ node.
    beta: Vec<Rule1D>,
}

/// Focal data for [`TildeRule::graded`]; pairs are `(focal, minimal panel width)`.
#[derive(Debug, Clone, Default)]
pub struct TildeFocals {
    /// Only used when `d = 2`: grading in the single `x̂` coordinate.
    pub xhat: Vec<(f64, f64)>,
    pub rho: Vec<(f64, f64)>,
    /// β focals graded the same way for every ρ.
    pub beta_fixed: Vec<(f64, f64)>,
    /// β focals of a singularity sitting at `ρ = 1`; at radius ρ their panels
    /// stop at width `max(corner_floor, √(1-ρ)/2)`.
    pub beta_corner: Vec<f64>,
    pub corner_floor: f64,
    /// β count without focals.
    pub beta_points: usize,
    /// Exact degree of the `x̂` rule when `d ≥ 3`.
    pub xhat_degree: usize,
}

impl TildeRule {
    /// `axis` is 0-based in `0..d`.
    pub fn graded(d: usize, mu: f64, axis: usize, foc: &TildeFocals, g: &Grading) -> Result<Self> {
        if d == 0 || axis >= d || d + 1 > MAX_DIM {
            return Err(Error::invalid(format!("tilde rule needs 0 <= axis < d, got axis={axis}, d={d}")));
        }
        if mu < 0.0 {
            return Err(Error::invalid(format!("μ must be >= 0, got {mu}")));
        }
        let xhat = match d {
            1 => vec![(vec![], 1.0)],
            2 => {
                let r = composite_rule_with(-1.0, 1.0, &foc.xhat, mu, mu, g)?;
                r.nodes.iter().zip(&r.weights).map(|(&x, &w)| (vec![x], w)).collect()
            }
            _ => {
                let r = ball_rule(d - 1, mu + 0.5, foc.xhat_degree.max(8))?;
                r.iter().map(|(x, w)| (x.to_vec(), w)).collect()
            }
        };
        let rho = if mu == 0.0 {
            Rule1D { nodes: vec![1.0], weights: vec![1.0] }
        } else {
            let mut r = composite_rule_with(0.0, 1.0, &foc.rho, 0.0, mu - 1.0, g)?;
            for (x, w) in r.nodes.iter().zip(r.weights.iter_mut()) {
                *w *= x * (1.0 + x).powf(mu - 1.0);
            }
            r
        };
        let beta = rho
            .nodes
            .iter()
            .map(|&r| {
                let width = foc.corner_floor.max(0.5 * (1.0 - r).max(0.0).sqrt());
                let mut all = foc.beta_fixed.clone();
                all.extend(foc.beta_corner.iter().map(|&c| (c, width)));
                periodic_rule_with(foc.beta_points.max(8), &all, g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { d, axis, mu, xhat, rho, beta })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Exact mass of the measure the rule approximates.
    pub fn exact_mass(&self) -> f64 {
        if self.mu == 0.0 {
            sphere_area(self.d + 1)
        } else {
            ball_weight_mass(self.d + 1, self.mu - 0.5)
        }
    }

    fn fill(&self, xh: &[f64], r: f64, beta: f64, y: &mut [f64]) {
        let mut k = 0;
        for (slot, v) in y[..self.d].iter_mut().enumerate() {
            if slot != self.axis {
                *v = xh[k];
                k += 1;
            }
        }
        let (s, c) = beta.sin_cos();
        y[self.axis] = r * c;
        y[self.d] = r * s;
    }

    fn outer(&self) -> impl IndexedParallelIterator<Item = (usize, usize)> + '_ {
        let nr = self.rho.nodes.len();
        (0..self.xhat.len() * nr).into_par_iter().map(move |k| (k / nr, k % nr))
    }
}

impl Cubature for TildeRule {
    fn dim(&self) -> usize {
        self.d + 1
    }

    fn len(&self) -> usize {
        self.xhat.len() * self.beta.iter().map(|b| b.nodes.len()).sum::<usize>()
    }

    fn weighted_sum(&self, g: Integrand<'_>) -> f64 {
        ordered_sum(self.outer().map(|(a, b)| {
            let (xh, wx) = &self.xhat[a];
            let big_r = (1.0 - norm2(xh)).max(0.0).sqrt();
            let r = big_r * self.rho.nodes[b];
            let mut y = vec![0.0; self.d + 1];
            let mut acc = 0.0;
            let br = &self.beta[b];
            for (&beta, &wb) in br.nodes.iter().zip(&br.weights) {
                self.fill(xh, r, beta, &mut y);
                acc += wb * g(&y);
            }
            acc * wx * self.rho.weights[b]
        }))
    }

    fn max_abs(&self, g: Integrand<'_>) -> f64 {
        self.outer()
            .map(|(a, b)| {
                let (xh, _) = &self.xhat[a];
                let r = (1.0 - norm2(xh)).max(0.0).sqrt() * self.rho.nodes[b];
                let mut y = vec![0.0; self.d + 1];
                let mut m: f64 = 0.0;
                for &beta in &self.beta[b].nodes {
                    self.fill(xh, r, beta, &mut y);
                    m = nan_max(m, g(&y).abs());
                }
                m
            })
            .reduce(|| 0.0, nan_max)
    }
}

/// Product rule on `B^{d+1}` for `(1-‖y‖²)^{μ-1}` (`μ > 0`) or on `S^d`
/// (`μ = 0`), written as `y = (x, R s)` with `x ∈ B^d`. Exact on polynomials
/// of total degree `≤ x_degree` whose degree in the last variable is
/// `≤ y_degree`.
pub fn tilde_gauss_rule(d: usize, mu: f64, x_degree: usize, y_degree: usize) -> Result<QuadratureRule> {
    let base = ball_rule(d, mu, x_degree)?;
    let (sn, sw) =
        if mu == 0.0 { (vec![-1.0, 1.0], vec![1.0, 1.0]) } else { gauss_jacobi(y_degree / 2 + 1, mu - 1.0, mu - 1.0)? };
    let mut coords = Vec::with_capacity(base.len() * sn.len() * (d + 1));
    let mut weights = Vec::with_capacity(base.len() * sn.len());
    for (x, wx) in base.iter() {
        let r = (1.0 - norm2(x)).max(0.0).sqrt();
        for (&s, &ws) in sn.iter().zip(&sw) {
            coords.extend_from_slice(x);
            coords.push(r * s);
            weights.push(wx * ws);
        }
    }
    let domain = if mu == 0.0 { RuleDomain::Sphere { d: d + 1 } } else { RuleDomain::Ball { d: d + 1, mu: mu - 0.5 } };
    Ok(QuadratureRule::from_flat(domain, coords, weights, Some(x_degree.min(y_degree))))
}

/// Write a rule to a CSV file.
pub fn save_rule_csv(rule: &QuadratureRule, path: &std::path::Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::Numerical(e.to_string()))?;
    rule.write_csv(&mut file)?;
    file.flush().map_err(|e| Error::Numerical(e.to_string()))
}

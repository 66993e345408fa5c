//! Seeded invariant suite run by `sphmod verify`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximation::{
    bernstein_check, best_approx_curve, dmu_decomposition_check, laplace_beltrami_check, random_ball_points,
    random_simplex_points, random_sphere_points, rotated_difference, simplex_transfer_check, vn_operator,
    ApproxVariant, SpectralExpansion,
};
use crate::core_math::{binom_real, gegenbauer_sweep, Domain, SmoothedKernel};
use crate::error::Result;
use crate::poly::{monomial_exponents, Polynomial};
use crate::quadrature::{mz_sums, sphere_rule, WeightSpec};
use crate::rates::{ExampleId, ExampleSpec};
use crate::smoothness::{dij_derivative, modulus, ModulusRequest, NormQuadrature, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Multiplies every tolerance and bound.
    pub tol_scale: f64,
    /// Exact degree of the rule used by the `V_n` checks.
    pub quad_degree: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 0, tol_scale: 1.0, quad_degree: 24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub options: SuiteOptions,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn check(name: &str, value: f64, tolerance: f64, samples: usize, opts: &SuiteOptions) -> CheckResult {
    let tolerance = tolerance * opts.tol_scale;
    CheckResult { name: name.into(), value, tolerance, passed: value.is_finite() && value <= tolerance, samples }
}

/// Runs every check; numerical failures inside a check propagate.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let checks = vec![
        gegenbauer_normalization(opts),
        vn_reproduction(opts)?,
        commutation(opts)?,
        eigen_identity(opts)?,
        laplace_beltrami(opts)?,
        decomposition(opts)?,
        simplex(opts)?,
        bernstein(opts)?,
        jackson(opts)?,
        mz_bracketing(opts)?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { options: *opts, checks, passed })
}

fn gegenbauer_normalization(opts: &SuiteOptions) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut out = Vec::new();
    let mut count = 0;
    for &lambda in &[0.5, 1.0, 1.5] {
        gegenbauer_sweep(64, lambda, 1.0, &mut out);
        for (n, v) in out.iter().enumerate() {
            let want = binom_real(n as f64 + 2.0 * lambda - 1.0, n);
            worst = worst.max((v - want).abs() / want);
            count += 1;
        }
    }
    check("gegenbauer_at_one", worst, 1e-12, count, opts)
}

fn vn_reproduction(opts: &SuiteOptions) -> Result<CheckResult> {
    let rule = sphere_rule(3, opts.quad_degree)?;
    let pts = random_sphere_points(3, 12, opts.seed);
    let mut worst: f64 = 0.0;
    let monos = monomial_exponents(3, 8);
    for e in &monos {
        let f = Polynomial::monomial(e.clone()).to_handle(Domain::Sphere(3))?;
        let v = vn_operator(&f, 8, &rule)?;
        for x in &pts {
            worst = worst.max((v.eval(x) - f.eval(x)).abs());
        }
    }
    Ok(check("vn_reproduction", worst, 1e-8, monos.len(), opts))
}

fn commutation(opts: &SuiteOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rule = sphere_rule(3, opts.quad_degree)?;
    let mut worst: f64 = 0.0;
    let cases = 20;
    for c in 0..cases {
        let f = Polynomial::random(3, 6, opts.seed + c).to_handle(Domain::Sphere(3))?;
        let i = rng.gen_range(1..=3);
        let j = (i + rng.gen_range(0..2)) % 3 + 1;
        let theta = rng.gen_range(-PI..PI);
        let lhs = rotated_difference(&vn_operator(&f, 8, &rule)?, i, j, theta, 2)?;
        let rhs = vn_operator(&rotated_difference(&f, i, j, theta, 2)?, 8, &rule)?;
        for x in random_sphere_points(3, 3, opts.seed + 100 + c) {
            worst = worst.max((lhs.eval(&x) - rhs.eval(&x)).abs());
        }
    }
    Ok(check("difference_commutes_with_vn", worst, 1e-8, cases as usize, opts))
}

fn eigen_identity(opts: &SuiteOptions) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for d in [3usize, 4] {
        let f = Polynomial::random(d, 6, opts.seed + d as u64).to_handle(Domain::Sphere(d))?;
        let rule = sphere_rule(d, 14)?;
        let exp = SpectralExpansion::new(&f, 6, &rule)?;
        for (k, pk) in exp.components.iter().enumerate() {
            for x in random_sphere_points(d, 4, opts.seed + k as u64) {
                let mut lap = 0.0;
                for i in 1..=d {
                    for j in i + 1..=d {
                        lap += dij_derivative(pk, i, j, 2, &x)?;
                    }
                }
                let ev = (k * (k + d - 2)) as f64;
                worst = worst.max((lap + ev * pk.eval(&x)).abs());
                count += 1;
            }
        }
    }
    let y = Polynomial::new(3, vec![(vec![1, 1, 0], 1.0)])?.to_handle(Domain::Sphere(3))?;
    for x in random_sphere_points(3, 4, opts.seed) {
        let mut lap = 0.0;
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            lap += dij_derivative(&y, i, j, 2, &x)?;
        }
        worst = worst.max((lap + 6.0 * y.eval(&x)).abs());
        count += 1;
    }
    Ok(check("laplace_beltrami_eigenvalues", worst, 1e-6, count, opts))
}

fn laplace_beltrami(opts: &SuiteOptions) -> Result<CheckResult> {
    let f = Polynomial::random(3, 5, opts.seed).to_handle(Domain::Sphere(3))?;
    let rep = laplace_beltrami_check(&f, &random_sphere_points(3, 10, opts.seed))?;
    Ok(check("laplace_beltrami_vs_ambient", rep.residual, 1e-8, rep.samples, opts))
}

fn decomposition(opts: &SuiteOptions) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for d in [2usize, 3] {
        for mu in [0.5, 1.0] {
            let g = Polynomial::random(d, 6, opts.seed + d as u64).to_handle(Domain::Ball(d))?;
            let rep = dmu_decomposition_check(&g, mu, &random_ball_points(d, 5, 0.95, opts.seed))?;
            worst = worst.max(rep.residual);
            count += rep.samples;
        }
    }
    Ok(check("dmu_decomposition", worst, 1e-8, count, opts))
}

fn simplex(opts: &SuiteOptions) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for d in [2usize, 3] {
        for mu in [0.5, 1.0] {
            let g = Polynomial::random(d, 6, opts.seed + 7 + d as u64).to_handle(Domain::Ball(d))?;
            let rep = simplex_transfer_check(&g, mu, &random_simplex_points(d, 4, 0.05, opts.seed))?;
            worst = worst.max(rep.residual);
            count += rep.samples;
        }
    }
    Ok(check("simplex_transfer", worst, 1e-6, count, opts))
}

fn bernstein(opts: &SuiteOptions) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [4usize, 8, 16] {
        for s in 0..3 {
            let p = Polynomial::random(2, n, opts.seed + 31 * n as u64 + s);
            for r in [1usize, 2] {
                let rep = bernstein_check(&p, r, 2.0, 0.5, None)?;
                worst = worst.max(rep.dij_ratio).max(rep.phi_ratio);
                count += 1;
            }
        }
    }
    Ok(check("bernstein_ratio_bound", worst, 4.0, count, opts))
}

/// `max_θ |K_n(cos θ)| (1 + nθ)^6 / n²` on `S^2`, for one `n`.
pub fn localization_constant(n: usize) -> Result<f64> {
    let k = SmoothedKernel::new(n, 3)?;
    let m = 20_000;
    Ok((0..=m)
        .map(|s| {
            let th = PI * s as f64 / m as f64;
            k.eval_unchecked(th.cos()).abs() * (1.0 + n as f64 * th).powi(6) / (n * n) as f64
        })
        .fold(0.0, f64::max))
}

/// Ratio of the largest to the smallest [`localization_constant`] over `ns`.
pub fn localization_spread(ns: &[usize]) -> Result<(Vec<f64>, f64)> {
    let cs: Vec<f64> = ns.iter().map(|&n| localization_constant(n)).collect::<Result<_>>()?;
    let hi = cs.iter().cloned().fold(0.0, f64::max);
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((cs, hi / lo))
}

fn jackson(opts: &SuiteOptions) -> Result<CheckResult> {
    let spec = ExampleSpec::new(ExampleId::S2);
    let f = spec.function()?;
    let ns = [8usize, 16, 32];
    let quad = NormQuadrature::Adapted(spec.quad);
    let e = best_approx_curve(&f, &ns, 2.0, &quad, ApproxVariant::Sphere)?;
    let mut worst: f64 = 0.0;
    for (k, &n) in ns.iter().enumerate() {
        let w = modulus(&ModulusRequest::new(f.clone(), 2, 2.0, 1.0 / n as f64, Variant::Sphere), &quad)?;
        worst = worst.max(e[k] / w);
    }
    Ok(check("jackson_ratio_bound", worst, 50.0, ns.len(), opts))
}

fn mz_bracketing(opts: &SuiteOptions) -> Result<CheckResult> {
    let n = 8;
    let f = Polynomial::random(3, n, opts.seed).to_handle(Domain::Sphere(3))?;
    let reference = sphere_rule(3, 2 * n + 2)?;
    let rep = mz_sums(&f, n, 0.5, 2.0, &WeightSpec::Unit, &reference)?;
    Ok(check("mz_bracket_factor", rep.bracket_factor(), 10.0, rep.centers, opts))
}

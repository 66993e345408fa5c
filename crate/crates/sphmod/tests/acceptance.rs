//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing the report; set `ACCEPTANCE_STRICT=1` to exit 1
//! when any criterion fails.

use std::time::{Duration, Instant};

use sphmod::approximation::{bernstein_check, best_approx_curve, kfunctional_curve};
use sphmod::core_math::FunctionHandle;
use sphmod::poly::Polynomial;
use sphmod::rates::{run_example_with, ExampleId, ExampleSpec};
use sphmod::smoothness::{modulus_curve, ModulusRequest, NormQuadrature};
use sphmod::verify::{localization_spread, run_suite, CheckResult, SuiteOptions};

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, k: usize, title: &str, ok: bool, detail: String, took: Duration) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {k:>2} {title}: {detail} ({took:.1?})");
        if !ok {
            self.failed.push(k);
        }
    }
}

fn suite_check<'a>(checks: &'a [CheckResult], name: &str) -> &'a CheckResult {
    checks.iter().find(|c| c.name == name).expect("suite check")
}

fn slope(id: ExampleId, d: usize, alpha: f64, grid: bool) -> (f64, f64) {
    let mut s = ExampleSpec::new(id);
    s.d = d;
    s.p = 2.0;
    s.alpha = alpha;
    s.mu = 0.5;
    if grid {
        s.tmin = 2f64.powi(-9);
        s.tmax = 2f64.powi(-4);
        s.tsteps = 11;
    }
    let run = run_example_with(&s, false).expect("example run");
    (run.fit.slope, run.expected.exponent)
}

fn slope_line(rep: &mut Report, k: usize, title: &str, cases: &[(ExampleId, usize, f64, f64, f64)], grid: bool) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for &(id, d, alpha, want, tol) in cases {
        let (got, _) = slope(id, d, alpha, grid);
        let pass = (got - want).abs() <= tol;
        ok &= pass;
        parts.push(format!("{id} α={alpha} slope {got:.4} (want {want}±{tol})"));
    }
    rep.line(k, title, ok, parts.join("; "), start.elapsed());
}

/// `ω_2(f, 1/n)`, `E_k` for `k = 1..=nmax` and the realized `K_2(f, 1/n)`.
struct Triple {
    omega: Vec<f64>,
    e: Vec<f64>,
    k: Vec<f64>,
}

fn triple(spec: &ExampleSpec, f: &FunctionHandle, ns: &[usize]) -> Triple {
    let quad = NormQuadrature::Adapted(spec.quad);
    let ts: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let req = ModulusRequest::new(f.clone(), 2, 2.0, ts[0], spec.variant());
    let omega = modulus_curve(&req, &ts, &quad).expect("modulus");
    let nmax = *ns.last().unwrap();
    let all: Vec<usize> = (1..=nmax).collect();
    let e = best_approx_curve(f, &all, 2.0, &quad, spec.approx_variant()).expect("best approximation");
    let k = kfunctional_curve(f, 2, ns, 2.0, &spec.variant(), &quad).expect("K-functional");
    Triple { omega, e, k }
}

fn main() {
    let mut rep = Report { failed: Vec::new() };
    let total = Instant::now();

    let start = Instant::now();
    let suite = run_suite(&SuiteOptions::default()).expect("suite");
    let suite_time = start.elapsed();
    let from_suite = |rep: &mut Report, k: usize, title: &str, names: &[&str]| {
        let cs: Vec<&CheckResult> = names.iter().map(|n| suite_check(&suite.checks, n)).collect();
        let ok = cs.iter().all(|c| c.passed);
        let detail = cs
            .iter()
            .map(|c| format!("{} {:.3e} (tol {:.0e}, {} samples)", c.name, c.value, c.tolerance, c.samples))
            .collect::<Vec<_>>()
            .join("; ");
        rep.line(k, title, ok, detail, suite_time);
    };
    from_suite(&mut rep, 1, "Gegenbauer normalization", &["gegenbauer_at_one"]);
    from_suite(&mut rep, 2, "V_n reproduction on Π_8", &["vn_reproduction"]);
    from_suite(&mut rep, 3, "commutation with V_n", &["difference_commutes_with_vn"]);
    from_suite(&mut rep, 4, "eigen-identity", &["laplace_beltrami_eigenvalues"]);

    use ExampleId::*;
    slope_line(
        &mut rep,
        5,
        "sphere rates",
        &[(S2, 3, 0.25, 1.5, 0.1), (S2, 3, 0.75, 2.0, 0.1), (S3, 3, 0.3, 1.6, 0.1)],
        true,
    );
    slope_line(
        &mut rep,
        6,
        "interval/ball rates",
        &[(L1, 1, 0.25, 1.5, 0.1), (B2, 2, 0.25, 1.5, 0.1), (B4, 2, 0.2, 1.4, 0.1)],
        true,
    );
    slope_line(&mut rep, 7, "best-approximation rates", &[(E2, 3, 0.25, -1.5, 0.15), (E5, 2, 0.25, -1.5, 0.15)], false);

    let start = Instant::now();
    let ns = [8usize, 16, 32, 64];
    let mut jackson: f64 = 0.0;
    let mut inverse: f64 = 0.0;
    let (mut klo, mut khi) = (f64::INFINITY, 0.0f64);
    let mut worst = Vec::new();
    for id in [S1, S2, S3, S4, L1, B1, B2, B3, B4] {
        let spec = ExampleSpec::new(id);
        let f = spec.function().expect("function");
        let t = triple(&spec, &f, &ns);
        let (mut jf, mut inf, mut kl, mut kh) = (0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
        for (a, &n) in ns.iter().enumerate() {
            let w = t.omega[a];
            jf = jf.max(t.e[n - 1] / w);
            // E_0 is dropped from the sum, which only shrinks the bound.
            let sum: f64 = (2..=n).map(|k| k as f64 * t.e[k - 2]).sum();
            inf = inf.max(w / (sum / (n * n) as f64));
            kl = kl.min(t.k[a] / w);
            kh = kh.max(t.k[a] / w);
        }
        worst.push(format!("{id}: J {jf:.2} I {inf:.2} K∈[{kl:.2},{kh:.2}]"));
        jackson = jackson.max(jf);
        inverse = inverse.max(inf);
        klo = klo.min(kl);
        khi = khi.max(kh);
    }
    let c = jackson.max(inverse);
    let elapsed = start.elapsed();
    println!("     per function: {}", worst.join("; "));
    rep.line(
        8,
        "Jackson/inverse ratios",
        c < 50.0,
        format!("C = {c:.3} (Jackson {jackson:.3}, inverse {inverse:.3}; need < 50)"),
        elapsed,
    );
    rep.line(
        9,
        "K-functional equivalence",
        klo >= 1.0 / 50.0 && khi <= 50.0,
        format!("K_2/ω_2 ∈ [{klo:.3}, {khi:.3}] (need ⊂ [0.02, 50])"),
        elapsed,
    );

    from_suite(&mut rep, 10, "operator decompositions", &["dmu_decomposition", "simplex_transfer"]);

    let start = Instant::now();
    let mut per_n = Vec::new();
    for n in [4usize, 8, 16, 32] {
        let mut m: f64 = 0.0;
        for s in 0..20u64 {
            let p = Polynomial::random(2, n, 1000 * n as u64 + s);
            for r in [1usize, 2] {
                let b = bernstein_check(&p, r, 2.0, 0.5, None).expect("bernstein");
                m = m.max(b.dij_ratio).max(b.phi_ratio);
            }
        }
        per_n.push((n, m));
    }
    let bmax = per_n.iter().map(|x| x.1).fold(0.0, f64::max);
    let growth = per_n[3].1 / per_n[2].1;
    rep.line(
        11,
        "Bernstein ratios",
        bmax <= 10.0 && growth <= 1.5,
        format!(
            "max ratio per n {:?}; C = {bmax:.3} (need ≤ 10), n=32/n=16 growth {growth:.3} (need ≤ 1.5)",
            per_n.iter().map(|(n, m)| format!("{n}:{m:.3}")).collect::<Vec<_>>()
        ),
        start.elapsed(),
    );

    let start = Instant::now();
    let (cs, spread) = localization_spread(&[16, 32, 64]).expect("localization");
    rep.line(
        12,
        "kernel localization",
        spread <= 2.0,
        format!(
            "c(16,32,64) = {:?}, spread {spread:.3} (need ≤ 2)",
            cs.iter().map(|c| format!("{c:.4e}")).collect::<Vec<_>>()
        ),
        start.elapsed(),
    );

    from_suite(&mut rep, 13, "MZ bracketing", &["mz_bracket_factor"]);

    println!(
        "acceptance: {}/13 passed in {:.1?}{}",
        13 - rep.failed.len(),
        total.elapsed(),
        if rep.failed.is_empty() { String::new() } else { format!("; failed {:?}", rep.failed) }
    );
    if !rep.failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}

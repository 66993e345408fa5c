use proptest::prelude::*;
use sphmod::core_math::{Domain, FunctionHandle};
use sphmod::poly::Polynomial;
use sphmod::quadrature::{lp_norm, sphere_rule, WeightSpec};
use sphmod::rates::{ExampleId, ExampleSpec};
use sphmod::smoothness::{
    dij_derivative, euler_difference_norm, modulus, modulus_curve, ModulusRequest, NormQuadrature,
};

fn catalog_function(id: ExampleId) -> (ExampleSpec, FunctionHandle) {
    let spec = ExampleSpec::new(id);
    let f = spec.function().unwrap();
    (spec, f)
}

fn omega(spec: &ExampleSpec, f: &FunctionHandle, r: usize, ts: &[f64]) -> Vec<f64> {
    let req = ModulusRequest::new(f.clone(), r, spec.p, ts[0], spec.variant());
    modulus_curve(&req, ts, &NormQuadrature::Adapted(spec.quad)).unwrap()
}

#[test]
fn higher_order_moduli_are_dominated() {
    use ExampleId::*;
    let cases: &[(ExampleId, &[f64])] = &[
        (S1, &[0.125, 0.03125]),
        (S2, &[0.125, 0.03125]),
        (S3, &[0.125, 0.03125]),
        (S4, &[0.125, 0.03125]),
        (B2, &[0.0625]),
        (B4, &[0.0625]),
    ];
    for &(id, ts) in cases {
        let (spec, f) = catalog_function(id);
        let w1 = omega(&spec, &f, 1, ts);
        let w2 = omega(&spec, &f, 2, ts);
        let w3 = omega(&spec, &f, 3, ts);
        for k in 0..ts.len() {
            assert!(w2[k] <= 2.0 * w1[k] * (1.0 + 1e-9), "{id} t={}: ω2 {} ω1 {}", ts[k], w2[k], w1[k]);
            assert!(w3[k] <= 2.0 * w2[k] * (1.0 + 1e-9), "{id} t={}: ω3 {} ω2 {}", ts[k], w3[k], w2[k]);
        }
    }
}

#[test]
fn modulus_scaling_bound() {
    for id in [ExampleId::S2, ExampleId::S3, ExampleId::S4] {
        let (spec, f) = catalog_function(id);
        let t = 1.0 / 64.0;
        let w = omega(&spec, &f, 2, &[4.0 * t, 2.0 * t, t]);
        for (lam, wl) in [(4.0f64, w[0]), (2.0, w[1])] {
            let bound = (lam + 1.0).powi(2) * w[2] * 1.05;
            assert!(wl <= bound, "{id} λ={lam}: {wl} > {bound}");
        }
    }
}

#[test]
fn sup_over_steps_is_comparable_to_the_average() {
    let (spec, f) = catalog_function(ExampleId::S2);
    let quad = NormQuadrature::Adapted(spec.quad);
    let t = 0.125;
    let m = 48;
    let vals: Vec<f64> = (1..=m)
        .map(|k| euler_difference_norm(&f, 1, 2, t * k as f64 / m as f64, 2, 2.0, &quad).unwrap().powi(2))
        .collect();
    let sup = vals.iter().cloned().fold(0.0, f64::max);
    // trapezoid on [0, t] with the vanishing value at θ = 0
    let h = t / m as f64;
    let avg = (vals.iter().sum::<f64>() - 0.5 * vals[m - 1]) * h / t;
    let c = sup / avg;
    assert!(c.is_finite() && c < 10.0, "C = {c}");
}

#[test]
fn marchaud_constant_is_moderate() {
    let (spec, f) = catalog_function(ExampleId::S2);
    let us: Vec<f64> = (0..=24).map(|k| 2f64.powf(-(k as f64) / 3.0)).collect();
    let w2 = omega(&spec, &f, 2, &us);
    let w3 = omega(&spec, &f, 3, &us);
    let mut c: f64 = 0.0;
    for a in 3..us.len() {
        let t = us[a];
        // ∫_t^1 ω_3(u)/u³ du on the geometric grid
        let integral: f64 = (0..a)
            .map(|k| {
                let (u0, u1) = (us[k + 1], us[k]);
                0.5 * (w3[k + 1] / u0.powi(3) + w3[k] / u1.powi(3)) * (u1 - u0)
            })
            .sum();
        c = c.max(w2[a] / (t * t * integral));
    }
    assert!(c.is_finite() && c < 100.0, "c = {c}");
}

fn poly_on_sphere(n: usize, seed: u64) -> FunctionHandle {
    Polynomial::random(3, n, seed).to_handle(Domain::Sphere(3)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn differences_are_bounded(seed in 0u64..1000, n in 1usize..7, r in 1usize..4, theta in -3.0f64..3.0) {
        let f = poly_on_sphere(n, seed);
        let quad = NormQuadrature::Exact { degree: 2 * n + 2 };
        let rule = sphere_rule(3, 2 * n + 2).unwrap();
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            let d = euler_difference_norm(&f, i, j, theta, r, 2.0, &quad).unwrap();
            let base = lp_norm(&rule, &f, 2.0, &WeightSpec::Unit).unwrap();
            prop_assert!(d <= 2f64.powi(r as i32) * base * (1.0 + 1e-9));
        }
    }

    #[test]
    fn polynomial_differences_match_derivatives(seed in 0u64..1000, n in 2usize..9, r in 1usize..3) {
        let f = poly_on_sphere(n, seed);
        let quad = NormQuadrature::Exact { degree: 2 * n + 2 };
        let rule = sphere_rule(3, 2 * n + 2).unwrap();
        let theta = 1.0 / n as f64;
        for (i, j) in [(1, 2), (2, 3)] {
            let diff = euler_difference_norm(&f, i, j, theta, r, 2.0, &quad).unwrap();
            let der = rule.sum_map(|x| dij_derivative(&f, i, j, r, x).unwrap().powi(2)).sqrt();
            if der < 1e-10 {
                prop_assert!(diff < 1e-9);
                continue;
            }
            let ratio = diff / (theta.powi(r as i32) * der);
            let lo = (2.0 * 0.5f64.sin()).powi(r as i32);
            prop_assert!(ratio >= lo * (1.0 - 1e-9) && ratio <= 1.0 + 1e-9, "ratio {}", ratio);
        }
    }

    #[test]
    fn modulus_is_subadditive(sa in 0u64..100, sb in 0u64..100, t in 0.05f64..0.5) {
        let f = poly_on_sphere(4, sa);
        let g = poly_on_sphere(5, sb + 1000);
        let h = f.linear_combination(1.0, &g, 1.0).unwrap();
        let quad = NormQuadrature::Exact { degree: 12 };
        let w = |x: &FunctionHandle| {
            modulus(&ModulusRequest::new(x.clone(), 2, 2.0, t, sphmod::smoothness::Variant::Sphere), &quad).unwrap()
        };
        prop_assert!(w(&h) <= (w(&f) + w(&g)) * (1.0 + 1e-9));
    }
}

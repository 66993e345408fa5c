use proptest::prelude::*;
use sphmod::approximation::{
    best_approx_curve, dmu_decomposition_check, random_ball_points, random_sphere_points, rotated_difference,
    smoothed_projection, vn_operator, ApproxVariant, SpectralExpansion,
};
use sphmod::core_math::Domain;
use sphmod::poly::Polynomial;
use sphmod::quadrature::sphere_rule;
use sphmod::smoothness::{dij_derivative, NormQuadrature};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn vn_reproduces_polynomials(seed in 0u64..10_000, n in 1usize..9) {
        let f = Polynomial::random(3, n, seed).to_handle(Domain::Sphere(3)).unwrap();
        let v = vn_operator(&f, n, &sphere_rule(3, 3 * n).unwrap()).unwrap();
        for x in random_sphere_points(3, 8, seed) {
            prop_assert!((v.eval(&x) - f.eval(&x)).abs() < 1e-8);
        }
    }

    #[test]
    fn differences_commute_with_vn(seed in 0u64..10_000, r in 1usize..4, theta in -3.1f64..3.1, plane in 0usize..3) {
        let (i, j) = [(1, 2), (1, 3), (2, 3)][plane];
        let f = Polynomial::random(3, 7, seed).to_handle(Domain::Sphere(3)).unwrap();
        let rule = sphere_rule(3, 24).unwrap();
        let lhs = rotated_difference(&vn_operator(&f, 6, &rule).unwrap(), i, j, theta, r).unwrap();
        let rhs = vn_operator(&rotated_difference(&f, i, j, theta, r).unwrap(), 6, &rule).unwrap();
        for x in random_sphere_points(3, 4, seed + 1) {
            prop_assert!((lhs.eval(&x) - rhs.eval(&x)).abs() < 1e-8);
        }
    }

    #[test]
    fn dmu_decomposition_holds(seed in 0u64..10_000, d in 2usize..4, mu_idx in 0usize..3, n in 1usize..7) {
        let mu = [0.5, 1.0, 1.5][mu_idx];
        let g = Polynomial::random(d, n, seed).to_handle(Domain::Ball(d)).unwrap();
        let rep = dmu_decomposition_check(&g, mu, &random_ball_points(d, 4, 0.95, seed)).unwrap();
        prop_assert!(rep.residual < 1e-8, "{:?}", rep);
    }
}

#[test]
fn harmonic_components_are_eigenfunctions() {
    for d in [3usize, 4] {
        let f = Polynomial::random(d, 8, 77).to_handle(Domain::Sphere(d)).unwrap();
        let rule = sphere_rule(d, 18).unwrap();
        let exp = SpectralExpansion::new(&f, 8, &rule).unwrap();
        for (k, pk) in exp.components.iter().enumerate() {
            for x in random_sphere_points(d, 3, k as u64) {
                let mut lap = 0.0;
                for i in 1..=d {
                    for j in i + 1..=d {
                        lap += dij_derivative(pk, i, j, 2, &x).unwrap();
                    }
                }
                let ev = (k * (k + d - 2)) as f64;
                assert!((lap + ev * pk.eval(&x)).abs() < 1e-6, "d={d} k={k}");
            }
        }
    }
}

#[test]
fn best_approximation_is_nonincreasing_in_degree() {
    use sphmod::rates::{ExampleId, ExampleSpec};
    for id in [ExampleId::E2, ExampleId::E3, ExampleId::E5, ExampleId::E6] {
        let spec = ExampleSpec::new(id);
        let f = spec.function().unwrap();
        let ns: Vec<usize> = (1..=40).collect();
        let e = best_approx_curve(&f, &ns, 2.0, &NormQuadrature::Adapted(spec.quad), spec.approx_variant()).unwrap();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "{id}: {w:?}");
        }
    }
}

#[test]
fn smoothed_projection_reproduces_low_degree() {
    let f = Polynomial::random(2, 5, 3).to_handle(Domain::Ball(2)).unwrap();
    let g = smoothed_projection(&f, 5, ApproxVariant::Ball { mu: 0.5 }).unwrap();
    for x in random_ball_points(2, 10, 0.99, 5) {
        assert!((g.eval(&x) - f.eval(&x)).abs() < 1e-8);
    }
}

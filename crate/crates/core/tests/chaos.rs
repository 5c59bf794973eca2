use nalgebra::DMatrix;
use proptest::prelude::*;
use stein_indep::chaos::{
    brute_contraction_norm, build_gamma_kernels, contract1, contract1_raw, contraction_norm_closed_form, divergence_linear, dudv, dudv_identity,
    exact_cross_moment, gamma_pair_moments, gamma_pair_sample, isometry_inner, quadratic_form_second_moment, ChaosVariable, FirstChaosVector,
    SecondChaosKernel,
};

fn kernel(dim: usize, v: &[f64]) -> SecondChaosKernel {
    SecondChaosKernel::new(DMatrix::from_column_slice(dim, dim, &v[..dim * dim])).unwrap()
}

proptest! {
    #[test]
    fn divergence_of_linear_field_is_the_quadratic_form(v in prop::collection::vec(-2.0f64..2.0, 16), xi in prop::collection::vec(-3.0f64..3.0, 4)) {
        let k = kernel(4, &v);
        prop_assert!((divergence_linear(k.matrix(), &xi).unwrap() - k.eval(&xi).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dudv_pointwise(v in prop::collection::vec(-2.0f64..2.0, 18), xi in prop::collection::vec(-3.0f64..3.0, 3)) {
        let (k1, k2) = (kernel(3, &v[..9]), kernel(3, &v[9..]));
        let q = contract1(&k1, &k2).unwrap();
        let (l, r) = dudv_identity(&q, &k1, &k2, &xi).unwrap();
        prop_assert!((l - r).abs() < 1e-12 * (1.0 + l.abs()));
        prop_assert_eq!(dudv(&k1, &k2, &xi).unwrap(), (l, r));
        prop_assert!(q.is_symmetric());
    }

    #[test]
    fn inverse_l_inverts_the_generator(c0 in -1.0f64..1.0, c in prop::collection::vec(-1.0f64..1.0, 3), v in prop::collection::vec(-1.0f64..1.0, 9), xi in prop::collection::vec(-2.0f64..2.0, 3)) {
        let x = ChaosVariable::new(c0, FirstChaosVector::new(c).unwrap(), kernel(3, &v)).unwrap();
        // -L on chaos n multiplies by n, so (-L)^{-1} X has first part c and second part K/2.
        let y = x.inverse_l();
        let lx = x.eval(&xi).unwrap() - c0;
        let back = y.first.c.dot(&nalgebra::DVector::from_vec(xi.clone())) + 2.0 * y.second.eval(&xi).unwrap();
        prop_assert!((lx - back).abs() < 1e-12);
    }
}

#[test]
fn isometry_and_variance() {
    let k = SecondChaosKernel::diag(&[1.0, 2.0]);
    assert_eq!(isometry_inner(&k, &k).unwrap(), 10.0);
    let x = ChaosVariable::second_only(k.clone());
    assert_eq!(x.variance(), 10.0);
    assert_eq!(x.expectation(), 0.0);
    // E[(4 xi'K xi)^2] = 16 ((tr K)^2 + 2 |K|^2)
    let m4 = quadratic_form_second_moment(&k);
    assert_eq!(m4, 16.0 * (9.0 + 2.0 * 5.0));
}

#[test]
fn gamma_example_numbers() {
    let g = gamma_pair_moments(3, 3).unwrap();
    assert_eq!(g.cross_moment, 3.0);
    assert!((g.contraction_norm - 9.0 / 8.0).abs() < 1e-15);
    assert!((g.second_moment_dudv - 72.0).abs() < 1e-12);
    assert!((contraction_norm_closed_form(3, 3).unwrap() - 4.5).abs() < 1e-15);
    assert!((brute_contraction_norm(3, 3).unwrap() - 1.125).abs() < 1e-15);
}

#[test]
fn counting_formulas_match_matrices() {
    for n in 2..=15 {
        for m in 1..=n {
            let (a, b, dim) = build_gamma_kernels(n, m).unwrap();
            assert_eq!(dim, 2 * n - m);
            let g = gamma_pair_moments(n, m).unwrap();
            assert!((g.cross_moment - isometry_inner(&a, &b).unwrap()).abs() < 1e-12);
            assert!((exact_cross_moment(n, m).unwrap() - g.cross_moment).abs() < 1e-12);
            let raw = contract1_raw(&a, &b).unwrap();
            assert!((g.contraction_norm - raw.norm_squared()).abs() < 1e-12, "n={n} m={m}");
            let q = contract1(&a, &b).unwrap();
            assert!((g.second_moment_dudv - quadratic_form_second_moment(&q)).abs() < 1e-10);
        }
    }
    assert!(build_gamma_kernels(3, 4).is_err());
    assert!(build_gamma_kernels(1, 1).is_err());
}

#[test]
fn fast_gamma_path_matches_the_kernels() {
    let (n, m) = (9, 4);
    let (a, b, dim) = build_gamma_kernels(n, m).unwrap();
    let xi: Vec<f64> = (0..dim).map(|i| ((i as f64) * 0.77).sin() * 1.3).collect();
    let s = gamma_pair_sample(n, m, &xi).unwrap();
    assert!((s.u - a.eval(&xi).unwrap()).abs() < 1e-12);
    assert!((s.v - b.eval(&xi).unwrap()).abs() < 1e-12);
    assert!((2.0 * s.cross - dudv(&a, &b, &xi).unwrap().0).abs() < 1e-12);
    let x = ChaosVariable::second_only(a.clone());
    let du = x.malliavin_d(&xi).unwrap();
    let dl = x.d_inverse_l(&xi).unwrap();
    let inner: f64 = du.iter().zip(&dl).map(|(p, q)| p * q).sum();
    assert!((s.discrepancy - (2.0 * (s.u + 1.0) - inner)).abs() < 1e-12);
    assert!(gamma_pair_sample(n, m, &xi[1..]).is_err());
}

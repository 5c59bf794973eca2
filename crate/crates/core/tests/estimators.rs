use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stein_indep::chaos::{ChaosVariable, SecondChaosKernel};
use stein_indep::estimators::{
    check_gradient, cross_term, d_inverse_l, d_inverse_l_mehler, discrepancy_term, gamma_pair_terms, independence_bound, lognormal_b_integral,
    lognormal_cross, lognormal_limit_constant, lognormal_swapped_bound, uniform_cross_checked, uniform_cross_specialized, uniform_pair, Coordinate,
    ExpQuadratic, LognormalFunctional, MehlerQuadrature, OutsidePolicy, Path, SmoothFunctional,
};
use stein_indep::measure::{centered_gamma, gaussian_std, uniform01};
use stein_indep::quadrature::GaussLegendre;
use stein_indep::Error;

#[test]
fn gaussian_coordinate_has_zero_discrepancy() {
    // X = xi_0 is standard normal: a(X)/2 = 1 = <DX, D(-L)^{-1}X>.
    let x = Coordinate { dim: 3, index: 0 };
    let (d, outside) = discrepancy_term(&gaussian_std(), &x, &Path::default(), &OutsidePolicy::default(), 5000, 1).unwrap();
    assert_eq!(outside, 0);
    assert!(d.abs.estimate < 1e-12);
}

#[test]
fn independent_coordinates_have_zero_cross_term() {
    let x = Coordinate { dim: 4, index: 0 };
    let y = Coordinate { dim: 4, index: 3 };
    let t = cross_term(&x, &[&y], &Path::default(), 3000, 2).unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].abs.estimate, 0.0);
}

#[test]
fn mehler_matches_exact_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = ChaosVariable::second_only(SecondChaosKernel::diag(&[1.0, -2.0, 0.5]));
    let xi = [0.3, -1.1, 2.0];
    let exact = x.d_inverse_l(&xi).unwrap();
    let g = d_inverse_l_mehler(&x, &xi, &MehlerQuadrature::default(), &mut rng).unwrap();
    for (a, b) in g.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-10);
    }
    let auto = d_inverse_l(&x, &xi, &Path::default(), &mut rng).unwrap();
    assert_eq!(auto, exact);

    let (u, _) = uniform_pair(0.2).unwrap();
    let xi = [0.4, -0.2, 0.9, 0.1];
    let exact = u.exact_d_inverse_l(&xi).unwrap();
    let g = d_inverse_l_mehler(&u, &xi, &MehlerQuadrature::new(64, 512).unwrap(), &mut rng).unwrap();
    let err: f64 = g.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 5e-3, "{err}");
}

#[test]
fn gradients_are_consistent() {
    let (x, y) = uniform_pair(0.5).unwrap();
    check_gradient(&x, 20, 1, 1e-5).unwrap();
    check_gradient(&y, 20, 2, 1e-5).unwrap();
    check_gradient(&LognormalFunctional::new(8).unwrap(), 20, 3, 1e-5).unwrap();
    assert!(ExpQuadratic::new("bad", vec![1.0, 1.0], vec![1.0, 0.0]).is_err());
}

#[test]
fn quadrature_settings_are_validated() {
    assert!(MehlerQuadrature::new(2, 8).is_err());
    assert!(MehlerQuadrature::new(8, 0).is_err());
    assert_eq!(
        MehlerQuadrature::default().tightened(4).unwrap().nodes(),
        4 * MehlerQuadrature::DEFAULT_NODES
    );
}

#[test]
fn uniform_cross_term_is_linear_in_rho() {
    let a = uniform_cross_specialized(0.4, 20_000, 5).unwrap().abs;
    let b = uniform_cross_specialized(0.1, 20_000, 5).unwrap().abs;
    assert!((a.estimate / b.estimate / 4.0 - 1.0).abs() < 0.05);
    assert_eq!(uniform_cross_specialized(0.0, 1000, 5).unwrap().abs.estimate, 0.0);
    let c = uniform_cross_checked(0.3, 5000, 6, &MehlerQuadrature::new(16, 16).unwrap()).unwrap();
    assert!(c.sigmas < 5.0);
    assert!(uniform_pair(1.5).is_err());
}

#[test]
fn gamma_terms_match_exact_moments() {
    let t = gamma_pair_terms(10, 5, 40_000, 7).unwrap();
    let exact = 40.0 / 81.0;
    assert!((t.uv.estimate - exact).abs() < 4.0 * t.uv.std_error);
    assert!(t.total == 40_000 && t.outside <= t.total);
    let b = independence_bound(
        &centered_gamma(),
        0.5,
        &ChaosVariable::second_only(SecondChaosKernel::diag(&[1.0, 0.0])),
        &[],
        &Path::default(),
        &OutsidePolicy { limit_fraction: 1.0 },
        1000,
        1,
    )
    .unwrap();
    assert!(b.rhs_l1 >= 0.0 && b.cross.is_empty());
}

#[test]
fn outside_policy_is_enforced() {
    // xi_0^2 - 1 below -1 never happens, but a shifted quadratic leaves the uniform support almost surely.
    let x = ChaosVariable::second_only(SecondChaosKernel::diag(&[1.0]));
    let r = discrepancy_term(&uniform01(), &x, &Path::default(), &OutsidePolicy::default(), 2000, 1);
    assert!(matches!(r, Err(Error::OutsideSupport { .. })));
}

#[test]
fn lognormal_pieces() {
    let c0 = lognormal_limit_constant();
    assert!((c0 - (2.0 / std::f64::consts::PI).sqrt() * 0.5f64.exp()).abs() < 1e-12);
    let rule = GaussLegendre::new(64);
    // At z_n = 0 the integrand is smooth and positive.
    let i = lognormal_b_integral(100, 0.0, &rule).unwrap();
    assert!(i > 0.0 && i.is_finite());
    let f = LognormalFunctional::new(100).unwrap();
    assert_eq!(f.dim(), 100);
    let t = lognormal_cross(1000, 10_000, 2).unwrap();
    assert!(((2000f64).sqrt() * t.abs.estimate / c0 - 1.0).abs() < 0.1);
    let s1 = lognormal_swapped_bound(1000, 1, 5000, 2).unwrap();
    let s4 = lognormal_swapped_bound(1000, 4, 5000, 2).unwrap();
    assert!((s4.total.estimate / s1.total.estimate / 4.0 - 1.0).abs() < 0.1);
    assert!(lognormal_swapped_bound(10, 11, 100, 1).is_err());
}

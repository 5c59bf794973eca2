use proptest::prelude::*;
use stein_indep::transport::{assignment, rate_fit, w1_1d, w1_exact, w1_exact_with_cap, SampleCloud};
use stein_indep::Error;

fn brute_force(cost: &[f64], n: usize) -> f64 {
    fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == n {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                best = best.min(cost[row * n + j] + rec(cost, n, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    rec(cost, n, 0, &mut vec![false; n])
}

proptest! {
    #[test]
    fn assignment_is_optimal(n in 1usize..7, seed in prop::collection::vec(0.0f64..10.0, 36)) {
        let cost = &seed[..n * n];
        let (total, rows) = assignment(cost, n).unwrap();
        prop_assert!((total - brute_force(cost, n)).abs() < 1e-9);
        let mut cols = rows.clone();
        cols.sort_unstable();
        prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn one_dimensional_reduction(a in prop::collection::vec(-5.0f64..5.0, 1..40), shift in -2.0f64..2.0) {
        let b: Vec<f64> = a.iter().rev().map(|x| x * 0.5 + shift).collect();
        let (ca, cb) = (SampleCloud::new("a", 1, a).unwrap(), SampleCloud::new("b", 1, b).unwrap());
        prop_assert!((w1_exact(&ca, &cb).unwrap() - w1_1d(&ca, &cb).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn translation_gives_the_shift() {
    let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, (i as f64).sin()]).collect();
    let moved: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 0.3, p[1] - 0.4]).collect();
    let a = SampleCloud::from_points("a", &pts).unwrap();
    let b = SampleCloud::from_points("b", &moved).unwrap();
    assert!((w1_exact(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(w1_exact(&a, &a).unwrap(), 0.0);
}

#[test]
fn shape_errors_and_cap() {
    assert!(SampleCloud::new("a", 2, vec![1.0, 2.0, 3.0]).is_err());
    let a = SampleCloud::new("a", 1, vec![0.0; 10]).unwrap();
    let b = SampleCloud::new("b", 1, vec![0.0; 9]).unwrap();
    assert!(w1_exact(&a, &b).is_err());
    let c = SampleCloud::new("c", 1, vec![1.0; 10]).unwrap();
    assert!(matches!(w1_exact_with_cap(&a, &c, 5), Err(Error::AssignmentCap { n: 10, cap: 5 })));
}

#[test]
fn rate_fit_recovers_power_laws() {
    let pts: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 400.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.5))).collect();
    let f = rate_fit(&pts).unwrap();
    assert!((f.slope + 0.5).abs() < 1e-12);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(f.residual_rms < 1e-12);
    assert!(rate_fit(&pts[..2]).is_err());
    assert!(rate_fit(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)]).is_err());
}

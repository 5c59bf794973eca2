//! The invariant suite behind `selftest`, at reduced sample sizes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{
    build_gamma_kernels, contract1, contract1_raw, divergence_linear, dudv_identity, exact_cross_moment, gamma_pair_moments, isometry_inner,
    quadratic_form_second_moment, ChaosVariable, FirstChaosVector, SecondChaosKernel,
};
use crate::error::{Error, Result};
use crate::estimators::{
    check_gradient, cross_term, d_inverse_l_mehler, discrepancy_term, lognormal_limit_constant, uniform_cross_specialized, uniform_pair,
    LognormalFunctional, MehlerQuadrature, OutsidePolicy, Path as DPath,
};
use crate::mc::{fill_standard_normal, sample_mean, with_workers};
use crate::measure::{beta, centered_gamma, gaussian_std, uniform01, GridSpec, TargetMeasure};
use crate::report::Check;
use crate::stein::{family, verify_bounds, SteinSolver};
use crate::transport::{w1_1d, w1_exact, SampleCloud};

/// Deliberate defects used to confirm that the suite notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Use the raw product `K1 K2` as the contraction kernel.
    SkipSymmetrization,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip-symmetrization" => Ok(Fault::SkipSymmetrization),
            _ => Err(Error::Config(format!("unknown fault '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub quick: bool,
    pub fault: Option<Fault>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl SelftestReport {
    pub fn table(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!("{:<w$}  {}  {}\n", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail));
        }
        s
    }
}

struct Suite {
    seed: u64,
    quick: bool,
    fault: Option<Fault>,
    checks: Vec<Check>,
}

impl Suite {
    fn record(&mut self, name: &str, r: Result<(bool, String)>) {
        let c = match r {
            Ok((pass, detail)) => Check::new(name, pass, detail),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        };
        self.checks.push(c);
    }

    fn scale(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }

    fn contraction(&self, k1: &SecondChaosKernel, k2: &SecondChaosKernel) -> Result<SecondChaosKernel> {
        match self.fault {
            Some(Fault::SkipSymmetrization) => Ok(SecondChaosKernel::new_unchecked(contract1_raw(k1, k2)?)),
            None => contract1(k1, k2),
        }
    }
}

fn closed_form_diffusion(nodes: usize) -> Result<(bool, String)> {
    let grid = GridSpec::new(nodes);
    let mut worst = 0.0f64;
    let cases: [(TargetMeasure, fn(f64) -> f64); 3] = [
        (uniform01(), |x| x * (1.0 - x)),
        (gaussian_std(), |_| 2.0),
        (centered_gamma(), |x| 4.0 * (x + 1.0)),
    ];
    for (m, exact) in cases {
        for x in m.quantile_grid(&grid)? {
            worst = worst.max((m.diffusion_numeric(x)? - exact(x)).abs());
        }
    }
    Ok((worst < 1e-8, format!("max error {worst:.2e}")))
}

fn stein_residuals(points: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut res, mut rep) = (0.0f64, 0.0f64);
    for m in [uniform01(), gaussian_std(), centered_gamma(), beta(2.0, 3.0)?] {
        for h in family(&m)? {
            let s = SteinSolver::new(&m, h.as_ref());
            let y = vec![0.4; h.dim_y()];
            for _ in 0..points {
                let x = m.quantile(rng.gen_range(0.01..0.99))?;
                let p = s.point(x, &y)?;
                res = res.max(p.residual.abs());
                rep = rep.max((p.f - p.f_alt).abs());
            }
        }
    }
    Ok((res <= 1e-6 && rep <= 1e-7, format!("residual {res:.2e}, representations {rep:.2e}")))
}

fn bounds(nodes: usize) -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for m in [gaussian_std(), uniform01()] {
        let grid = GridSpec::new(nodes);
        let sup = m.sup_s(&grid)?.0;
        for h in family(&m)? {
            for b in verify_bounds(&m, h.as_ref(), &grid, Some(sup))? {
                ok &= b.pass;
                worst = worst.min(b.margin);
            }
        }
    }
    Ok((ok, format!("smallest margin {worst:.3e}")))
}

fn key_identity(trials: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut v = vec![0.0; 16];
        fill_standard_normal(&mut rng, &mut v);
        let k = SecondChaosKernel::new(nalgebra::DMatrix::from_vec(4, 4, v))?;
        let mut xi = vec![0.0; 4];
        fill_standard_normal(&mut rng, &mut xi);
        worst = worst.max((divergence_linear(k.matrix(), &xi)? - k.eval(&xi)?).abs());
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn dudv(s: &Suite, trials: usize, mc: usize) -> Result<(bool, String)> {
    let (n, m) = (10, 5);
    let (a, b, dim) = build_gamma_kernels(n, m)?;
    let q = s.contraction(&a, &b)?;
    let symmetric = q.is_symmetric();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut pointwise = 0.0f64;
    for _ in 0..trials {
        let mut xi = vec![0.0; dim];
        fill_standard_normal(&mut rng, &mut xi);
        let (l, r) = dudv_identity(&q, &a, &b, &xi)?;
        pointwise = pointwise.max((l - r).abs());
    }
    let formula = quadratic_form_second_moment(&q);
    let mo = sample_mean(mc, s.seed, |rng| {
        let mut xi = vec![0.0; dim];
        fill_standard_normal(rng, &mut xi);
        let (l, _) = dudv_identity(&q, &a, &b, &xi)?;
        Ok(l * l)
    })?;
    let z = (mo.mean - formula).abs() / mo.std_error();
    let ok = symmetric && pointwise <= 1e-12 && z <= 4.0;
    Ok((
        ok,
        format!(
            "symmetric kernel {symmetric}, pointwise {pointwise:.2e}, second moment {formula:.6} vs MC {:.6} ({z:.1} SE)",
            mo.mean
        ),
    ))
}

fn cross_moments(n_max: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for n in 2..=n_max {
        for m in 1..=n {
            let (a, b, _) = build_gamma_kernels(n, m)?;
            worst = worst.max((exact_cross_moment(n, m)? - isometry_inner(&a, &b)?).abs());
            let q = contract1_raw(&a, &b)?;
            worst = worst.max((gamma_pair_moments(n, m)?.contraction_norm - q.norm_squared()).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn mehler(seed: u64, points: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0.0; 25];
    fill_standard_normal(&mut rng, &mut v);
    let x = ChaosVariable::new(
        0.0,
        FirstChaosVector::new(vec![0.3; 5])?,
        SecondChaosKernel::new(nalgebra::DMatrix::from_vec(5, 5, v))?,
    )?;
    let coarse = MehlerQuadrature::default();
    let fine = coarse.tightened(4)?;
    let (mut e_coarse, mut e_fine) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let mut xi = vec![0.0; 5];
        fill_standard_normal(&mut rng, &mut xi);
        let exact = x.d_inverse_l(&xi)?;
        let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        for (q, e) in [(&coarse, &mut e_coarse), (&fine, &mut e_fine)] {
            let g = d_inverse_l_mehler(&x, &xi, q, &mut rng)?;
            let err = g.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;
            *e = e.max(err);
        }
    }
    let ok = e_coarse <= 1e-3 && e_fine <= (e_coarse / 4.0).max(1e-12);
    Ok((ok, format!("relative error {e_coarse:.2e} at default, {e_fine:.2e} at 4x")))
}

fn determinism(seed: u64, n: usize) -> Result<(bool, String)> {
    let run = || uniform_cross_specialized(0.3, n, seed);
    let a = with_workers(1, run)?;
    let b = with_workers(8, run)?;
    let same = a.abs.estimate.to_bits() == b.abs.estimate.to_bits() && a.abs.std_error.to_bits() == b.abs.std_error.to_bits();
    Ok((same, format!("estimate {:e}", a.abs.estimate)))
}

fn transport(seed: u64, cases: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(2..60);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        fill_standard_normal(&mut rng, &mut a);
        fill_standard_normal(&mut rng, &mut b);
        let (a, b) = (SampleCloud::new("a", 1, a)?, SampleCloud::new("b", 1, b)?);
        worst = worst.max((w1_exact(&a, &b)? - w1_1d(&a, &b)?).abs());
        worst = worst.max(w1_exact(&a, &a)?);
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn functionals(seed: u64) -> Result<(bool, String)> {
    let (x, y) = uniform_pair(0.3)?;
    check_gradient(&x, 50, seed, 1e-5)?;
    check_gradient(&y, 50, seed + 1, 1e-5)?;
    check_gradient(&LognormalFunctional::new(20)?, 50, seed + 2, 1e-5)?;
    Ok((true, "uniform pair and lognormal functional".into()))
}

fn uniform_discrepancy(seed: u64, n: usize) -> Result<(bool, String)> {
    let (x, _) = uniform_pair(0.0)?;
    let (d, _) = discrepancy_term(
        &uniform01(),
        &x,
        &DPath::Generic(MehlerQuadrature::new(16, 16)?),
        &OutsidePolicy::default(),
        n,
        seed,
    )?;
    Ok((d.abs.estimate <= 1e-2, format!("{:.3e}", d.abs.estimate)))
}

fn disjoint(seed: u64) -> Result<(bool, String)> {
    let x = ChaosVariable::second_only(SecondChaosKernel::diag(&[1.0, -1.0, 0.0, 0.0]));
    let y = ChaosVariable::second_only(SecondChaosKernel::diag(&[0.0, 0.0, 2.0, 1.0]));
    let t = cross_term(&x, &[&y], &DPath::default(), 2000, seed)?;
    Ok((t[0].abs.estimate == 0.0, format!("{:e}", t[0].abs.estimate)))
}

pub fn run(seed: u64, quick: bool, fault: Option<Fault>) -> SelftestReport {
    let mut s = Suite {
        seed,
        quick,
        fault,
        checks: Vec::new(),
    };
    s.record("closed-form diffusion coefficients", closed_form_diffusion(s.scale(201, 51)));
    s.record("Stein equation residual and representations", stein_residuals(s.scale(25, 5), seed));
    s.record("sup-norm bounds", bounds(s.scale(1000, 100)));
    s.record("divergence of linear fields", key_identity(s.scale(1000, 200), seed));
    s.record(
        "contraction identity for <DU, DV>",
        dudv(&s, s.scale(1000, 200), s.scale(100_000, 20_000)),
    );
    s.record("cross moments and contraction norms", cross_moments(s.scale(20, 10)));
    s.record("Mehler quadrature against exact chaos", mehler(seed, s.scale(50, 10)));
    s.record("determinism across worker counts", determinism(seed, s.scale(50_000, 10_000)));
    s.record("exact W1 against sorted coupling", transport(seed, s.scale(100, 20)));
    s.record("functional gradients", functionals(seed));
    s.record("uniform discrepancy vanishes", uniform_discrepancy(seed, s.scale(4000, 500)));
    s.record("disjoint blocks give zero cross term", disjoint(seed));
    let c0 = lognormal_limit_constant();
    let want = (2.0 / std::f64::consts::PI).sqrt() * 0.5f64.exp();
    s.record("lognormal limit constant", Ok(((c0 - want).abs() < 1e-10, format!("{c0}"))));
    let pass = s.checks.iter().all(|c| c.pass);
    SelftestReport {
        seed,
        quick,
        fault,
        checks: s.checks,
        pass,
    }
}

/// Run and write `selftest.json` into `out`.
pub fn run_to(seed: u64, quick: bool, fault: Option<Fault>, out: &Path) -> Result<SelftestReport> {
    let r = run(seed, quick, fault);
    std::fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(&r)?;
    text.push('\n');
    std::fs::write(out.join("selftest.json"), text)?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_catches_the_fault() {
        let r = run(3, true, None);
        assert!(r.pass, "{}", r.table());
        let bad = run(3, true, Some(Fault::SkipSymmetrization));
        assert!(!bad.pass);
        let failed: Vec<&str> = bad.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["contraction identity for <DU, DV>"]);
        assert!("nonsense".parse::<Fault>().is_err());
    }
}

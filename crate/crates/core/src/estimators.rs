//! Monte Carlo estimation of the discrepancy and cross terms of the
//! independence bound, with `D(-L)^{-1}` computed through the Mehler formula
//! or, where available, an exact expression.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{gamma_pair_sample, ChaosVariable};
use crate::error::{Error, Result};
use crate::mc::{fill_standard_normal, sample_moments_dyn, EstimatorResult, Moments};
use crate::measure::TargetMeasure;
use crate::quadrature::GaussLegendre;

/// A differentiable functional `g(xi)` of `M` standard Gaussian coordinates.
pub trait SmoothFunctional: Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn eval(&self, xi: &[f64]) -> f64;
    fn grad_into(&self, xi: &[f64], out: &mut [f64]);

    fn grad(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(xi, &mut out);
        out
    }

    /// `D(-L)^{-1} g` in closed form, when known.
    fn exact_d_inverse_l(&self, _xi: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(f: &dyn SmoothFunctional, xi: &[f64]) -> Result<()> {
    if f.dim() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: xi.len(),
        });
    }
    Ok(())
}

/// Compare `grad` with central differences at `points` Gaussian points.
/// High-dimensional functionals are checked on 16 random coordinates per point.
pub fn check_gradient(f: &dyn SmoothFunctional, points: usize, seed: u64, tol: f64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = f.dim();
    let mut xi = vec![0.0; dim];
    for _ in 0..points {
        fill_standard_normal(&mut rng, &mut xi);
        let v = f.eval(&xi);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} at a pilot point", f.name()),
                value: v,
            });
        }
        let g = f.grad(&xi);
        let coords: Vec<usize> = if dim <= 64 {
            (0..dim).collect()
        } else {
            sample_indices(&mut rng, dim, 16).into_vec()
        };
        for j in coords {
            let h = 1e-6 * xi[j].abs().max(1.0);
            let mut p = xi.clone();
            p[j] += h;
            let up = f.eval(&p);
            p[j] -= 2.0 * h;
            let down = f.eval(&p);
            let fd = (up - down) / (2.0 * h);
            if !((fd - g[j]).abs() <= tol * g[j].abs().max(1.0)) {
                return Err(Error::InvalidArgument(format!(
                    "gradient of {} disagrees with finite differences in coordinate {j}: {} vs {fd}",
                    f.name(),
                    g[j]
                )));
            }
        }
    }
    Ok(())
}

impl SmoothFunctional for ChaosVariable {
    fn name(&self) -> String {
        format!("chaos[{}]", self.dim())
    }

    fn dim(&self) -> usize {
        ChaosVariable::dim(self)
    }

    fn eval(&self, xi: &[f64]) -> f64 {
        ChaosVariable::eval(self, xi).unwrap_or(f64::NAN)
    }

    fn grad_into(&self, xi: &[f64], out: &mut [f64]) {
        match self.malliavin_d(xi) {
            Ok(d) => out.copy_from_slice(&d),
            Err(_) => out.fill(f64::NAN),
        }
    }

    fn exact_d_inverse_l(&self, xi: &[f64]) -> Option<Vec<f64>> {
        self.d_inverse_l(xi).ok()
    }
}

/// `W(e_index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coordinate {
    pub dim: usize,
    pub index: usize,
}

impl SmoothFunctional for Coordinate {
    fn name(&self) -> String {
        format!("W(e{})", self.index)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, xi: &[f64]) -> f64 {
        xi[self.index]
    }

    fn grad_into(&self, _xi: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.index] = 1.0;
    }

    fn exact_d_inverse_l(&self, xi: &[f64]) -> Option<Vec<f64>> {
        Some(self.grad(xi))
    }
}

/// `(1 - e^{-r2/2}) / (2 r2)`, continuous at `r2 = 0`.
fn radial_factor(r2: f64) -> f64 {
    if r2 < 1e-8 {
        0.25 - r2 / 16.0
    } else {
        -(-0.5 * r2).exp_m1() / (2.0 * r2)
    }
}

/// `exp(-(s1^2 + s2^2)/2)` with `s_k = d_k . xi` for orthonormal `d_1, d_2`;
/// uniformly distributed on `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpQuadratic {
    pub label: String,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl ExpQuadratic {
    pub fn new(label: impl Into<String>, d1: Vec<f64>, d2: Vec<f64>) -> Result<Self> {
        if d1.len() != d2.len() {
            return Err(Error::DimensionMismatch {
                expected: d1.len(),
                got: d2.len(),
            });
        }
        let (n1, n2, c) = (dot(&d1, &d1), dot(&d2, &d2), dot(&d1, &d2));
        if (n1 - 1.0).abs() > 1e-12 || (n2 - 1.0).abs() > 1e-12 || c.abs() > 1e-12 {
            return Err(Error::InvalidArgument("directions must be orthonormal".into()));
        }
        Ok(Self { label: label.into(), d1, d2 })
    }

    fn projections(&self, xi: &[f64]) -> (f64, f64) {
        (dot(&self.d1, xi), dot(&self.d2, xi))
    }
}

impl SmoothFunctional for ExpQuadratic {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn dim(&self) -> usize {
        self.d1.len()
    }

    fn eval(&self, xi: &[f64]) -> f64 {
        let (s1, s2) = self.projections(xi);
        (-0.5 * (s1 * s1 + s2 * s2)).exp()
    }

    fn grad_into(&self, xi: &[f64], out: &mut [f64]) {
        let (s1, s2) = self.projections(xi);
        let g = (-0.5 * (s1 * s1 + s2 * s2)).exp();
        for ((o, a), b) in out.iter_mut().zip(&self.d1).zip(&self.d2) {
            *o = -g * (s1 * a + s2 * b);
        }
    }

    /// `-(1 - g)/(2 r^2) (s1 d1 + s2 d2)`.
    fn exact_d_inverse_l(&self, xi: &[f64]) -> Option<Vec<f64>> {
        let (s1, s2) = self.projections(xi);
        let k = radial_factor(s1 * s1 + s2 * s2);
        Some(self.d1.iter().zip(&self.d2).map(|(a, b)| -k * (s1 * a + s2 * b)).collect())
    }
}

/// `Y_N = exp(-Z_N)`, `Z_N = sum (xi_i^2 - 1) / sqrt(2N)`.
#[derive(Clone, Debug)]
pub struct LognormalFunctional {
    pub n: usize,
    rule: GaussLegendre,
}

/// Nodes used for the inner `b` integral.
pub const LOGNORMAL_B_NODES: usize = 64;

impl LognormalFunctional {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("lognormal functional needs N >= 2, got {n}")));
        }
        Ok(Self {
            n,
            rule: GaussLegendre::unit(LOGNORMAL_B_NODES),
        })
    }

    pub fn z_n(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|x| x * x - 1.0).sum::<f64>() / (2.0 * self.n as f64).sqrt()
    }
}

impl SmoothFunctional for LognormalFunctional {
    fn name(&self) -> String {
        format!("lognormal Y_{}", self.n)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, xi: &[f64]) -> f64 {
        (-self.z_n(xi)).exp()
    }

    fn grad_into(&self, xi: &[f64], out: &mut [f64]) {
        let y = self.eval(xi);
        let c = -2.0 / (2.0 * self.n as f64).sqrt() * y;
        for (o, x) in out.iter_mut().zip(xi) {
            *o = c * x;
        }
    }

    /// Coordinate `k` is `-xi_k I(Z_N) / sqrt(2N)`.
    fn exact_d_inverse_l(&self, xi: &[f64]) -> Option<Vec<f64>> {
        let i = lognormal_b_integral(self.n, self.z_n(xi), &self.rule).ok()?;
        let c = -i / (2.0 * self.n as f64).sqrt();
        Some(xi.iter().map(|x| c * x).collect())
    }
}

/// `I = int_0^1 exp(E(b)) db` with
/// `E(b) = N/s - (N/2 + 1) ln(1 + c(1-b)) - b (Z_N + N/s) / (1 + c(1-b))`,
/// `s = sqrt(2N)`, `c = 2/s`. The exponent stays `O(1)` although its parts grow like `sqrt N`.
pub fn lognormal_b_integral(n: usize, z_n: f64, rule: &GaussLegendre) -> Result<f64> {
    let nf = n as f64;
    let s = (2.0 * nf).sqrt();
    let c = 2.0 / s;
    let lead = nf / s;
    let v = rule.integrate(
        |b| {
            let q = c * (1.0 - b);
            let e = lead - (0.5 * nf + 1.0) * q.ln_1p() - b * (z_n + lead) / (1.0 + q);
            e.exp()
        },
        0.0,
        1.0,
    );
    if !v.is_finite() {
        return Err(Error::NonFinite {
            context: format!("lognormal b-integral at N={n}, Z_N={z_n}"),
            value: v,
        });
    }
    Ok(v)
}

/// Outer Gauss-Legendre rule over `alpha in (0, 1)` and the number of inner
/// Gaussian copies. Each inner copy `xi'` is used together with `-xi'`.
#[derive(Clone, Debug)]
pub struct MehlerQuadrature {
    pub rule: GaussLegendre,
    pub inner: usize,
}

impl MehlerQuadrature {
    pub const DEFAULT_NODES: usize = 32;
    pub const DEFAULT_INNER: usize = 64;

    pub fn new(nodes: usize, inner: usize) -> Result<Self> {
        if nodes < 4 || inner < 1 {
            return Err(Error::InvalidArgument(format!(
                "Mehler quadrature needs K_q >= 4 and R >= 1, got {nodes}, {inner}"
            )));
        }
        Ok(Self {
            rule: GaussLegendre::unit(nodes),
            inner,
        })
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    /// Both `K_q` and `R` multiplied by `factor`.
    pub fn tightened(&self, factor: usize) -> Result<Self> {
        Self::new(self.nodes() * factor, self.inner * factor)
    }

    pub fn describe(&self) -> String {
        format!("mehler K_q={} R={}", self.nodes(), self.inner)
    }
}

impl Default for MehlerQuadrature {
    fn default() -> Self {
        Self::new(Self::DEFAULT_NODES, Self::DEFAULT_INNER).expect("default Mehler quadrature")
    }
}

/// `E'[grad g(alpha xi + sqrt(1 - alpha^2) xi')]` over `R` antithetic pairs of `xi'`.
pub fn ou_grad(f: &dyn SmoothFunctional, xi: &[f64], alpha: f64, inner: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    check_dim(f, xi)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let dim = xi.len();
    if alpha == 1.0 {
        return finite_grad(f, xi);
    }
    let s = (1.0 - alpha * alpha).sqrt();
    let mut noise = vec![0.0; dim];
    let mut point = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    for _ in 0..inner.max(1) {
        fill_standard_normal(rng, &mut noise);
        for sign in [1.0, -1.0] {
            for k in 0..dim {
                point[k] = alpha * xi[k] + sign * s * noise[k];
            }
            f.grad_into(&point, &mut g);
            for k in 0..dim {
                acc[k] += g[k];
            }
        }
    }
    let scale = 1.0 / (2 * inner.max(1)) as f64;
    for a in acc.iter_mut() {
        *a *= scale;
        if !a.is_finite() {
            return Err(Error::NonFinite {
                context: format!("Mehler gradient of {} at alpha={alpha}, xi={xi:?}", f.name()),
                value: *a,
            });
        }
    }
    Ok(acc)
}

fn finite_grad(f: &dyn SmoothFunctional, xi: &[f64]) -> Result<Vec<f64>> {
    let g = f.grad(xi);
    if let Some(v) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("gradient of {} at {xi:?}", f.name()),
            value: *v,
        });
    }
    Ok(g)
}

/// `int_0^1 E'[grad g(alpha xi + sqrt(1 - alpha^2) xi')] d alpha` by quadrature.
pub fn d_inverse_l_mehler(f: &dyn SmoothFunctional, xi: &[f64], quad: &MehlerQuadrature, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    check_dim(f, xi)?;
    let mut out = vec![0.0; xi.len()];
    for (&alpha, &w) in quad.rule.nodes.iter().zip(&quad.rule.weights) {
        let g = ou_grad(f, xi, alpha, quad.inner, rng)?;
        for (o, v) in out.iter_mut().zip(g) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// How `D(-L)^{-1}` is obtained.
#[derive(Clone, Debug)]
pub enum Path {
    /// Exact expression when the functional has one, otherwise Mehler quadrature.
    Auto(MehlerQuadrature),
    /// Always Mehler quadrature.
    Generic(MehlerQuadrature),
}

impl Default for Path {
    fn default() -> Self {
        Path::Auto(MehlerQuadrature::default())
    }
}

impl Path {
    fn describe(&self) -> String {
        match self {
            Path::Auto(q) => format!("auto ({})", q.describe()),
            Path::Generic(q) => format!("generic ({})", q.describe()),
        }
    }
}

pub fn d_inverse_l(f: &dyn SmoothFunctional, xi: &[f64], path: &Path, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    check_dim(f, xi)?;
    match path {
        Path::Auto(q) => match f.exact_d_inverse_l(xi) {
            Some(v) => Ok(v),
            None => d_inverse_l_mehler(f, xi, q, rng),
        },
        Path::Generic(q) => d_inverse_l_mehler(f, xi, q, rng),
    }
}

/// What to do with samples of `X` outside `(l, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutsidePolicy {
    /// Largest tolerated fraction of outside samples.
    pub limit_fraction: f64,
}

impl Default for OutsidePolicy {
    fn default() -> Self {
        Self { limit_fraction: 1e-3 }
    }
}

/// `E|T|` and `E[T^2]` for one bound term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub abs: EstimatorResult,
    pub sq: EstimatorResult,
}

impl TermEstimate {
    pub fn from_moments(abs: &Moments, sq: &Moments, seed: u64, config: &str) -> Self {
        Self {
            abs: EstimatorResult::from_moments(abs, seed, config),
            sq: EstimatorResult::from_moments(sq, seed, config),
        }
    }

    pub fn exact_zero(config: &str) -> Self {
        Self {
            abs: EstimatorResult::exact(0.0, config),
            sq: EstimatorResult::exact(0.0, config),
        }
    }

    /// `E[T^2]^{1/2}` and its delta-method standard error.
    pub fn rms(&self) -> (f64, f64) {
        let r = self.sq.estimate.max(0.0).sqrt();
        let se = if r > 0.0 { self.sq.std_error / (2.0 * r) } else { 0.0 };
        (r, se)
    }
}

/// The two flavours of the bound with their constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceBound {
    pub measure: String,
    pub sup_s: f64,
    pub cross_constant: f64,
    pub discrepancy: TermEstimate,
    pub cross: Vec<TermEstimate>,
    pub outside: u64,
    pub total: u64,
    pub rhs_l1: f64,
    pub rhs_l1_se: f64,
    pub rhs_l2: f64,
    pub rhs_l2_se: f64,
}

impl IndependenceBound {
    pub fn assemble(
        measure: &str,
        sup_s: f64,
        cross_constant: f64,
        discrepancy: TermEstimate,
        cross: Vec<TermEstimate>,
        outside: u64,
        total: u64,
    ) -> Self {
        let mut l1 = sup_s * discrepancy.abs.estimate;
        let mut l1_var = (sup_s * discrepancy.abs.std_error).powi(2);
        let (r, r_se) = discrepancy.rms();
        let mut l2 = sup_s * r;
        let mut l2_var = (sup_s * r_se).powi(2);
        for c in &cross {
            l1 += cross_constant * c.abs.estimate;
            l1_var += (cross_constant * c.abs.std_error).powi(2);
            let (r, r_se) = c.rms();
            l2 += cross_constant * r;
            l2_var += (cross_constant * r_se).powi(2);
        }
        Self {
            measure: measure.into(),
            sup_s,
            cross_constant,
            discrepancy,
            cross,
            outside,
            total,
            rhs_l1: l1,
            rhs_l1_se: l1_var.sqrt(),
            rhs_l2: l2,
            rhs_l2_se: l2_var.sqrt(),
        }
    }

    pub fn outside_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.outside as f64 / self.total as f64
        }
    }
}

fn diffusion_at(measure: &TargetMeasure, x: f64) -> Result<(f64, bool)> {
    if measure.support.is_interior(x) {
        Ok((measure.diffusion_coefficient(x)?, false))
    } else {
        Ok((measure.diffusion_extended(x).unwrap_or(0.0), true))
    }
}

struct Terms {
    disc: Option<TermEstimate>,
    cross: Vec<TermEstimate>,
    outside: u64,
    total: u64,
}

fn run_terms(
    measure: Option<&TargetMeasure>,
    x: &dyn SmoothFunctional,
    ys: &[&dyn SmoothFunctional],
    path: &Path,
    policy: &OutsidePolicy,
    n: usize,
    seed: u64,
) -> Result<Terms> {
    for y in ys {
        if y.dim() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: y.dim(),
            });
        }
    }
    let dim = x.dim();
    let has_disc = measure.is_some();
    let k = 2 * ys.len() + if has_disc { 3 } else { 0 };
    let moments = sample_moments_dyn(n, seed, k, |rng, out| {
        let mut xi = vec![0.0; dim];
        fill_standard_normal(rng, &mut xi);
        let dinv = d_inverse_l(x, &xi, path, rng)?;
        let mut at = 0;
        if let Some(m) = measure {
            let xv = x.eval(&xi);
            let (a, outside) = diffusion_at(m, xv)?;
            let t = 0.5 * a - dot(&dinv, &finite_grad(x, &xi)?);
            out[0] = t.abs();
            out[1] = t * t;
            out[2] = if outside { 1.0 } else { 0.0 };
            at = 3;
        }
        for y in ys {
            let ip = dot(&dinv, &finite_grad(*y, &xi)?);
            out[at] = ip.abs();
            out[at + 1] = ip * ip;
            at += 2;
        }
        Ok(())
    })?;
    let cfg = path.describe();
    let mut at = 0;
    let mut disc = None;
    let mut outside = 0;
    if has_disc {
        disc = Some(TermEstimate::from_moments(
            &moments[0],
            &moments[1],
            seed,
            &format!("discrepancy {} {cfg}", x.name()),
        ));
        outside = (moments[2].mean * moments[2].n as f64).round() as u64;
        at = 3;
        let frac = outside as f64 / n.max(1) as f64;
        if frac > policy.limit_fraction {
            return Err(Error::OutsideSupport {
                outside: outside as usize,
                total: n,
                limit_fraction: policy.limit_fraction,
            });
        }
    }
    let mut cross = Vec::with_capacity(ys.len());
    for y in ys {
        cross.push(TermEstimate::from_moments(
            &moments[at],
            &moments[at + 1],
            seed,
            &format!("cross {} {} {cfg}", x.name(), y.name()),
        ));
        at += 2;
    }
    Ok(Terms {
        disc,
        cross,
        outside,
        total: n as u64,
    })
}

/// `E|a(X)/2 - <D(-L)^{-1} X, D X>|` and its square, with the outside count.
pub fn discrepancy_term(
    measure: &TargetMeasure,
    x: &dyn SmoothFunctional,
    path: &Path,
    policy: &OutsidePolicy,
    n: usize,
    seed: u64,
) -> Result<(TermEstimate, u64)> {
    let t = run_terms(Some(measure), x, &[], path, policy, n, seed)?;
    Ok((t.disc.expect("discrepancy requested"), t.outside))
}

/// `E|<D(-L)^{-1} X, D Y_j>|` and its square for every `Y_j`.
pub fn cross_term(x: &dyn SmoothFunctional, ys: &[&dyn SmoothFunctional], path: &Path, n: usize, seed: u64) -> Result<Vec<TermEstimate>> {
    Ok(run_terms(None, x, ys, path, &OutsidePolicy::default(), n, seed)?.cross)
}

/// Both terms from one sample and the assembled right-hand sides.
#[allow(clippy::too_many_arguments)]
pub fn independence_bound(
    measure: &TargetMeasure,
    sup_s: f64,
    x: &dyn SmoothFunctional,
    ys: &[&dyn SmoothFunctional],
    path: &Path,
    policy: &OutsidePolicy,
    n: usize,
    seed: u64,
) -> Result<IndependenceBound> {
    let c = measure.cross_constant()?;
    let t = run_terms(Some(measure), x, ys, path, policy, n, seed)?;
    Ok(IndependenceBound::assemble(
        measure.name(),
        sup_s,
        c,
        t.disc.expect("discrepancy requested"),
        t.cross,
        t.outside,
        t.total,
    ))
}

/// Monte Carlo summary of the Gamma block pair `U_N = I_2(a_N)`, `V_N = I_2(b_N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTerms {
    pub n: usize,
    pub m: usize,
    pub discrepancy: TermEstimate,
    pub cross: TermEstimate,
    /// Samples with `U_N <= -1`.
    pub outside: u64,
    pub total: u64,
    /// `E[U_N V_N]`.
    pub uv: EstimatorResult,
    /// `E[<D U_N, D V_N>^2]`.
    pub dudv_sq: EstimatorResult,
}

/// The Gamma pair by its `O(N)` structured evaluation. `a(x) = 4(x + 1)` is used
/// on the whole line, so samples with `U_N <= -1` are kept and counted.
pub fn gamma_pair_terms(n: usize, m: usize, samples: usize, seed: u64) -> Result<GammaTerms> {
    gamma_pair_sample(n, m, &vec![0.0; 2 * n - m])?;
    let dim = 2 * n - m;
    let mo = sample_moments_dyn(samples, seed, 7, |rng, out| {
        let mut xi = vec![0.0; dim];
        fill_standard_normal(rng, &mut xi);
        let s = gamma_pair_sample(n, m, &xi)?;
        out[0] = s.discrepancy.abs();
        out[1] = s.discrepancy * s.discrepancy;
        out[2] = s.cross.abs();
        out[3] = s.cross * s.cross;
        out[4] = if s.u <= -1.0 { 1.0 } else { 0.0 };
        out[5] = s.u * s.v;
        out[6] = 4.0 * s.cross * s.cross;
        Ok(())
    })?;
    let cfg = format!("gamma pair N={n} m={m}");
    Ok(GammaTerms {
        n,
        m,
        discrepancy: TermEstimate::from_moments(&mo[0], &mo[1], seed, &cfg),
        cross: TermEstimate::from_moments(&mo[2], &mo[3], seed, &cfg),
        outside: (mo[4].mean * mo[4].n as f64).round() as u64,
        total: samples as u64,
        uv: EstimatorResult::from_moments(&mo[5], seed, &cfg),
        dudv_sq: EstimatorResult::from_moments(&mo[6], seed, &cfg),
    })
}

/// `X = exp(-(U^2 + V^2)/2)` and `Y = exp(-(U_N^2 + xi^2)/2)` on coordinates
/// `(U, V, zeta, xi)` with `U_N = rho U + sqrt(1 - rho^2) zeta`.
pub fn uniform_pair(rho: f64) -> Result<(ExpQuadratic, ExpQuadratic)> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [-1, 1], got {rho}")));
    }
    let c = (1.0 - rho * rho).sqrt();
    let x = ExpQuadratic::new("uniform X", vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0])?;
    let y = ExpQuadratic::new(format!("uniform Y rho={rho}"), vec![rho, 0.0, c, 0.0], vec![0.0, 0.0, 0.0, 1.0])?;
    Ok((x, y))
}

/// `E|rho Y U_N U G(U, V)|` with `G = (1 - X) / (2 (U^2 + V^2))`.
pub fn uniform_cross_specialized(rho: f64, n: usize, seed: u64) -> Result<TermEstimate> {
    uniform_pair(rho)?;
    let c = (1.0 - rho * rho).sqrt();
    let mo = sample_moments_dyn(n, seed, 2, |rng, out| {
        let mut xi = [0.0; 4];
        fill_standard_normal(rng, &mut xi);
        let [u, v, zeta, w] = xi;
        let un = rho * u + c * zeta;
        let y = (-0.5 * (un * un + w * w)).exp();
        let ip = rho * y * un * u * radial_factor(u * u + v * v);
        out[0] = ip.abs();
        out[1] = ip * ip;
        Ok(())
    })?;
    Ok(TermEstimate::from_moments(
        &mo[0],
        &mo[1],
        seed,
        &format!("uniform cross specialized rho={rho}"),
    ))
}

/// Specialized and generic estimates of the uniform cross term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformCrossCheck {
    pub rho: f64,
    pub specialized: TermEstimate,
    pub generic: TermEstimate,
    pub sigmas: f64,
}

/// Seed offset separating the generic cross-check stream from the specialized one.
pub const CHECK_SEED_OFFSET: u64 = 0x5eed;

/// Run both estimators on independent streams; more than 5 standard errors apart is an error.
pub fn uniform_cross_checked(rho: f64, n: usize, seed: u64, quad: &MehlerQuadrature) -> Result<UniformCrossCheck> {
    let specialized = uniform_cross_specialized(rho, n, seed)?;
    let (x, y) = uniform_pair(rho)?;
    let generic = cross_term(&x, &[&y], &Path::Generic(quad.clone()), n, seed.wrapping_add(CHECK_SEED_OFFSET))?.remove(0);
    let sigmas = specialized.abs.sigmas_from(&generic.abs);
    if sigmas > 5.0 {
        return Err(Error::EstimatorDisagreement {
            a: specialized.abs.estimate,
            b: generic.abs.estimate,
            sigmas,
        });
    }
    Ok(UniformCrossCheck {
        rho,
        specialized,
        generic,
        sigmas,
    })
}

/// `E|<D(-L)^{-1} Y_N, h_1>| = E[|W_1| I(Z_N)] / sqrt(2N)`.
pub fn lognormal_cross(n: usize, samples: usize, seed: u64) -> Result<TermEstimate> {
    let f = LognormalFunctional::new(n)?;
    let scale = 1.0 / (2.0 * n as f64).sqrt();
    let mo = sample_moments_dyn(samples, seed, 2, |rng, out| {
        let mut w = vec![0.0; n];
        fill_standard_normal(rng, &mut w);
        let i = lognormal_b_integral(n, f.z_n(&w), &f.rule)?;
        let ip = scale * w[0] * i;
        out[0] = ip.abs();
        out[1] = ip * ip;
        Ok(())
    })?;
    Ok(TermEstimate::from_moments(&mo[0], &mo[1], seed, &format!("lognormal cross N={n}")))
}

/// `E|Z| int_0^1 E[e^{-bZ}] e^{b(1-b) + (1-b)^2/2} db` by 64-node quadrature.
pub fn lognormal_limit_constant() -> f64 {
    let e_abs = (2.0 / std::f64::consts::PI).sqrt();
    let rule = GaussLegendre::unit(64);
    e_abs * rule.integrate(|b| (0.5 * b * b + b * (1.0 - b) + 0.5 * (1.0 - b) * (1.0 - b)).exp(), 0.0, 1.0)
}

/// The role-swapped alternative: per-coordinate `E[|W_1| Y_N]` and
/// `E[(2/sqrt(2N)) sum_{k < I} |W_k| Y_N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwappedBound {
    pub n: usize,
    pub i_size: usize,
    pub per_term: EstimatorResult,
    pub total: EstimatorResult,
}

pub fn lognormal_swapped_bound(n: usize, i_size: usize, samples: usize, seed: u64) -> Result<SwappedBound> {
    if i_size > n {
        return Err(Error::InvalidArgument(format!("I_size={i_size} exceeds N={n}")));
    }
    let f = LognormalFunctional::new(n)?;
    let scale = 2.0 / (2.0 * n as f64).sqrt();
    let mo = sample_moments_dyn(samples, seed, 2, |rng, out| {
        let mut w = vec![0.0; n];
        fill_standard_normal(rng, &mut w);
        let y = f.eval(&w);
        out[0] = w[0].abs() * y;
        out[1] = scale * y * w[..i_size].iter().map(|x| x.abs()).sum::<f64>();
        Ok(())
    })?;
    let cfg = format!("lognormal swapped N={n} I={i_size}");
    Ok(SwappedBound {
        n,
        i_size,
        per_term: EstimatorResult::from_moments(&mo[0], seed, &cfg),
        total: EstimatorResult::from_moments(&mo[1], seed, &cfg),
    })
}

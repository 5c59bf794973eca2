//! Target measures on an interval and the scalar fields derived from them.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::{erf, erf_inv, erfc, erfc_inv};

use crate::error::{ensure_finite, Error, Result};
use crate::expr::Expr;
use crate::quadrature::{integrate, QuadratureConfig};

/// Densities below this value are treated as underflow.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Default quantile clipping for evaluation grids.
pub const DEFAULT_Q_MIN: f64 = 1e-4;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SupportInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid support ({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn is_interior(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    /// A finite interior point used to split two-sided integrals.
    pub fn anchor(&self) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => 0.5 * (self.lower + self.upper),
            (true, false) => self.lower + 1.0,
            (false, true) => self.upper - 1.0,
            (false, false) => 0.0,
        }
    }
}

/// A density on an interval, with optional closed-form companions.
///
/// `pdf_from_lower(d)` and `pdf_from_upper(d)` evaluate `p(l + d)` and `p(u - d)`
/// without forming `l + d`; they matter when `p` is singular at a finite endpoint.
#[derive(Clone)]
pub struct DensitySpec {
    pub name: String,
    pub pdf: ScalarFn,
    pub cdf: Option<ScalarFn>,
    pub sf: Option<ScalarFn>,
    pub quantile: Option<ScalarFn>,
    pub mean: Option<f64>,
    pub diffusion: Option<ScalarFn>,
    pub pdf_from_lower: Option<ScalarFn>,
    pub pdf_from_upper: Option<ScalarFn>,
}

impl fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensitySpec")
            .field("name", &self.name)
            .field("cdf", &self.cdf.is_some())
            .field("quantile", &self.quantile.is_some())
            .field("mean", &self.mean)
            .field("diffusion", &self.diffusion.is_some())
            .finish()
    }
}

impl DensitySpec {
    pub fn new(name: impl Into<String>, pdf: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            pdf: Arc::new(pdf),
            cdf: None,
            sf: None,
            quantile: None,
            mean: None,
            diffusion: None,
            pdf_from_lower: None,
            pdf_from_upper: None,
        }
    }

    pub fn with_cdf(mut self, cdf: impl Fn(f64) -> f64 + Send + Sync + 'static, sf: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.cdf = Some(Arc::new(cdf));
        self.sf = Some(Arc::new(sf));
        self
    }

    pub fn with_quantile(mut self, q: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.quantile = Some(Arc::new(q));
        self
    }

    pub fn with_mean(mut self, m: f64) -> Self {
        self.mean = Some(m);
        self
    }

    pub fn with_diffusion(mut self, a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(a));
        self
    }

    pub fn with_endpoint_forms(mut self, from_lower: Option<ScalarFn>, from_upper: Option<ScalarFn>) -> Self {
        self.pdf_from_lower = from_lower;
        self.pdf_from_upper = from_upper;
        self
    }

    /// Multiply the density by a constant (used to exercise the mass check).
    pub fn scaled(&self, c: f64) -> Self {
        let pdf = self.pdf.clone();
        let lo = self.pdf_from_lower.clone();
        let hi = self.pdf_from_upper.clone();
        Self {
            name: format!("{}*{c}", self.name),
            pdf: Arc::new(move |x| c * pdf(x)),
            cdf: None,
            sf: None,
            quantile: None,
            mean: None,
            diffusion: None,
            pdf_from_lower: lo.map(|f| Arc::new(move |d| c * f(d)) as ScalarFn),
            pdf_from_upper: hi.map(|f| Arc::new(move |d| c * f(d)) as ScalarFn),
        }
    }
}

fn eval_lower(spec: &DensitySpec, lower: f64, d: f64) -> f64 {
    match &spec.pdf_from_lower {
        Some(f) => f(d),
        None => (spec.pdf)(lower + d),
    }
}

fn eval_upper(spec: &DensitySpec, upper: f64, d: f64) -> f64 {
    match &spec.pdf_from_upper {
        Some(f) => f(d),
        None => (spec.pdf)(upper - d),
    }
}

/// `int_l^x g(t, x - ... ) dt` style integral with the density supplied.
///
/// `g(t, d, p)` receives the point, its distance to the anchoring endpoint
/// (infinite for an infinite endpoint) and the density there.
fn lower_integral<G>(spec: &DensitySpec, support: &SupportInterval, cfg: &QuadratureConfig, x: f64, g: G) -> Result<f64>
where
    G: Fn(f64, f64, f64) -> f64,
{
    let l = support.lower;
    if x <= l {
        return Ok(0.0);
    }
    if l.is_finite() {
        // t = l + s^2 removes inverse square-root singularities at l
        let s_max = (x - l).sqrt();
        let r = integrate(
            |s: f64| {
                let d = s * s;
                let p = eval_lower(spec, l, d);
                if p == 0.0 || s == 0.0 {
                    return 0.0;
                }
                2.0 * s * g(l + d, d, p)
            },
            0.0,
            s_max,
            cfg,
        )?;
        Ok(r.value)
    } else {
        let r = integrate(
            |t: f64| {
                let p = (spec.pdf)(t);
                if p == 0.0 {
                    0.0
                } else {
                    g(t, f64::INFINITY, p)
                }
            },
            f64::NEG_INFINITY,
            x,
            cfg,
        )?;
        Ok(r.value)
    }
}

fn upper_integral<G>(spec: &DensitySpec, support: &SupportInterval, cfg: &QuadratureConfig, x: f64, g: G) -> Result<f64>
where
    G: Fn(f64, f64, f64) -> f64,
{
    let u = support.upper;
    if x >= u {
        return Ok(0.0);
    }
    if u.is_finite() {
        let s_max = (u - x).sqrt();
        let r = integrate(
            |s: f64| {
                let d = s * s;
                let p = eval_upper(spec, u, d);
                if p == 0.0 || s == 0.0 {
                    return 0.0;
                }
                2.0 * s * g(u - d, d, p)
            },
            0.0,
            s_max,
            cfg,
        )?;
        Ok(r.value)
    } else {
        let r = integrate(
            |t: f64| {
                let p = (spec.pdf)(t);
                if p == 0.0 {
                    0.0
                } else {
                    g(t, f64::INFINITY, p)
                }
            },
            x,
            f64::INFINITY,
            cfg,
        )?;
        Ok(r.value)
    }
}

/// Total mass of `density` over `support`.
pub fn normalize_check(density: &DensitySpec, support: &SupportInterval, cfg: &QuadratureConfig) -> Result<f64> {
    let c = support.anchor();
    let left = lower_integral(density, support, cfg, c, |_, _, p| p)?;
    let right = upper_integral(density, support, cfg, c, |_, _, p| p)?;
    ensure_finite("total mass", left + right)
}

/// Quantile levels `k / (K + 1)` clipped to `[q_min, 1 - q_min]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nodes: usize,
    pub q_min: f64,
}

impl GridSpec {
    pub fn new(nodes: usize) -> Self {
        Self { nodes, q_min: DEFAULT_Q_MIN }
    }

    pub fn levels(&self) -> Vec<f64> {
        let k1 = (self.nodes + 1) as f64;
        (1..=self.nodes).map(|k| (k as f64 / k1).clamp(self.q_min, 1.0 - self.q_min)).collect()
    }

    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes + 1,
            q_min: self.q_min,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TargetMeasure {
    pub support: SupportInterval,
    pub density: DensitySpec,
    pub mean: f64,
    pub median: f64,
    pub quad: QuadratureConfig,
    pub q_min: f64,
}

impl TargetMeasure {
    /// Build a measure, checking that the density has unit mass to within `1e-6`.
    pub fn new(density: DensitySpec, support: SupportInterval, quad: QuadratureConfig) -> Result<Self> {
        quad.validate()?;
        let mass = normalize_check(&density, &support, &quad)?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "density '{}' has total mass {mass}, expected 1",
                density.name
            )));
        }
        let mut m = Self {
            support,
            density,
            mean: f64::NAN,
            median: f64::NAN,
            quad,
            q_min: DEFAULT_Q_MIN,
        };
        m.mean = match m.density.mean {
            Some(v) => v,
            None => {
                let c = m.support.anchor();
                let left = lower_integral(&m.density, &m.support, &m.quad, c, |t, _, p| t * p)?;
                let right = upper_integral(&m.density, &m.support, &m.quad, c, |t, _, p| t * p)?;
                ensure_finite("mean", left + right)?
            }
        };
        m.median = m.quantile(0.5)?;
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.density.name
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn median(&self) -> f64 {
        self.median
    }

    /// Raw density; zero outside the support.
    pub fn pdf(&self, x: f64) -> f64 {
        if !self.support.is_interior(x) {
            return 0.0;
        }
        (self.density.pdf)(x)
    }

    /// Density at an interior point, refusing underflow.
    pub fn pdf_checked(&self, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        let p = (self.density.pdf)(x);
        if !(p >= DENSITY_FLOOR) || !p.is_finite() {
            return Err(Error::DensityUnderflow { x, density: p });
        }
        Ok(p)
    }

    pub fn check_interior(&self, x: f64) -> Result<()> {
        if self.support.is_interior(x) {
            Ok(())
        } else {
            Err(Error::NotInterior {
                x,
                lower: self.support.lower,
                upper: self.support.upper,
            })
        }
    }

    /// Error unless `x` lies inside the clipped quantile band.
    pub fn check_band(&self, x: f64) -> Result<()> {
        self.check_interior(x)?;
        let level = self.cdf(x)?;
        let tol = 1e-12;
        if level < self.q_min - tol || level > 1.0 - self.q_min + tol {
            return Err(Error::BoundaryProximity {
                x,
                level,
                q_lo: self.q_min,
                q_hi: 1.0 - self.q_min,
            });
        }
        Ok(())
    }

    /// `int_l^x g(t) p(t) dt` with endpoint-aware substitution.
    pub fn integrate_lower<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> Result<f64> {
        lower_integral(&self.density, &self.support, &self.quad, x, |t, _, p| g(t) * p)
    }

    /// `int_x^u g(t) p(t) dt` with endpoint-aware substitution.
    pub fn integrate_upper<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> Result<f64> {
        upper_integral(&self.density, &self.support, &self.quad, x, |t, _, p| g(t) * p)
    }

    fn plain_quad(&self) -> QuadratureConfig {
        let q = self.quad.clone();
        let tol = q.rel_tol;
        q.with_l1_tol(tol)
    }

    /// [`TargetMeasure::integrate_lower`] for `g` with `E g(Z) = 0`: the partial
    /// integral cancels and may cross zero, so the error is controlled relative to `int |g| p`.
    pub fn integrate_centered_lower<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> Result<f64> {
        lower_integral(&self.density, &self.support, &self.plain_quad(), x, |t, _, p| g(t) * p)
    }

    /// Upper counterpart of [`TargetMeasure::integrate_centered_lower`].
    pub fn integrate_centered_upper<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> Result<f64> {
        upper_integral(&self.density, &self.support, &self.plain_quad(), x, |t, _, p| g(t) * p)
    }

    /// `int_l^x g(w) dw` (no density weight), with the same endpoint substitution.
    /// The error is controlled relative to `int |g|`.
    pub fn integrate_plain_lower<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> Result<f64> {
        let quad = self.plain_quad();
        let l = self.support.lower;
        if x <= l {
            return Ok(0.0);
        }
        let v = if l.is_finite() {
            integrate(|s: f64| 2.0 * s * g(l + s * s), 0.0, (x - l).sqrt(), &quad)?.value
        } else {
            integrate(&g, f64::NEG_INFINITY, x, &quad)?.value
        };
        ensure_finite("integral", v)
    }

    /// `int_x^u g(w) dw` (no density weight), error relative to `int |g|`.
    pub fn integrate_plain_upper<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> Result<f64> {
        let quad = self.plain_quad();
        let u = self.support.upper;
        if x >= u {
            return Ok(0.0);
        }
        let v = if u.is_finite() {
            integrate(|s: f64| 2.0 * s * g(u - s * s), 0.0, (u - x).sqrt(), &quad)?.value
        } else {
            integrate(&g, x, f64::INFINITY, &quad)?.value
        };
        ensure_finite("integral", v)
    }

    /// `E[g(Z)]` for `Z ~ mu`.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let c = self.median;
        let v = self.integrate_lower(c, &g)? + self.integrate_upper(c, &g)?;
        ensure_finite("expectation", v)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= self.support.lower {
            return Ok(0.0);
        }
        if x >= self.support.upper {
            return Ok(1.0);
        }
        if let Some(f) = &self.density.cdf {
            return Ok(f(x));
        }
        let v = lower_integral(&self.density, &self.support, &self.quad, x, |_, _, p| p)?;
        Ok(ensure_finite("cdf", v)?.clamp(0.0, 1.0))
    }

    /// Survival function `1 - F(x)`, computed without subtraction.
    pub fn sf(&self, x: f64) -> Result<f64> {
        if x <= self.support.lower {
            return Ok(1.0);
        }
        if x >= self.support.upper {
            return Ok(0.0);
        }
        if let Some(f) = &self.density.sf {
            return Ok(f(x));
        }
        let v = upper_integral(&self.density, &self.support, &self.quad, x, |_, _, p| p)?;
        Ok(ensure_finite("sf", v)?.clamp(0.0, 1.0))
    }

    /// Inverse of the cdf by bracketing bisection (or the closed form when supplied).
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {q} outside (0, 1)")));
        }
        if let Some(f) = &self.density.quantile {
            return ensure_finite("quantile", f(q));
        }
        // search on the side that keeps the target away from 1
        let upper_side = q > 0.5;
        let target = if upper_side { 1.0 - q } else { q };
        let level = |x: f64| -> Result<f64> {
            if upper_side {
                self.sf(x)
            } else {
                self.cdf(x)
            }
        };
        // below(x) is true when x lies left of the quantile
        let below = |x: f64| -> Result<bool> {
            let v = level(x)?;
            Ok(if upper_side { v > target } else { v < target })
        };
        let c = self.support.anchor();
        let mut lo = if self.support.lower.is_finite() { self.support.lower } else { c - 1.0 };
        let mut hi = if self.support.upper.is_finite() { self.support.upper } else { c + 1.0 };
        let mut step = 1.0;
        while !self.support.lower.is_finite() && !below(lo)? {
            step *= 2.0;
            lo = c - step;
            if step > 1e300 {
                return Err(Error::QuantileBracket(q));
            }
        }
        step = 1.0;
        while !self.support.upper.is_finite() && below(hi)? {
            step *= 2.0;
            hi = c + step;
            if step > 1e300 {
                return Err(Error::QuantileBracket(q));
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            let v = level(mid)?;
            if (v - target).abs() <= 1e-14 * target.max(1e-300) {
                return Ok(mid);
            }
            if if upper_side { v > target } else { v < target } {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Quantile nodes for a grid specification.
    pub fn quantile_grid(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        grid.levels().par_iter().map(|&q| self.quantile(q)).collect()
    }

    /// Left form `(2/p) int_l^x (m - t) p(t) dt`.
    pub fn diffusion_left(&self, x: f64) -> Result<f64> {
        let p = self.pdf_checked(x)?;
        let m = self.mean;
        let v = lower_integral(&self.density, &self.support, &self.quad, x, |t, _, pt| (m - t) * pt)?;
        ensure_finite("diffusion coefficient", 2.0 * v / p)
    }

    /// Right form `(2/p) int_x^u (t - m) p(t) dt`.
    pub fn diffusion_right(&self, x: f64) -> Result<f64> {
        let p = self.pdf_checked(x)?;
        let m = self.mean;
        let v = upper_integral(&self.density, &self.support, &self.quad, x, |t, _, pt| (t - m) * pt)?;
        ensure_finite("diffusion coefficient", 2.0 * v / p)
    }

    /// Quadrature value of `a(x)`, taking whichever form has a sign-definite integrand.
    pub fn diffusion_numeric(&self, x: f64) -> Result<f64> {
        if x <= self.mean {
            self.diffusion_left(x)
        } else {
            self.diffusion_right(x)
        }
    }

    /// `a(x)`, using the closed form when the density supplies one.
    pub fn diffusion_coefficient(&self, x: f64) -> Result<f64> {
        if let Some(a) = &self.density.diffusion {
            self.check_interior(x)?;
            return ensure_finite("diffusion coefficient", a(x));
        }
        self.diffusion_numeric(x)
    }

    /// Closed-form `a` where available, valid also as a polynomial extension
    /// outside the support (used for functionals that leave it).
    pub fn diffusion_extended(&self, x: f64) -> Result<f64> {
        match &self.density.diffusion {
            Some(a) => ensure_finite("diffusion coefficient", a(x)),
            None => self.diffusion_coefficient(x),
        }
    }

    /// `int_l^x F(w) dw`, computed as `int_l^x (x - t) p(t) dt`.
    pub fn cdf_integral_lower(&self, x: f64) -> Result<f64> {
        let l = self.support.lower;
        let dx = x - l;
        lower_integral(&self.density, &self.support, &self.quad, x, |t, d, p| {
            let gap = if l.is_finite() { dx - d } else { x - t };
            gap * p
        })
    }

    /// `int_x^u (1 - F(w)) dw`, computed as `int_x^u (t - x) p(t) dt`.
    pub fn sf_integral_upper(&self, x: f64) -> Result<f64> {
        let u = self.support.upper;
        let dx = u - x;
        upper_integral(&self.density, &self.support, &self.quad, x, |t, d, p| {
            let gap = if u.is_finite() { dx - d } else { t - x };
            gap * p
        })
    }

    /// Residual of `int_l^x F = (x - m) F(x) + a(x) p(x) / 2`, with the left side
    /// integrating the cdf directly.
    pub fn fubini_residual(&self, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        let lhs = self.integrate_plain_lower(x, |w| self.cdf(w).unwrap_or(f64::NAN))?;
        let f = self.cdf(x)?;
        let a = self.diffusion_coefficient(x)?;
        let p = self.pdf_checked(x)?;
        ensure_finite("fubini residual", lhs - (x - self.mean) * f - 0.5 * a * p)
    }

    /// `S(x) = 8 (int_l^x F)(int_x^u (1 - F)) / (a(x)^2 p(x))`.
    pub fn stein_factor_s(&self, x: f64) -> Result<f64> {
        let p = self.pdf_checked(x)?;
        let a = self.diffusion_coefficient(x)?;
        if !(a > 0.0) {
            return Err(Error::NonFinite {
                context: format!("a({x}) must be positive"),
                value: a,
            });
        }
        let left = self.cdf_integral_lower(x)?;
        let right = self.sf_integral_upper(x)?;
        ensure_finite("Stein factor S", 8.0 * left * right / (a * a * p))
    }

    /// Grid maximum of `S` and its location.
    pub fn sup_s(&self, grid: &GridSpec) -> Result<(f64, f64)> {
        let xs = self.quantile_grid(grid)?;
        let vals: Vec<f64> = xs
            .par_iter()
            .map(|&x| {
                self.stein_factor_s(x).map_err(|e| match e {
                    Error::NonFinite { value, .. } => Error::NonFinite {
                        context: format!("S at node {x}"),
                        value,
                    },
                    other => other,
                })
            })
            .collect::<Result<_>>()?;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for (x, s) in xs.iter().zip(&vals) {
            if *s > best.0 {
                best = (*s, *x);
            }
        }
        Ok(best)
    }

    /// `2 / (a(mu_m) p(mu_m))`, the constant in front of the cross terms.
    pub fn cross_constant(&self) -> Result<f64> {
        let x = self.median;
        let a = self.diffusion_coefficient(x)?;
        let p = self.pdf_checked(x)?;
        ensure_finite("2/(a p) at the median", 2.0 / (a * p))
    }

    /// Draw by inverse transform of a uniform variate.
    pub fn sample_from_uniform(&self, u: f64) -> Result<f64> {
        let q = u.clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
        self.quantile(q)
    }

    pub fn edge_condition_report(&self) -> ConditionDiagnostics {
        crate::measure::diagnostics(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndpointDiagnostics {
    pub endpoint: f64,
    pub infinite: bool,
    pub points: Vec<f64>,
    pub a_values: Vec<f64>,
    /// Grid minimum of `a`, a surrogate for the liminf at an infinite endpoint.
    pub liminf_estimate: Option<f64>,
    /// Finite-difference slopes of `a` between consecutive grid points.
    pub slopes: Vec<f64>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub lower_bound_clause: Verdict,
    pub limit_clause: Verdict,
    pub slope_clause: Verdict,
    pub ratio_clause: Verdict,
}

/// Heuristic numerical diagnostics of the endpoint conditions, taking the
/// auxiliary function equal to `a` itself. Verdicts are read off finite grids
/// and are not proofs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionDiagnostics {
    pub measure: String,
    pub threshold: f64,
    pub lower: EndpointDiagnostics,
    pub upper: EndpointDiagnostics,
    pub note: String,
}

const LIMINF_THRESHOLD: f64 = 1e-6;

fn endpoint_diagnostics(m: &TargetMeasure, upper: bool) -> EndpointDiagnostics {
    let endpoint = if upper { m.support.upper } else { m.support.lower };
    let infinite = !endpoint.is_finite();
    let mut points = Vec::new();
    if infinite {
        let sign = if upper { 1.0 } else { -1.0 };
        for k in 0..=20 {
            let x = sign * 2f64.powi(k);
            if m.support.is_interior(x) && (if upper { x > m.median } else { x < m.median }) {
                points.push(x);
            }
        }
    } else {
        let width = (m.median - endpoint).abs();
        for j in 1..=6 {
            let d = width * 10f64.powi(-j);
            points.push(if upper { endpoint - d } else { endpoint + d });
        }
    }
    let mut xs = Vec::new();
    let mut a_values = Vec::new();
    for x in points {
        // stop where the density underflows
        match m.pdf_checked(x).and_then(|_| m.diffusion_coefficient(x)) {
            Ok(a) => {
                xs.push(x);
                a_values.push(a);
            }
            Err(_) => break,
        }
    }
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(a_values.windows(2))
        .map(|(x, a)| (a[1] - a[0]) / (x[1] - x[0]))
        .collect();
    let liminf_estimate = if infinite { a_values.iter().copied().reduce(f64::min) } else { None };
    let lower_bound_clause = if !infinite {
        Verdict::NotApplicable
    } else if a_values.len() < 3 {
        Verdict::Inconclusive
    } else if liminf_estimate.unwrap_or(0.0) > LIMINF_THRESHOLD {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    // limits of a exist: monotone tail of the grid
    let limit_clause = if a_values.len() < 3 {
        Verdict::Inconclusive
    } else {
        let tail = &a_values[a_values.len() - 3..];
        let inc = tail.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
        let dec = tail.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs());
        if inc || dec {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    };
    let slope_clause = if slopes.len() < 2 {
        Verdict::Inconclusive
    } else if infinite {
        let n = slopes.len();
        let (s1, s2) = (slopes[n - 2], slopes[n - 1]);
        if (s1 - s2).abs() <= 0.1 * s1.abs().max(s2.abs()) + 1e-6 {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    } else {
        // grid marches toward the endpoint, so slopes are taken in the outward direction
        let last = *slopes.last().unwrap_or(&0.0);
        let ok = if upper { last <= 1e-6 } else { last >= -1e-6 };
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    EndpointDiagnostics {
        endpoint,
        infinite,
        points: xs,
        a_values,
        liminf_estimate,
        slopes,
        ratio_min: 1.0,
        ratio_max: 1.0,
        lower_bound_clause,
        limit_clause,
        slope_clause,
        ratio_clause: Verdict::Pass,
    }
}

fn diagnostics(m: &TargetMeasure) -> ConditionDiagnostics {
    ConditionDiagnostics {
        measure: m.name().to_string(),
        threshold: LIMINF_THRESHOLD,
        lower: endpoint_diagnostics(m, false),
        upper: endpoint_diagnostics(m, true),
        note: "heuristic grid diagnostics with the auxiliary function taken equal to a; not a proof".into(),
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_ppf(q: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q)
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn gaussian_std() -> TargetMeasure {
    let spec = DensitySpec::new("gaussian", |x: f64| INV_SQRT_2PI * (-0.5 * x * x).exp())
        .with_cdf(norm_cdf, norm_sf)
        .with_quantile(norm_ppf)
        .with_mean(0.0)
        .with_diffusion(|_| 2.0);
    TargetMeasure::new(spec, SupportInterval::real_line(), QuadratureConfig::default()).expect("standard Gaussian is a valid measure")
}

/// Law of `Z^2 - 1`, with `a(x) = 4(x + 1)`.
pub fn centered_gamma() -> TargetMeasure {
    let from_lower: ScalarFn = Arc::new(|d: f64| INV_SQRT_2PI * (-0.5 * d).exp() / d.sqrt());
    let spec = DensitySpec::new("centered_gamma", |x: f64| {
        let y = x + 1.0;
        INV_SQRT_2PI * (-0.5 * y).exp() / y.sqrt()
    })
    .with_cdf(|x: f64| erf((0.5 * (x + 1.0)).sqrt()), |x: f64| erfc((0.5 * (x + 1.0)).sqrt()))
    .with_quantile(|q: f64| {
        let z = if q < 0.5 { erf_inv(q) } else { erfc_inv(1.0 - q) };
        2.0 * z * z - 1.0
    })
    .with_mean(0.0)
    .with_diffusion(|x| 4.0 * (x + 1.0))
    .with_endpoint_forms(Some(from_lower), None);
    TargetMeasure::new(
        spec,
        SupportInterval {
            lower: -1.0,
            upper: f64::INFINITY,
        },
        QuadratureConfig::default(),
    )
    .expect("centered Gamma is a valid measure")
}

/// Uniform law on `(0, 1)`, with `a(x) = x(1 - x)`.
pub fn uniform01() -> TargetMeasure {
    let spec = DensitySpec::new("uniform01", |x: f64| if x > 0.0 && x < 1.0 { 1.0 } else { 0.0 })
        .with_cdf(|x| x.clamp(0.0, 1.0), |x| (1.0 - x).clamp(0.0, 1.0))
        .with_quantile(|q| q)
        .with_mean(0.5)
        .with_diffusion(|x| x * (1.0 - x))
        .with_endpoint_forms(Some(Arc::new(|_| 1.0)), Some(Arc::new(|_| 1.0)));
    TargetMeasure::new(spec, SupportInterval { lower: 0.0, upper: 1.0 }, QuadratureConfig::default()).expect("uniform law is a valid measure")
}

/// Beta law; `a` is computed by quadrature.
pub fn beta(alpha: f64, beta: f64) -> Result<TargetMeasure> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta parameters must be positive, got ({alpha}, {beta})")));
    }
    let lb = ln_beta(alpha, beta);
    let kernel = move |x: f64, y: f64, p: f64, q: f64| ((p - 1.0) * x.ln() + (q - 1.0) * y.ln() - lb).exp();
    let from_lower: ScalarFn = Arc::new(move |d: f64| kernel(d, 1.0 - d, alpha, beta));
    let from_upper: ScalarFn = Arc::new(move |d: f64| kernel(d, 1.0 - d, beta, alpha));
    let spec = DensitySpec::new(format!("beta:{alpha},{beta}"), move |x: f64| {
        if x > 0.0 && x < 1.0 {
            kernel(x, 1.0 - x, alpha, beta)
        } else {
            0.0
        }
    })
    .with_cdf(
        move |x: f64| beta_reg(alpha, beta, x.clamp(0.0, 1.0)),
        move |x: f64| beta_reg(beta, alpha, (1.0 - x).clamp(0.0, 1.0)),
    )
    .with_mean(alpha / (alpha + beta))
    .with_endpoint_forms(Some(from_lower), Some(from_upper));
    TargetMeasure::new(spec, SupportInterval { lower: 0.0, upper: 1.0 }, QuadratureConfig::default())
}

/// Law of `e^Z`; `a` is computed by quadrature.
pub fn lognormal01() -> TargetMeasure {
    let spec = DensitySpec::new("lognormal01", |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let l = x.ln();
        INV_SQRT_2PI * (-0.5 * l * l).exp() / x
    })
    .with_cdf(
        |x: f64| if x <= 0.0 { 0.0 } else { norm_cdf(x.ln()) },
        |x: f64| if x <= 0.0 { 1.0 } else { norm_sf(x.ln()) },
    )
    .with_quantile(|q| norm_ppf(q).exp())
    .with_mean(0.5f64.exp());
    TargetMeasure::new(
        spec,
        SupportInterval {
            lower: 0.0,
            upper: f64::INFINITY,
        },
        QuadratureConfig::default(),
    )
    .expect("lognormal law is a valid measure")
}

/// Names accepted by [`by_name`].
pub const BUILTIN_NAMES: [&str; 5] = ["gaussian", "centered_gamma", "uniform01", "beta:2,3", "lognormal01"];

/// Look up a built-in measure: `gaussian`, `centered_gamma`, `uniform01`,
/// `beta:A,B` or `lognormal01`.
pub fn by_name(name: &str) -> Result<TargetMeasure> {
    let name = name.trim();
    match name {
        "gaussian" | "gaussian_std" => Ok(gaussian_std()),
        "centered_gamma" => Ok(centered_gamma()),
        "uniform01" => Ok(uniform01()),
        "lognormal01" => Ok(lognormal01()),
        _ => {
            if let Some(rest) = name.strip_prefix("beta:") {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() == 2 {
                    let a = parts[0].trim().parse::<f64>();
                    let b = parts[1].trim().parse::<f64>();
                    if let (Ok(a), Ok(b)) = (a, b) {
                        return beta(a, b);
                    }
                }
                return Err(Error::Config(format!("malformed beta specification '{name}', expected beta:A,B")));
            }
            Err(Error::Config(format!("unknown measure '{name}'")))
        }
    }
}

/// User density file.
///
/// ```toml
/// name = "half-normal"
/// lower = 0.0
/// upper = inf
/// density = "2 * exp(-x^2 / 2) / sqrt(2 * pi)"
/// # optional
/// mean = 0.7978845608
/// rel_tol = 1e-10
/// max_subdivisions = 2000
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub density: String,
    #[serde(default)]
    pub mean: Option<f64>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub max_subdivisions: Option<usize>,
}

impl DensityConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<TargetMeasure> {
        let support = SupportInterval::new(self.lower, self.upper).map_err(|e| Error::Config(e.to_string()))?;
        let expr = Expr::parse(&self.density)?;
        let mut spec = DensitySpec::new(self.name.clone(), move |x| expr.eval(x));
        spec.mean = self.mean;
        let mut quad = QuadratureConfig::default();
        if let Some(t) = self.rel_tol {
            quad.rel_tol = t;
        }
        if let Some(n) = self.max_subdivisions {
            quad.max_subdivisions = n;
        }
        quad.validate().map_err(|e| Error::Config(e.to_string()))?;
        TargetMeasure::new(spec, support, quad)
    }
}

pub fn load_density_config(path: &Path) -> Result<TargetMeasure> {
    let text = std::fs::read_to_string(path)?;
    DensityConfig::parse(&text)?.build()
}

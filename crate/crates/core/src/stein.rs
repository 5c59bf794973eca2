//! The Stein equation `a(x)/2 f'(x) - (x - m) f(x) = h(x, y) - E[h(Z, y)]`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::mc::{sample_mean, EstimatorResult};
use crate::measure::{GridSpec, TargetMeasure};

/// A test function `h(x, y)` on `(l, u) x R^d` with its partial derivatives and
/// declared sup-norms of those partials.
pub trait TestFunction: Send + Sync {
    fn name(&self) -> String;
    fn dim_y(&self) -> usize;
    fn eval(&self, x: f64, y: &[f64]) -> f64;
    fn dx(&self, x: f64, y: &[f64]) -> f64;
    fn dy(&self, j: usize, x: f64, y: &[f64]) -> f64;
    fn sup_dx(&self) -> f64;
    fn sup_dy(&self, j: usize) -> f64;
}

/// `h(x, y) = x`.
#[derive(Clone, Debug)]
pub struct Linear;

impl TestFunction for Linear {
    fn name(&self) -> String {
        "x".into()
    }
    fn dim_y(&self) -> usize {
        0
    }
    fn eval(&self, x: f64, _: &[f64]) -> f64 {
        x
    }
    fn dx(&self, _: f64, _: &[f64]) -> f64 {
        1.0
    }
    fn dy(&self, _: usize, _: f64, _: &[f64]) -> f64 {
        0.0
    }
    fn sup_dx(&self) -> f64 {
        1.0
    }
    fn sup_dy(&self, _: usize) -> f64 {
        0.0
    }
}

/// `h(x, y) = sin x`.
#[derive(Clone, Debug)]
pub struct Sine;

impl TestFunction for Sine {
    fn name(&self) -> String {
        "sin x".into()
    }
    fn dim_y(&self) -> usize {
        0
    }
    fn eval(&self, x: f64, _: &[f64]) -> f64 {
        x.sin()
    }
    fn dx(&self, x: f64, _: &[f64]) -> f64 {
        x.cos()
    }
    fn dy(&self, _: usize, _: f64, _: &[f64]) -> f64 {
        0.0
    }
    fn sup_dx(&self) -> f64 {
        1.0
    }
    fn sup_dy(&self, _: usize) -> f64 {
        0.0
    }
}

/// `h(x, y) = x y_1` on `|y_1| <= y_max` and `x` in `[x_lo, x_hi]`.
#[derive(Clone, Debug)]
pub struct Product {
    pub y_max: f64,
    pub x_abs_max: f64,
}

impl TestFunction for Product {
    fn name(&self) -> String {
        "x*y1".into()
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn eval(&self, x: f64, y: &[f64]) -> f64 {
        x * y[0]
    }
    fn dx(&self, _: f64, y: &[f64]) -> f64 {
        y[0]
    }
    fn dy(&self, _: usize, x: f64, _: &[f64]) -> f64 {
        x
    }
    fn sup_dx(&self) -> f64 {
        self.y_max
    }
    fn sup_dy(&self, _: usize) -> f64 {
        self.x_abs_max
    }
}

/// `h(x, y) = exp(-(x - c)^2 / w^2) (1 + sin(y_1) / 2)`.
#[derive(Clone, Debug)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
}

impl Bump {
    fn g(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        (-z * z).exp()
    }
}

impl TestFunction for Bump {
    fn name(&self) -> String {
        "bump".into()
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn eval(&self, x: f64, y: &[f64]) -> f64 {
        self.g(x) * (1.0 + 0.5 * y[0].sin())
    }
    fn dx(&self, x: f64, y: &[f64]) -> f64 {
        -2.0 * (x - self.center) / (self.width * self.width) * self.g(x) * (1.0 + 0.5 * y[0].sin())
    }
    fn dy(&self, _: usize, x: f64, y: &[f64]) -> f64 {
        0.5 * self.g(x) * y[0].cos()
    }
    fn sup_dx(&self) -> f64 {
        // max of 2|z| e^{-z^2} is sqrt(2) e^{-1/2}
        1.5 * std::f64::consts::SQRT_2 * (-0.5f64).exp() / self.width
    }
    fn sup_dy(&self, _: usize) -> f64 {
        0.5
    }
}

/// A constant test function.
#[derive(Clone, Debug)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn name(&self) -> String {
        format!("const {}", self.0)
    }
    fn dim_y(&self) -> usize {
        0
    }
    fn eval(&self, _: f64, _: &[f64]) -> f64 {
        self.0
    }
    fn dx(&self, _: f64, _: &[f64]) -> f64 {
        0.0
    }
    fn dy(&self, _: usize, _: f64, _: &[f64]) -> f64 {
        0.0
    }
    fn sup_dx(&self) -> f64 {
        0.0
    }
    fn sup_dy(&self, _: usize) -> f64 {
        0.0
    }
}

/// A test function assembled from closures.
#[derive(Clone)]
pub struct FnTestFunction {
    pub name: String,
    pub dim_y: usize,
    pub h: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    pub hx: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    pub hy: Arc<dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync>,
    pub sup_dx: f64,
    pub sup_dy: Vec<f64>,
}

impl TestFunction for FnTestFunction {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim_y(&self) -> usize {
        self.dim_y
    }
    fn eval(&self, x: f64, y: &[f64]) -> f64 {
        (self.h)(x, y)
    }
    fn dx(&self, x: f64, y: &[f64]) -> f64 {
        (self.hx)(x, y)
    }
    fn dy(&self, j: usize, x: f64, y: &[f64]) -> f64 {
        (self.hy)(j, x, y)
    }
    fn sup_dx(&self) -> f64 {
        self.sup_dx
    }
    fn sup_dy(&self, j: usize) -> f64 {
        self.sup_dy.get(j).copied().unwrap_or(0.0)
    }
}

/// Box for the `y` arguments of the standard family.
pub const Y_MAX: f64 = 2.0;

/// The standard family `{x, sin x, x y_1, bump}`; norms are sups over the
/// quantile band of `measure` and `|y_1| <= 2`.
pub fn family(measure: &TargetMeasure) -> Result<Vec<Box<dyn TestFunction>>> {
    let lo = measure.quantile(measure.q_min)?;
    let hi = measure.quantile(1.0 - measure.q_min)?;
    let q1 = measure.quantile(0.25)?;
    let q3 = measure.quantile(0.75)?;
    Ok(vec![
        Box::new(Linear),
        Box::new(Sine),
        Box::new(Product {
            y_max: Y_MAX,
            x_abs_max: lo.abs().max(hi.abs()),
        }),
        Box::new(Bump {
            center: measure.median(),
            width: q3 - q1,
        }),
    ])
}

/// The `y` values used when scanning grids.
pub fn y_probe(dim: usize) -> Vec<Vec<f64>> {
    if dim == 0 {
        vec![vec![]]
    } else {
        [-Y_MAX, -0.7, 0.4, Y_MAX].iter().map(|&v| vec![v; dim]).collect()
    }
}

/// Central finite-difference check of the supplied partial derivatives.
pub fn check_derivatives(h: &dyn TestFunction, points: &[(f64, Vec<f64>)], tol: f64) -> Result<()> {
    let eps = 1e-6;
    for (x, y) in points {
        let fd = (h.eval(x + eps, y) - h.eval(x - eps, y)) / (2.0 * eps);
        let an = h.dx(*x, y);
        if (fd - an).abs() > tol * an.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "{}: dx mismatch at x={x}: supplied {an}, finite difference {fd}",
                h.name()
            )));
        }
        for j in 0..h.dim_y() {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += eps;
            ym[j] -= eps;
            let fd = (h.eval(*x, &yp) - h.eval(*x, &ym)) / (2.0 * eps);
            let an = h.dy(j, *x, y);
            if (fd - an).abs() > tol * an.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{}: dy{j} mismatch at x={x}: supplied {an}, finite difference {fd}",
                    h.name()
                )));
            }
        }
    }
    Ok(())
}

/// Everything known about the solution at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint {
    pub x: f64,
    pub y: Vec<f64>,
    pub f: f64,
    pub f_alt: f64,
    pub dfx: f64,
    pub dfy: Vec<f64>,
    pub residual: f64,
}

/// Solution of the Stein equation for a fixed measure and test function.
pub struct SteinSolver<'a> {
    pub measure: &'a TargetMeasure,
    pub h: &'a dyn TestFunction,
}

/// `(2 / (a p)) int_l^x (g - E g) p`, taking the tail that keeps the integral short.
fn solve_scalar(m: &TargetMeasure, g: &dyn Fn(f64) -> f64, eg: f64, x: f64) -> Result<f64> {
    let p = m.pdf_checked(x)?;
    let a = m.diffusion_coefficient(x)?;
    let integral = if m.cdf(x)? <= 0.5 {
        m.integrate_centered_lower(x, |t| g(t) - eg)?
    } else {
        -m.integrate_centered_upper(x, |t| g(t) - eg)?
    };
    ensure_finite("Stein solution", 2.0 * integral / (a * p))
}

impl<'a> SteinSolver<'a> {
    pub fn new(measure: &'a TargetMeasure, h: &'a dyn TestFunction) -> Self {
        Self { measure, h }
    }

    fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.h.dim_y() {
            return Err(Error::DimensionMismatch {
                expected: self.h.dim_y(),
                got: y.len(),
            });
        }
        Ok(())
    }

    /// `E[h(Z, y)]`.
    pub fn expectation(&self, y: &[f64]) -> Result<f64> {
        self.check_y(y)?;
        self.measure.expectation(|t| self.h.eval(t, y))
    }

    fn prepare(&self, x: f64, y: &[f64]) -> Result<()> {
        self.check_y(y)?;
        self.measure.check_band(x)
    }

    /// `f_h(x, y) = (2/(a p)) int_l^x (h(t, y) - E h(Z, y)) p(t) dt`.
    pub fn solve(&self, x: f64, y: &[f64]) -> Result<f64> {
        self.prepare(x, y)?;
        let eh = self.expectation(y)?;
        self.solve_given(x, y, eh)
    }

    fn solve_given(&self, x: f64, y: &[f64], eh: f64) -> Result<f64> {
        solve_scalar(self.measure, &|t| self.h.eval(t, y), eh, x)
    }

    /// The same solution written through `dh/dx` and the cdf:
    /// `-(2/(a p)) [ (1 - F(x)) int_l^x h_x F + F(x) int_x^u h_x (1 - F) ]`.
    pub fn solve_alt(&self, x: f64, y: &[f64]) -> Result<f64> {
        self.prepare(x, y)?;
        let m = self.measure;
        let p = m.pdf_checked(x)?;
        let a = m.diffusion_coefficient(x)?;
        let (f, s) = (m.cdf(x)?, m.sf(x)?);
        let (left, right) = self.dx_integrals(x, y)?;
        ensure_finite("Stein solution (cdf form)", -2.0 * (s * left + f * right) / (a * p))
    }

    /// `int_l^x h_x F` and `int_x^u h_x (1 - F)`.
    fn dx_integrals(&self, x: f64, y: &[f64]) -> Result<(f64, f64)> {
        let m = self.measure;
        let left = m.integrate_plain_lower(x, |w| self.h.dx(w, y) * m.cdf(w).unwrap_or(f64::NAN))?;
        let right = m.integrate_plain_upper(x, |w| self.h.dx(w, y) * m.sf(w).unwrap_or(f64::NAN))?;
        Ok((left, right))
    }

    /// `df_h/dx = (4/(a^2 p)) [ (int_x^u (1-F)) (int_l^x h_x F) - (int_l^x F) (int_x^u h_x (1-F)) ]`.
    pub fn dx_solution(&self, x: f64, y: &[f64]) -> Result<f64> {
        self.prepare(x, y)?;
        let m = self.measure;
        let p = m.pdf_checked(x)?;
        let a = m.diffusion_coefficient(x)?;
        let int_f = m.cdf_integral_lower(x)?;
        let int_s = m.sf_integral_upper(x)?;
        let (left, right) = self.dx_integrals(x, y)?;
        ensure_finite("Stein solution derivative", 4.0 * (int_s * left - int_f * right) / (a * a * p))
    }

    /// `df_h/dy_j`, which is the solution for the test function `dh/dy_j`.
    pub fn dy_solution(&self, j: usize, x: f64, y: &[f64]) -> Result<f64> {
        self.prepare(x, y)?;
        if j >= self.h.dim_y() {
            return Err(Error::DimensionMismatch {
                expected: self.h.dim_y(),
                got: j + 1,
            });
        }
        let g = |t: f64| self.h.dy(j, t, y);
        let eg = self.measure.expectation(g)?;
        solve_scalar(self.measure, &g, eg, x)
    }

    /// `a(x)/2 df/dx - (x - m) f - h(x, y) + E h(Z, y)`.
    pub fn residual(&self, x: f64, y: &[f64]) -> Result<f64> {
        Ok(self.point(x, y)?.residual)
    }

    /// Solution, alternative form, derivatives and residual at `(x, y)`.
    pub fn point(&self, x: f64, y: &[f64]) -> Result<SolutionPoint> {
        self.prepare(x, y)?;
        let eh = self.expectation(y)?;
        self.point_given(x, y, eh)
    }

    fn point_given(&self, x: f64, y: &[f64], eh: f64) -> Result<SolutionPoint> {
        let m = self.measure;
        let f = self.solve_given(x, y, eh)?;
        let f_alt = self.solve_alt(x, y)?;
        let dfx = self.dx_solution(x, y)?;
        let dfy = (0..self.h.dim_y()).map(|j| self.dy_solution(j, x, y)).collect::<Result<Vec<_>>>()?;
        let a = m.diffusion_coefficient(x)?;
        let residual = 0.5 * a * dfx - (x - m.mean()) * f - (self.h.eval(x, y) - eh);
        Ok(SolutionPoint {
            x,
            y: y.to_vec(),
            f,
            f_alt,
            dfx,
            dfy,
            residual,
        })
    }

    /// Evaluate [`SteinSolver::point`] on many `x` for a fixed `y`, sharing `E h(Z, y)`.
    pub fn points(&self, xs: &[f64], y: &[f64]) -> Result<Vec<SolutionPoint>> {
        self.check_y(y)?;
        let eh = self.expectation(y)?;
        xs.par_iter()
            .map(|&x| {
                self.measure.check_band(x)?;
                self.point_given(x, y, eh)
            })
            .collect()
    }
}

/// One verified inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub measure: String,
    pub test_function: String,
    pub lhs_max: f64,
    pub rhs: f64,
    pub constant: f64,
    pub margin: f64,
    pub slack: f64,
    pub argmax_x: f64,
    pub argmax_y: Vec<f64>,
    pub grid_nodes: usize,
    pub y_values: Vec<Vec<f64>>,
    pub pass: bool,
    pub note: String,
}

impl BoundReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        measure: &TargetMeasure,
        h: &dyn TestFunction,
        lhs: (f64, f64, Vec<f64>),
        constant: f64,
        norm: f64,
        grid: &GridSpec,
        ys: &[Vec<f64>],
        slack: f64,
        note: &str,
    ) -> Self {
        let rhs = constant * norm;
        Self {
            name: name.into(),
            measure: measure.name().into(),
            test_function: h.name(),
            lhs_max: lhs.0,
            rhs,
            constant,
            margin: rhs - lhs.0,
            slack,
            argmax_x: lhs.1,
            argmax_y: lhs.2,
            grid_nodes: grid.nodes,
            y_values: ys.to_vec(),
            pass: lhs.0 <= rhs + slack,
            note: note.into(),
        }
    }
}

/// Default slack for the bound comparisons.
pub const BOUND_SLACK: f64 = 1e-6;

/// Check `|f_h| <= |h_x|`, `|d_y f_h| <= 2/(a(mu_m) p(mu_m)) |h_y|` and
/// `|d_x f_h| <= sup S |h_x|` over a quantile grid and the `y` probe set.
/// `sup_s` may be supplied to reuse an estimate on the same grid.
pub fn verify_bounds(measure: &TargetMeasure, h: &dyn TestFunction, grid: &GridSpec, sup_s: Option<f64>) -> Result<Vec<BoundReport>> {
    let xs = measure.quantile_grid(grid)?;
    let ys = y_probe(h.dim_y());
    let solver = SteinSolver::new(measure, h);
    let s_sup = match sup_s {
        Some(s) => s,
        None => measure.sup_s(grid)?.0,
    };
    let cross = measure.cross_constant()?;
    let x0 = xs.first().copied().unwrap_or(measure.median());
    let mut f_max = (0.0f64, x0, ys[0].clone());
    let mut dy_max = (0.0f64, x0, ys[0].clone());
    let mut dx_max = (0.0f64, x0, ys[0].clone());
    let dy_norm = (0..h.dim_y()).map(|j| h.sup_dy(j)).fold(0.0, f64::max);
    for y in &ys {
        let eh = solver.expectation(y)?;
        let rows: Vec<(f64, f64, f64)> = xs
            .par_iter()
            .map(|&x| {
                let f = solver.solve_given(x, y, eh)?;
                let dfx = solver.dx_solution(x, y)?;
                // each coordinate is compared against its own norm, scaled to the largest
                let mut dfy = 0.0f64;
                for j in 0..h.dim_y() {
                    let v = solver.dy_solution(j, x, y)?.abs();
                    let nj = h.sup_dy(j);
                    let scaled = if nj > 0.0 { v * dy_norm / nj } else { v };
                    dfy = dfy.max(scaled);
                }
                Ok((f.abs(), dfy, dfx.abs()))
            })
            .collect::<Result<_>>()?;
        for (x, (f, dy, dx)) in xs.iter().zip(rows) {
            if f > f_max.0 {
                f_max = (f, *x, y.clone());
            }
            if dy > dy_max.0 {
                dy_max = (dy, *x, y.clone());
            }
            if dx > dx_max.0 {
                dx_max = (dx, *x, y.clone());
            }
        }
    }
    let dy_note = if h.dim_y() == 0 {
        "no y coordinates; vacuous"
    } else {
        "constant is 2/(a p) at the median"
    };
    Ok(vec![
        BoundReport::new("sup|f|", measure, h, f_max, 1.0, h.sup_dx(), grid, &ys, BOUND_SLACK, "constant is 1"),
        BoundReport::new("sup|df/dy|", measure, h, dy_max, cross, dy_norm, grid, &ys, BOUND_SLACK, dy_note),
        BoundReport::new(
            "sup|df/dx|",
            measure,
            h,
            dx_max,
            s_sup,
            h.sup_dx(),
            grid,
            &ys,
            BOUND_SLACK,
            "constant is the grid maximum of S",
        ),
    ])
}

/// A smooth function of one variable with its derivative.
#[derive(Clone)]
pub struct Smooth1D {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Smooth1D {
    pub fn new(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }
}

/// Functions used for the one-dimensional characterization checks.
pub fn characterization_family() -> Vec<Smooth1D> {
    vec![
        Smooth1D::new("1", |_| 1.0, |_| 0.0),
        Smooth1D::new("x", |x| x, |_| 1.0),
        Smooth1D::new("x^2", |x| x * x, |x| 2.0 * x),
        Smooth1D::new("sin x", f64::sin, f64::cos),
        Smooth1D::new("atan x", f64::atan, |x| 1.0 / (1.0 + x * x)),
    ]
}

fn draw(measure: &TargetMeasure, rng: &mut ChaCha8Rng) -> Result<f64> {
    let u: f64 = rng.gen();
    measure.sample_from_uniform(u)
}

/// Monte Carlo mean of `a(Z)/2 f'(Z) - (Z - m) f(Z)`, `Z ~ mu` by inverse cdf.
pub fn characterization_test(measure: &TargetMeasure, f: &Smooth1D, n: usize, seed: u64) -> Result<EstimatorResult> {
    let m = measure.mean();
    let mo = sample_mean(n, seed, |rng| {
        let z = draw(measure, rng)?;
        let a = measure.diffusion_coefficient(z)?;
        Ok(0.5 * a * (f.df)(z) - (z - m) * (f.f)(z))
    })?;
    Ok(EstimatorResult::from_moments(
        &mo,
        seed,
        format!("characterization {} {}", measure.name(), f.name),
    ))
}

/// Monte Carlo mean of `a(X)/2 h_x(X, Y) - (X - m) h(X, Y)` with `X ~ mu`
/// independent of `Y`.
pub fn multidim_characterization_test<S>(measure: &TargetMeasure, h: &dyn TestFunction, y_sampler: S, n: usize, seed: u64) -> Result<EstimatorResult>
where
    S: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    let m = measure.mean();
    let mo = sample_mean(n, seed, |rng| {
        let x = draw(measure, rng)?;
        let y = y_sampler(rng);
        let a = measure.diffusion_coefficient(x)?;
        Ok(0.5 * a * h.dx(x, &y) - (x - m) * h.eval(x, &y))
    })?;
    Ok(EstimatorResult::from_moments(
        &mo,
        seed,
        format!("characterization {} {}", measure.name(), h.name()),
    ))
}

//! One-dimensional quadrature.
//!
//! The adaptive scheme is a globally adaptive 21-point Gauss-Kronrod rule with
//! interval bisection (largest error first). Infinite endpoints are mapped onto
//! a bounded interval before integrating. A fixed-node Gauss-Legendre rule is
//! available for smooth integrands on bounded intervals, and is also what the
//! Mehler and lognormal estimators use for their inner integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the integral over a (possibly) infinite interval is approximated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    AdaptiveComposite,
    FixedNode { nodes: usize },
}

/// Change of variables applied at an infinite endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailTransform {
    /// Refuse infinite endpoints.
    None,
    /// `x = a + t / (1 - t)` on `t in [0, 1)`, and its mirror image.
    Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub scheme: Scheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Tolerance relative to `int |f|`; 0 disables it. Meant for oscillatory integrands that cancel.
    #[serde(default)]
    pub l1_tol: f64,
    pub max_subdivisions: usize,
    pub lower_tail: TailTransform,
    pub upper_tail: TailTransform,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::AdaptiveComposite,
            rel_tol: 1e-10,
            abs_tol: 0.0,
            l1_tol: 0.0,
            max_subdivisions: 2000,
            lower_tail: TailTransform::Rational,
            upper_tail: TailTransform::Rational,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) || !(self.l1_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "quadrature tolerances must be positive (rel {}, abs {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_subdivisions < 8 {
            return Err(Error::InvalidArgument(format!(
                "max_subdivisions must be at least 8, got {}",
                self.max_subdivisions
            )));
        }
        if let Scheme::FixedNode { nodes } = self.scheme {
            if nodes < 2 {
                return Err(Error::InvalidArgument("fixed-node rule needs at least 2 nodes".into()));
            }
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_l1_tol(mut self, l1_tol: f64) -> Self {
        self.l1_tol = l1_tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub intervals: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    floor: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// 21-point Kronrod rule with the embedded 10-point Gauss error estimate.
fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    Panel {
        a,
        b,
        value,
        error: err,
        floor,
    }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    let first = qk21(f, a, b);
    let mut evaluations = 21;
    let mut done_value = 0.0;
    let mut done_error = 0.0;
    let mut done_floor = 0.0;
    let mut done_count = 0usize;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    loop {
        let (live_value, live_error, live_floor) = heap.iter().fold((0.0, 0.0, 0.0), |(v, e, f), p| (v + p.value, e + p.error, f + p.floor));
        let total = done_value + live_value;
        let total_err = done_error + live_error;
        // a result that cancels to ~0 cannot be resolved below the roundoff of int |f|
        let roundoff = (done_floor + live_floor) * (1.0 + 1e-9);
        let l1 = (done_floor + live_floor) / (50.0 * f64::EPSILON);
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs()).max(cfg.l1_tol * l1).max(roundoff);
        let intervals = heap.len() + done_count;
        if total_err <= tol || heap.is_empty() {
            // an empty heap means every panel sits at its roundoff floor or is too narrow
            let floor_only = heap.is_empty();
            if total_err <= tol || floor_only && total_err <= 1e3 * tol.max(f64::MIN_POSITIVE) {
                return Ok(QuadResult {
                    value: total,
                    error: total_err,
                    evaluations,
                    intervals,
                });
            }
            return Err(Error::QuadratureNonConvergence {
                lower: a,
                upper: b,
                estimate: total,
                error_bound: total_err,
            });
        }
        if intervals >= cfg.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                lower: a,
                upper: b,
                estimate: total,
                error_bound: total_err,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let too_narrow =
            !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) <= 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if worst.error <= worst.floor * (1.0 + 1e-12) || too_narrow {
            done_value += worst.value;
            done_error += worst.error;
            done_floor += worst.floor;
            done_count += 1;
            continue;
        }
        let left = qk21(f, worst.a, mid);
        let right = qk21(f, mid, worst.b);
        evaluations += 42;
        heap.push(left);
        heap.push(right);
    }
}

fn fixed_node<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, nodes: usize) -> QuadResult {
    let fine = GaussLegendre::new(nodes).integrate(f, a, b);
    let coarse = GaussLegendre::new(nodes.div_ceil(2).max(1)).integrate(f, a, b);
    QuadResult {
        value: fine,
        error: (fine - coarse).abs(),
        evaluations: nodes + nodes.div_ceil(2),
        intervals: 1,
    }
}

fn integrate_finite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    match cfg.scheme {
        Scheme::AdaptiveComposite => adaptive(f, a, b, cfg),
        Scheme::FixedNode { nodes } => Ok(fixed_node(f, a, b, nodes)),
    }
}

/// Integrate `f` over `[a, b]`, where either endpoint may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    integrate_dyn(&f, a, b, cfg)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::InvalidArgument("NaN integration limit".into()));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            intervals: 0,
        });
    }
    if a > b {
        let r = integrate_dyn(f, b, a, cfg)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    let lower_inf = a == f64::NEG_INFINITY;
    let upper_inf = b == f64::INFINITY;
    if (lower_inf && cfg.lower_tail == TailTransform::None) || (upper_inf && cfg.upper_tail == TailTransform::None) {
        return Err(Error::InvalidArgument("infinite limit without a tail transform".into()));
    }
    match (lower_inf, upper_inf) {
        (false, false) => integrate_finite(&f, a, b, cfg),
        (false, true) => {
            let g = |t: f64| {
                let s = 1.0 - t;
                let x = a + t / s;
                let fx = f(x);
                if fx == 0.0 {
                    0.0
                } else {
                    fx / (s * s)
                }
            };
            integrate_finite(&g, 0.0, 1.0, cfg)
        }
        (true, false) => {
            let g = |t: f64| {
                let s = 1.0 - t;
                let x = b - t / s;
                let fx = f(x);
                if fx == 0.0 {
                    0.0
                } else {
                    fx / (s * s)
                }
            };
            integrate_finite(&g, 0.0, 1.0, cfg)
        }
        (true, true) => {
            let left = integrate_dyn(f, f64::NEG_INFINITY, 0.0, cfg)?;
            let right = integrate_dyn(f, 0.0, f64::INFINITY, cfg)?;
            Ok(QuadResult {
                value: left.value + right.value,
                error: left.error + right.error,
                evaluations: left.evaluations + right.evaluations,
                intervals: left.intervals + right.intervals,
            })
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration
/// on the Legendre recurrence.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Interval the nodes and weights refer to.
    pub reference: (f64, f64),
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self {
            nodes,
            weights,
            reference: (-1.0, 1.0),
        }
    }

    /// Nodes and weights mapped to `[0, 1]`; the weights sum to one.
    pub fn unit(n: usize) -> Self {
        let gl = Self::new(n);
        Self {
            nodes: gl.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: gl.weights.iter().map(|w| 0.5 * w).collect(),
            reference: (0.0, 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate over `[a, b]` by mapping the reference interval onto it.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let (r0, r1) = self.reference;
        let scale = (b - a) / (r1 - r0);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(a + (x - r0) * scale);
        }
        s * scale
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, &cfg()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_over_real_line() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let r = integrate(phi, f64::NEG_INFINITY, f64::INFINITY, &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{}", r.value);
        let r = integrate(|x| x * x * phi(x), f64::NEG_INFINITY, f64::INFINITY, &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_line_tail() {
        let r = integrate(|x| (-x).exp(), 3.0, f64::INFINITY, &cfg()).unwrap();
        assert!((r.value - (-3.0f64).exp()).abs() < 1e-14);
        let r = integrate(|x| x.exp(), f64::NEG_INFINITY, -2.0, &cfg()).unwrap();
        assert!((r.value - (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| x, 1.0, 0.0, &cfg()).unwrap();
        assert!((r.value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &cfg().with_rel_tol(1e-8)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-7, "{}", r.value);
    }

    #[test]
    fn non_convergence_is_reported() {
        let tight = QuadratureConfig {
            max_subdivisions: 8,
            rel_tol: 1e-14,
            ..cfg()
        };
        let err = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &tight).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn infinite_limit_without_transform_is_rejected() {
        let c = QuadratureConfig {
            upper_tail: TailTransform::None,
            ..cfg()
        };
        assert!(integrate(|x: f64| (-x).exp(), 0.0, f64::INFINITY, &c).is_err());
    }

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in [1, 2, 5, 32, 64] {
            let gl = GaussLegendre::unit(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} sum={s}");
            // exact for degree 2n-1
            let deg = 2 * n - 1;
            let v = gl.integrate(|x| x.powi(deg as i32), 0.0, 1.0);
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn fixed_node_scheme() {
        let c = QuadratureConfig {
            scheme: Scheme::FixedNode { nodes: 40 },
            ..cfg()
        };
        let r = integrate(|x: f64| x.cos(), 0.0, 1.0, &c).unwrap();
        assert!((r.value - 1f64.sin()).abs() < 1e-14);
    }
}

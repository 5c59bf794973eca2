//! The end-to-end experiments behind the command-line tool.
//!
//! Every experiment takes an [`ExperimentConfig`], writes CSV tables, a JSON
//! summary and SVG plots into an output directory, and returns the [`Report`].
//! A report whose checks all pass corresponds to exit status 0.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{contraction_norm_closed_form, exact_cross_moment, gamma_pair_moments, gamma_pair_sample};
use crate::error::{Error, Result};
use crate::estimators::{
    discrepancy_term, gamma_pair_terms, lognormal_cross, lognormal_limit_constant, lognormal_swapped_bound, uniform_cross_checked,
    uniform_cross_specialized, uniform_pair, IndependenceBound, LognormalFunctional, MehlerQuadrature, OutsidePolicy, Path as DPath,
};
use crate::mc::{fill_standard_normal, map_chunks};
use crate::measure::{centered_gamma, lognormal01, uniform01, GridSpec, TargetMeasure};
use crate::report::{Cell, Kind, Output, Plot, Provenance, Report, Series, Table};
use crate::stein::{family, verify_bounds, BoundReport};
use crate::transport::{w1_exact, SampleCloud, W1_CAVEAT};

/// Flat key-value experiment settings. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Samples for the scalar estimators.
    pub samples: usize,
    /// Paired samples for empirical W1; 0 disables it.
    pub w1_samples: usize,
    /// Samples for the Mehler-based estimates (generic cross-check, generic discrepancy).
    pub check_samples: usize,
    /// Quantile grid used for `sup S`.
    pub grid_nodes: usize,
    pub quick: bool,
    pub gamma_n: Vec<usize>,
    /// `sqrt`, `linear` or `fixed:K`.
    pub gamma_m: String,
    pub gamma_exact_pairs: Vec<[usize; 2]>,
    /// Tolerated fraction of `U_N <= -1`.
    pub gamma_outside_limit: f64,
    pub uniform_rho: Vec<f64>,
    pub mehler_nodes: usize,
    pub mehler_inner: usize,
    pub lognormal_n: Vec<usize>,
    pub lognormal_i: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            samples: 100_000,
            w1_samples: 1000,
            check_samples: 20_000,
            grid_nodes: 2000,
            quick: false,
            gamma_n: vec![50, 100, 200, 400, 800],
            gamma_m: "sqrt".into(),
            gamma_exact_pairs: vec![[3, 3], [10, 5]],
            gamma_outside_limit: 1.0,
            uniform_rho: vec![0.4, 0.2, 0.1, 0.05],
            mehler_nodes: MehlerQuadrature::DEFAULT_NODES,
            mehler_inner: MehlerQuadrature::DEFAULT_INNER,
            lognormal_n: vec![500, 1000, 2000],
            lognormal_i: vec![1, 4, 16],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub quick: bool,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// File (if any), then command-line overrides, then quick-mode reductions.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut c = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(n) = o.samples {
            c.samples = n;
        }
        c.quick |= o.quick;
        if c.quick {
            c.apply_quick();
        }
        c.validate()?;
        Ok(c)
    }

    /// Smaller samples and schedules.
    pub fn apply_quick(&mut self) {
        self.quick = true;
        self.samples = self.samples.min(20_000);
        self.check_samples = self.check_samples.min(2000);
        self.grid_nodes = self.grid_nodes.min(400);
        self.gamma_n.retain(|&n| n <= 200);
        self.lognormal_n = self.lognormal_n.iter().map(|&n| (n / 2).max(2)).collect();
        self.mehler_nodes = self.mehler_nodes.min(16);
        self.mehler_inner = self.mehler_inner.min(16);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples < 2 {
            return bad("samples must be at least 2".into());
        }
        if self.check_samples < 2 {
            return bad("check_samples must be at least 2".into());
        }
        if self.grid_nodes < 3 {
            return bad("grid_nodes must be at least 3".into());
        }
        if self.gamma_n.is_empty() || self.uniform_rho.is_empty() || self.lognormal_n.is_empty() || self.lognormal_i.is_empty() {
            return bad("schedules must be nonempty".into());
        }
        if self.gamma_n.iter().any(|&n| n < 2) {
            return bad("gamma_n entries must be at least 2".into());
        }
        for &n in &self.gamma_n {
            let m = self.m_for(n)?;
            if m < 1 || m > n {
                return bad(format!("m({n}) = {m} is outside 1..=N"));
            }
        }
        for &[n, m] in &self.gamma_exact_pairs {
            if n < 2 || m < 1 || m > n {
                return bad(format!("exact pair ({n}, {m}) needs N >= 2 and 1 <= m <= N"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma_outside_limit) {
            return bad("gamma_outside_limit must lie in [0, 1]".into());
        }
        if self.uniform_rho.iter().any(|r| !(-1.0..=1.0).contains(r)) {
            return bad("uniform_rho entries must lie in [-1, 1]".into());
        }
        if self.mehler_nodes < 4 || self.mehler_inner < 1 {
            return bad("mehler_nodes >= 4 and mehler_inner >= 1 required".into());
        }
        if self.lognormal_n.iter().any(|&n| n < 2) {
            return bad("lognormal_n entries must be at least 2".into());
        }
        let n_max = *self.lognormal_n.iter().max().expect("nonempty");
        if self.lognormal_i.iter().any(|&i| i > n_max) {
            return bad("lognormal_i entries must not exceed the largest N".into());
        }
        Ok(())
    }

    /// `m(N)` under `gamma_m`.
    pub fn m_for(&self, n: usize) -> Result<usize> {
        match self.gamma_m.as_str() {
            "sqrt" => Ok((n as f64).sqrt().floor() as usize),
            "linear" => Ok(n),
            s => match s.strip_prefix("fixed:").map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(k),
                _ => Err(Error::Config(format!("gamma_m must be sqrt, linear or fixed:K, got '{s}'"))),
            },
        }
    }

    pub fn mehler(&self) -> Result<MehlerQuadrature> {
        MehlerQuadrature::new(self.mehler_nodes, self.mehler_inner)
    }

    fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance {
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            config: toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?,
        })
    }
}

fn row_seed(seed: u64, stream: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream << 32).wrapping_add(index)
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// Tabulate `a`, `S`, density and cdf on a quantile grid, with the edge
/// conditions and constants.
pub fn cmd_measure(measure: &TargetMeasure, grid_nodes: usize, out: &Path) -> Result<Report> {
    let grid = GridSpec::new(grid_nodes);
    let mut o = Output::new(
        "measure",
        Provenance {
            seed: 0,
            version: env!("CARGO_PKG_VERSION").into(),
            config: format!("measure = \"{}\"\ngrid_nodes = {grid_nodes}\n", measure.name()),
        },
    );
    let mut t = Table::new(
        "grid",
        &[
            ("level", Kind::Param),
            ("x", Kind::Param),
            ("pdf", Kind::Exact),
            ("cdf", Kind::Exact),
            ("a", Kind::Exact),
            ("s", Kind::Exact),
        ],
    );
    let levels = grid.levels();
    let xs = measure.quantile_grid(&grid)?;
    for (q, x) in levels.iter().zip(&xs) {
        t.push(vec![
            Cell::value(*q),
            Cell::value(*x),
            Cell::value(measure.pdf(*x)),
            Cell::value(measure.cdf(*x)?),
            Cell::value(measure.diffusion_coefficient(*x)?),
            Cell::value(measure.stein_factor_s(*x)?),
        ])?;
    }
    let (sup_s, at) = measure.sup_s(&grid)?;
    o.constants.insert("mean".into(), measure.mean());
    o.constants.insert("median".into(), measure.median());
    o.constants.insert("cross_constant".into(), measure.cross_constant()?);
    o.constants.insert("sup_s".into(), sup_s);
    o.constants.insert("sup_s_at".into(), at);
    let diag = measure.edge_condition_report();
    o.caveats.push(format!("edge conditions: {}", serde_json::to_string(&diag)?));
    let a = t.column("a")?;
    o.check(
        "diffusion coefficient finite and positive",
        a.iter().all(|v| v.is_finite() && *v > 0.0),
        format!("{} nodes", a.len()),
    );
    o.plots.push(Plot {
        name: "a".into(),
        title: format!("a(x) for {}", measure.name()),
        x_label: "x".into(),
        y_label: "a(x)".into(),
        log_log: false,
        series: vec![Series {
            label: "a".into(),
            points: xs.iter().copied().zip(a).collect(),
        }],
    });
    o.tables.push(t);
    o.finish(out)
}

/// Summary of `stein verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteinVerifyReport {
    pub measure: String,
    pub grid_nodes: usize,
    pub sup_s: f64,
    pub sup_s_refined: f64,
    pub sup_s_relative_change: f64,
    pub cross_constant: f64,
    pub bounds: Vec<BoundReport>,
    pub pass: bool,
}

/// Check the three sup-norm bounds for the standard test-function family.
pub fn cmd_stein_verify(measure: &TargetMeasure, grid_nodes: usize, out_file: &Path) -> Result<SteinVerifyReport> {
    let grid = GridSpec::new(grid_nodes);
    let (sup_s, _) = measure.sup_s(&grid)?;
    let (sup_fine, _) = measure.sup_s(&grid.refined())?;
    let change = (sup_fine - sup_s).abs() / sup_s.abs().max(f64::MIN_POSITIVE);
    let mut bounds = Vec::new();
    for h in family(measure)? {
        bounds.extend(verify_bounds(measure, h.as_ref(), &grid, Some(sup_s))?);
    }
    let pass = bounds.iter().all(|b| b.pass) && change <= 0.05;
    let r = SteinVerifyReport {
        measure: measure.name().into(),
        grid_nodes,
        sup_s,
        sup_s_refined: sup_fine,
        sup_s_relative_change: change,
        cross_constant: measure.cross_constant()?,
        bounds,
        pass,
    };
    if let Some(dir) = out_file.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(&r)?;
    text.push('\n');
    std::fs::write(out_file, text)?;
    Ok(r)
}

fn gamma_w1(n: usize, m: usize, pairs: usize, seed: u64) -> Result<f64> {
    let dim = 2 * n - m;
    // Common random numbers: G reuses the normalized A-sum and V' redraws only the shared coordinates.
    let rows: Vec<Result<Vec<[f64; 4]>>> = map_chunks(pairs, seed, |rng, count| {
        let mut xi = vec![0.0; dim];
        let mut fresh = vec![0.0; m];
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            fill_standard_normal(rng, &mut xi);
            fill_standard_normal(rng, &mut fresh);
            let s = gamma_pair_sample(n, m, &xi)?;
            let z = xi[..n].iter().sum::<f64>() / (n as f64).sqrt();
            xi[..m].copy_from_slice(&fresh);
            let v_copy = gamma_pair_sample(n, m, &xi)?.v;
            out.push([s.u, s.v, z * z - 1.0, v_copy]);
        }
        Ok(out)
    });
    let mut joint = Vec::with_capacity(2 * pairs);
    let mut product = Vec::with_capacity(2 * pairs);
    for r in rows {
        for [u, v, g, vc] in r? {
            joint.extend([u, v]);
            product.extend([g, vc]);
        }
    }
    w1_exact(&SampleCloud::new("(U_N, V_N)", 2, joint)?, &SampleCloud::new("(G, V_N')", 2, product)?)
}

/// Two-dimensional Gamma pair `(U_N, V_N)` sharing `m(N)` coordinates.
pub fn cmd_gamma2d(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let mut o = Output::new("gamma2d", cfg.provenance()?);
    let target = centered_gamma();
    let (sup_s, _) = target.sup_s(&GridSpec::new(cfg.grid_nodes))?;
    let c = target.cross_constant()?;
    o.constants.insert("sup_s".into(), sup_s);
    o.constants.insert("cross_constant".into(), c);

    let mut exact = Table::new(
        "exact",
        &[
            ("n", Kind::Param),
            ("m", Kind::Param),
            ("cross_moment", Kind::Exact),
            ("contraction_norm", Kind::Exact),
            ("contraction_norm_closed_form", Kind::Exact),
            ("closed_form_ratio", Kind::Exact),
            ("second_moment_dudv", Kind::Exact),
            ("uv", Kind::MonteCarlo),
            ("dudv_sq", Kind::MonteCarlo),
        ],
    );
    for (k, &[n, m]) in cfg.gamma_exact_pairs.iter().enumerate() {
        let g = gamma_pair_moments(n, m)?;
        let closed = contraction_norm_closed_form(n, m)?;
        let mc = gamma_pair_terms(n, m, cfg.samples, row_seed(cfg.seed, 1, k as u64))?;
        let z_uv = (mc.uv.estimate - g.cross_moment).abs() / mc.uv.std_error.max(f64::MIN_POSITIVE);
        let z_dd = (mc.dudv_sq.estimate - g.second_moment_dudv).abs() / mc.dudv_sq.std_error.max(f64::MIN_POSITIVE);
        o.check(
            &format!("E[UV] by Monte Carlo at N={n} m={m}"),
            z_uv <= 3.0,
            format!("exact {} MC {} ({z_uv:.2} SE)", g.cross_moment, mc.uv.estimate),
        );
        o.check(
            &format!("E[<DU,DV>^2] by Monte Carlo at N={n} m={m}"),
            z_dd <= 3.0,
            format!("exact {} MC {} ({z_dd:.2} SE)", g.second_moment_dudv, mc.dudv_sq.estimate),
        );
        exact.push(vec![
            Cell::value(n as f64),
            Cell::value(m as f64),
            Cell::value(exact_cross_moment(n, m)?),
            Cell::value(g.contraction_norm),
            Cell::value(closed),
            Cell::value(if g.contraction_norm > 0.0 {
                closed / g.contraction_norm
            } else {
                f64::NAN
            }),
            Cell::value(g.second_moment_dudv),
            Cell::mc(&mc.uv),
            Cell::mc(&mc.dudv_sq),
        ])?;
    }
    o.tables.push(exact);

    let mut rows = Table::new(
        "rows",
        &[
            ("n", Kind::Param),
            ("m", Kind::Param),
            ("m_over_n", Kind::Param),
            ("cross_moment", Kind::Exact),
            ("contraction_norm", Kind::Exact),
            ("second_moment_dudv", Kind::Exact),
            ("discrepancy", Kind::MonteCarlo),
            ("discrepancy_rms", Kind::MonteCarlo),
            ("cross", Kind::MonteCarlo),
            ("cross_rms", Kind::MonteCarlo),
            ("outside_fraction", Kind::MonteCarlo),
            ("rhs_l1", Kind::MonteCarlo),
            ("rhs_l2", Kind::MonteCarlo),
            ("w1", Kind::Empirical),
        ],
    );
    let mut max_outside = 0.0f64;
    for (k, &n) in cfg.gamma_n.iter().enumerate() {
        let m = cfg.m_for(n)?;
        let seed = row_seed(cfg.seed, 2, k as u64);
        let g = gamma_pair_moments(n, m)?;
        let t = gamma_pair_terms(n, m, cfg.samples, seed)?;
        let frac = t.outside as f64 / t.total as f64;
        max_outside = max_outside.max(frac);
        if frac > cfg.gamma_outside_limit {
            return Err(Error::OutsideSupport {
                outside: t.outside as usize,
                total: t.total as usize,
                limit_fraction: cfg.gamma_outside_limit,
            });
        }
        let b = IndependenceBound::assemble(target.name(), sup_s, c, t.discrepancy.clone(), vec![t.cross.clone()], t.outside, t.total);
        let w1 = if cfg.w1_samples > 0 {
            Cell::empirical(gamma_w1(n, m, cfg.w1_samples, row_seed(cfg.seed, 3, k as u64))?, cfg.w1_samples)
        } else {
            Cell::empirical(f64::NAN, 0)
        };
        let (dr, dr_se) = t.discrepancy.rms();
        let (cr, cr_se) = t.cross.rms();
        let frac_se = (frac * (1.0 - frac) / t.total as f64).sqrt();
        rows.push(vec![
            Cell::value(n as f64),
            Cell::value(m as f64),
            Cell::value(m as f64 / n as f64),
            Cell::value(g.cross_moment),
            Cell::value(g.contraction_norm),
            Cell::value(g.second_moment_dudv),
            Cell::mc(&t.discrepancy.abs),
            Cell::mc_raw(dr, dr_se, cfg.samples),
            Cell::mc(&t.cross.abs),
            Cell::mc_raw(cr, cr_se, cfg.samples),
            Cell::mc_raw(frac, frac_se, cfg.samples),
            Cell::mc_raw(b.rhs_l1, b.rhs_l1_se, cfg.samples),
            Cell::mc_raw(b.rhs_l2, b.rhs_l2_se, cfg.samples),
            w1,
        ])?;
    }
    let w1s = rows.column("w1")?;
    let rhs = rows.column("rhs_l1")?;
    let ns = rows.column("n")?;
    let cross = rows.column("cross")?;
    let ratio: Vec<f64> = cross.iter().zip(rows.column("m_over_n")?).map(|(c, r)| c / r).collect();
    let disc = rows.column("discrepancy")?;
    o.tables.push(rows);
    o.caveats.push(W1_CAVEAT.into());
    o.caveats.push(format!(
        "U_N leaves the support (-1, inf) with positive probability (largest observed fraction {max_outside:.4}); a(x) = 4(x+1) is used on the whole line"
    ));
    o.caveats
        .push("empirical W1 compares (U_N, V_N) with (G, V_N') where G = Z^2 - 1 and V_N' is an independent copy".into());
    if cfg.w1_samples > 0 {
        let rhs_se: Vec<f64> = o.table("rows")?.rows.iter().map(|r| r[11].se).collect();
        let ok = w1s.iter().zip(&rhs).zip(&rhs_se).all(|((w, r), s)| *w <= r + 3.0 * s);
        o.check("empirical W1 <= RHS + 3 SE", ok, format!("w1 {w1s:?} rhs {rhs:?}"));
    }
    if ns.len() >= 3 {
        let fd = o.add_fit("discrepancy vs N", "rows", "n", "discrepancy")?;
        o.check(
            "discrepancy slope -0.5 +/- 0.1",
            within(fd.slope, -0.5, 0.1),
            format!("slope {:.4}", fd.slope),
        );
        let fm = o.add_fit("m/N vs N", "rows", "n", "m_over_n")?;
        let fc = o.add_fit("cross vs N", "rows", "n", "cross")?;
        if cfg.gamma_m == "linear" {
            let lo = ratio.iter().copied().fold(f64::INFINITY, f64::min);
            o.check("cross / (m/N) bounded away from 0 when m = N", lo > 0.05, format!("ratios {ratio:?}"));
        } else {
            o.check(
                "cross slope matches m(N)/N slope +/- 0.15",
                within(fc.slope, fm.slope, 0.15),
                format!("cross {:.4}, m/N {:.4}", fc.slope, fm.slope),
            );
        }
        let fr = o.add_fit("rhs vs N", "rows", "n", "rhs_l1")?;
        let expect = fd.slope.max(fc.slope);
        o.check(
            "RHS decays like the slower of 1/sqrt(N) and m/N",
            within(fr.slope, expect, 0.15) && fr.slope < 0.0,
            format!("rhs {:.4}, slower component {:.4}", fr.slope, expect),
        );
    }
    o.plots.push(Plot {
        name: "rates".into(),
        title: "Gamma pair terms".into(),
        x_label: "N".into(),
        y_label: "estimate".into(),
        log_log: true,
        series: vec![
            Series {
                label: "discrepancy".into(),
                points: ns.iter().copied().zip(disc).collect(),
            },
            Series {
                label: "cross".into(),
                points: ns.iter().copied().zip(cross).collect(),
            },
            Series {
                label: "RHS".into(),
                points: ns.iter().copied().zip(rhs).collect(),
            },
        ],
    });
    o.finish(out)
}

/// Joint and product clouds for the uniform pair with common random numbers:
/// the product cloud replaces `U` inside `U_N` by an independent copy.
pub fn uniform_clouds(rho: f64, pairs: usize, seed: u64) -> Result<(SampleCloud, SampleCloud)> {
    uniform_pair(rho)?;
    let c = (1.0 - rho * rho).sqrt();
    let parts: Vec<Vec<[f64; 3]>> = map_chunks(pairs, seed, |rng, count| {
        (0..count)
            .map(|_| {
                let mut p = [0.0; 5];
                fill_standard_normal(rng, &mut p);
                let [u, v, zeta, w, u_copy] = p;
                let x = (-0.5 * (u * u + v * v)).exp();
                let un = rho * u + c * zeta;
                let un_copy = rho * u_copy + c * zeta;
                [x, (-0.5 * (un * un + w * w)).exp(), (-0.5 * (un_copy * un_copy + w * w)).exp()]
            })
            .collect()
    });
    let mut joint = Vec::with_capacity(2 * pairs);
    let mut product = Vec::with_capacity(2 * pairs);
    for [x, y, y_copy] in parts.into_iter().flatten() {
        joint.extend([x, y]);
        product.extend([x, y_copy]);
    }
    Ok((SampleCloud::new("(X, Y_N)", 2, joint)?, SampleCloud::new("(X, Y_N')", 2, product)?))
}

/// Uniform marginals coupled through `corr(U, U_N) = rho`.
pub fn cmd_uniform(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let mut o = Output::new("uniform", cfg.provenance()?);
    let target = uniform01();
    let (sup_s, _) = target.sup_s(&GridSpec::new(cfg.grid_nodes))?;
    let c = target.cross_constant()?;
    o.constants.insert("sup_s".into(), sup_s);
    o.constants.insert("cross_constant".into(), c);
    let quad = cfg.mehler()?;
    let mut t = Table::new(
        "rows",
        &[
            ("rho", Kind::Param),
            ("abs_rho", Kind::Param),
            ("discrepancy", Kind::MonteCarlo),
            ("discrepancy_generic", Kind::MonteCarlo),
            ("cross", Kind::MonteCarlo),
            ("cross_generic", Kind::MonteCarlo),
            ("cross_over_rho", Kind::MonteCarlo),
            ("rhs_l1", Kind::MonteCarlo),
            ("rhs_l2", Kind::MonteCarlo),
            ("w1", Kind::Empirical),
        ],
    );
    let (x, _) = uniform_pair(0.0)?;
    let policy = OutsidePolicy::default();
    for (k, &rho) in cfg.uniform_rho.iter().enumerate() {
        // common random numbers across rho
        let seed = row_seed(cfg.seed, 4, 0);
        let (d_exact, _) = discrepancy_term(&target, &x, &DPath::Auto(quad.clone()), &policy, cfg.samples, seed)?;
        let (d_gen, _) = discrepancy_term(
            &target,
            &x,
            &DPath::Generic(quad.clone()),
            &policy,
            cfg.check_samples,
            row_seed(cfg.seed, 5, k as u64),
        )?;
        let (spec, gen) = if rho == 0.0 {
            let z = uniform_cross_specialized(0.0, cfg.samples, seed)?;
            (z.clone(), z)
        } else {
            let chk = uniform_cross_checked(rho, cfg.check_samples, seed, &quad)?;
            (uniform_cross_specialized(rho, cfg.samples, seed)?, chk.generic)
        };
        let b = IndependenceBound::assemble(target.name(), sup_s, c, d_exact.clone(), vec![spec.clone()], 0, cfg.samples as u64);
        let w1 = if cfg.w1_samples > 0 {
            let (a, p) = uniform_clouds(rho, cfg.w1_samples, row_seed(cfg.seed, 6, 0))?;
            Cell::empirical(w1_exact(&a, &p)?, cfg.w1_samples)
        } else {
            Cell::empirical(f64::NAN, 0)
        };
        let ratio = if rho != 0.0 {
            Cell::mc_raw(spec.abs.estimate / rho.abs(), spec.abs.std_error / rho.abs(), cfg.samples)
        } else {
            Cell::mc_raw(f64::NAN, 0.0, cfg.samples)
        };
        t.push(vec![
            Cell::value(rho),
            Cell::value(rho.abs()),
            Cell::mc(&d_exact.abs),
            Cell::mc(&d_gen.abs),
            Cell::mc(&spec.abs),
            Cell::mc(&gen.abs),
            ratio,
            Cell::mc_raw(b.rhs_l1, b.rhs_l1_se, cfg.samples),
            Cell::mc_raw(b.rhs_l2, b.rhs_l2_se, cfg.samples),
            w1,
        ])?;
    }
    let rows = t.rows.clone();
    o.tables.push(t);
    o.caveats.push(W1_CAVEAT.into());
    o.caveats
        .push("joint and product clouds share every coordinate except the copy of U inside U_N".into());
    let dmax = rows.iter().map(|r| r[3].value).fold(0.0, f64::max);
    o.check("generic discrepancy <= 1e-2", dmax <= 1e-2, format!("largest {dmax:.3e}"));
    let nz: Vec<&Vec<Cell>> = rows.iter().filter(|r| r[0].value != 0.0).collect();
    if !nz.is_empty() {
        let ratios: Vec<f64> = nz.iter().map(|r| r[6].value).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let ok = ratios.iter().all(|r| (r - mean).abs() <= 0.2 * mean);
        o.check("cross / |rho| constant within 20%", ok, format!("ratios {ratios:?}"));
    }
    for r in rows.iter().filter(|r| r[0].value == 0.0) {
        o.check("rho = 0 gives zero cross term", r[4].value == 0.0, format!("{}", r[4].value));
    }
    if cfg.w1_samples > 0 {
        let ok = rows.iter().all(|r| r[9].value <= r[7].value + 3.0 * r[7].se);
        o.check(
            "empirical W1 <= RHS + 3 SE",
            ok,
            format!("{:?}", rows.iter().map(|r| (r[0].value, r[9].value, r[7].value)).collect::<Vec<_>>()),
        );
        let mut by_rho: Vec<(f64, f64)> = rows.iter().map(|r| (r[1].value, r[9].value)).collect();
        by_rho.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mono = by_rho.windows(2).all(|w| w[1].1 >= w[0].1);
        o.check("empirical W1 monotone in |rho|", mono, format!("{by_rho:?}"));
    }
    if nz.len() >= 3 {
        let nz_table = {
            let mut tt = Table::new(
                "nonzero",
                &[("abs_rho", Kind::Param), ("rhs_l1", Kind::MonteCarlo), ("w1", Kind::Empirical)],
            );
            for r in &nz {
                tt.push(vec![r[1], r[7], r[9]])?;
            }
            tt
        };
        o.tables.push(nz_table);
        let f = o.add_fit("rhs vs |rho|", "nonzero", "abs_rho", "rhs_l1")?;
        o.check("RHS linear in |rho|", within(f.slope, 1.0, 0.1), format!("slope {:.4}", f.slope));
        if cfg.w1_samples > 0 {
            o.add_fit("w1 vs |rho|", "nonzero", "abs_rho", "w1")?;
        }
    }
    o.plots.push(Plot {
        name: "distance".into(),
        title: "uniform pair".into(),
        x_label: "|rho|".into(),
        y_label: "distance".into(),
        log_log: true,
        series: vec![
            Series {
                label: "RHS".into(),
                points: nz.iter().map(|r| (r[1].value, r[7].value)).collect(),
            },
            Series {
                label: "empirical W1".into(),
                points: nz.iter().map(|r| (r[1].value, r[9].value)).collect(),
            },
        ],
    });
    o.finish(out)
}

/// `Y_N = exp(-Z_N)` with Gaussian coordinates `(W(h_n), n in I_N)`.
pub fn cmd_lognormal(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let mut o = Output::new("lognormal", cfg.provenance()?);
    let target = lognormal01();
    let (sup_s, _) = target.sup_s(&GridSpec::new(cfg.grid_nodes))?;
    let c = target.cross_constant()?;
    let c0 = lognormal_limit_constant();
    o.constants.insert("sup_s".into(), sup_s);
    o.constants.insert("cross_constant".into(), c);
    o.constants.insert("limit_constant".into(), c0);
    let analytic = (2.0 / std::f64::consts::PI).sqrt() * 0.5f64.exp();
    o.check(
        "limit constant matches its closed form",
        within(c0, analytic, 1e-10),
        format!("{c0} vs {analytic}"),
    );

    let mut t = Table::new(
        "n",
        &[
            ("n", Kind::Param),
            ("discrepancy", Kind::MonteCarlo),
            ("cross", Kind::MonteCarlo),
            ("scaled_cross", Kind::MonteCarlo),
            ("swapped_per_term", Kind::MonteCarlo),
            ("rhs_l1_one", Kind::MonteCarlo),
        ],
    );
    let mut per_n = Vec::new();
    for (k, &n) in cfg.lognormal_n.iter().enumerate() {
        let seed = row_seed(cfg.seed, 7, k as u64);
        let f = LognormalFunctional::new(n)?;
        let (disc, _) = discrepancy_term(&target, &f, &DPath::default(), &OutsidePolicy::default(), cfg.samples, seed)?;
        let cross = lognormal_cross(n, cfg.samples, seed)?;
        let sw = lognormal_swapped_bound(n, 1, cfg.samples, seed)?;
        let s = (2.0 * n as f64).sqrt();
        let b = IndependenceBound::assemble(target.name(), sup_s, c, disc.clone(), vec![cross.clone()], 0, cfg.samples as u64);
        t.push(vec![
            Cell::value(n as f64),
            Cell::mc(&disc.abs),
            Cell::mc(&cross.abs),
            Cell::mc_raw(s * cross.abs.estimate, s * cross.abs.std_error, cfg.samples),
            Cell::mc(&sw.per_term),
            Cell::mc_raw(b.rhs_l1, b.rhs_l1_se, cfg.samples),
        ])?;
        per_n.push((n, disc, cross));
    }
    let last = t.rows.last().cloned().expect("nonempty schedule");
    o.tables.push(t);
    o.check(
        "sqrt(2N) cross within 10% of the limit constant at the largest N",
        within(last[3].value, c0, 0.1 * c0),
        format!("{} vs {c0}", last[3].value),
    );
    o.check(
        "swapped per-term within 10% of the limit at the largest N",
        within(last[4].value, analytic, 0.1 * analytic),
        format!("{} vs {analytic}", last[4].value),
    );
    if cfg.lognormal_n.len() >= 3 {
        let f = o.add_fit("cross vs N", "n", "n", "cross")?;
        o.check("cross slope -0.5 +/- 0.1", within(f.slope, -0.5, 0.1), format!("slope {:.4}", f.slope));
        o.add_fit("discrepancy vs N", "n", "n", "discrepancy")?;
    }

    let (n_fix, disc, cross) = per_n.last().cloned().expect("nonempty schedule");
    let mut ti = Table::new(
        "i",
        &[
            ("n", Kind::Param),
            ("i_size", Kind::Param),
            ("cross_total", Kind::MonteCarlo),
            ("swapped_total", Kind::MonteCarlo),
            ("swapped_total_per_i", Kind::MonteCarlo),
            ("rhs_l1", Kind::MonteCarlo),
            ("rhs_l2", Kind::MonteCarlo),
        ],
    );
    for (k, &i) in cfg.lognormal_i.iter().enumerate() {
        if i > n_fix {
            continue;
        }
        let sw = lognormal_swapped_bound(n_fix, i, cfg.samples, row_seed(cfg.seed, 8, k as u64))?;
        let b = IndependenceBound::assemble(target.name(), sup_s, c, disc.clone(), vec![cross.clone(); i], 0, cfg.samples as u64);
        let fi = i.max(1) as f64;
        ti.push(vec![
            Cell::value(n_fix as f64),
            Cell::value(i as f64),
            Cell::mc_raw(i as f64 * cross.abs.estimate, i as f64 * cross.abs.std_error, cfg.samples),
            Cell::mc(&sw.total),
            Cell::mc_raw(sw.total.estimate / fi, sw.total.std_error / fi, cfg.samples),
            Cell::mc_raw(b.rhs_l1, b.rhs_l1_se, cfg.samples),
            Cell::mc_raw(b.rhs_l2, b.rhs_l2_se, cfg.samples),
        ])?;
    }
    let per_i: Vec<(f64, f64)> = ti.rows.iter().filter(|r| r[1].value > 0.0).map(|r| (r[4].value, r[4].se)).collect();
    o.tables.push(ti);
    if per_i.len() >= 2 {
        let ok = per_i
            .iter()
            .all(|a| per_i.iter().all(|b| (a.0 - b.0).abs() <= 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt()));
        o.check("swapped total linear in I within 3 SE", ok, format!("{per_i:?}"));
    }
    o.plots.push(Plot {
        name: "cross".into(),
        title: "lognormal cross term".into(),
        x_label: "N".into(),
        y_label: "E|<D(-L)^-1 Y_N, h_1>|".into(),
        log_log: true,
        series: vec![Series {
            label: "cross".into(),
            points: per_n.iter().map(|(n, _, c)| (*n as f64, c.abs.estimate)).collect(),
        }],
    });
    o.finish(out)
}

/// Draw `count` values from `measure` by inverse transform; used by examples.
pub fn draw_from(measure: &TargetMeasure, count: usize, seed: u64) -> Result<Vec<f64>> {
    let parts: Vec<Result<Vec<f64>>> = map_chunks(count, seed, |rng, k| (0..k).map(|_| measure.sample_from_uniform(rng.gen())).collect());
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

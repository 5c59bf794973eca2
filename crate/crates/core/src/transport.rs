//! Empirical Wasserstein-1 distances between equal-size point clouds and
//! log-log rate fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default largest cloud size accepted by [`w1_exact`].
pub const ASSIGNMENT_CAP: usize = 4096;

/// Attached to every reported empirical distance.
pub const W1_CAVEAT: &str = "empirical W1 on finite samples is biased; no correction applied";

/// `n` points in `R^d`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCloud {
    pub label: String,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SampleCloud {
    pub fn new(label: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "cloud needs n >= 1 points of dimension {dim}, got {} values",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "sample cloud".into(),
                value: *v,
            });
        }
        Ok(Self {
            label: label.into(),
            dim,
            data,
        })
    }

    pub fn from_points(label: impl Into<String>, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("points of unequal dimension".into()));
        }
        Self::new(label, dim, points.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_pair(a: &SampleCloud, b: &SampleCloud) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Sorted coupling in one dimension.
pub fn w1_1d(a: &SampleCloud, b: &SampleCloud) -> Result<f64> {
    check_pair(a, b)?;
    if a.dim != 1 {
        return Err(Error::InvalidArgument(format!("w1_1d needs d = 1, got {}", a.dim)));
    }
    let mut x = a.data.clone();
    let mut y = b.data.clone();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let s: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
    Ok(s / x.len() as f64)
}

fn euclid(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Minimum-cost perfect matching of an `n x n` cost matrix (row-major).
/// Returns the optimal cost and, for each row, its column.
pub fn assignment(cost: &[f64], n: usize) -> Result<(f64, Vec<usize>)> {
    if cost.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: cost.len(),
        });
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    // shortest augmenting paths with row and column potentials, 1-based with a dummy column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0usize; n];
    for j in 1..=n {
        rows[p[j] - 1] = j - 1;
    }
    let total: f64 = rows.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total, rows))
}

/// Exact equal-weight empirical W1 under the Euclidean cost.
pub fn w1_exact(a: &SampleCloud, b: &SampleCloud) -> Result<f64> {
    w1_exact_with_cap(a, b, ASSIGNMENT_CAP)
}

pub fn w1_exact_with_cap(a: &SampleCloud, b: &SampleCloud, cap: usize) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    if n > cap {
        return Err(Error::AssignmentCap { n, cap });
    }
    let cost: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (0..n).map(move |j| euclid(a.point(i), b.point(j))))
        .collect();
    let (total, _) = assignment(&cost, n)?;
    Ok(total / n as f64)
}

/// Least-squares line through `(ln scale, ln value)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub points: usize,
}

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("rate fit needs at least 3 points, got {}", points.len())));
    }
    if let Some((s, v)) = points.iter().find(|(s, v)| !(*s > 0.0 && *v > 0.0 && s.is_finite() && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("rate fit needs positive finite inputs, got ({s}, {v})")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs at least two distinct scales".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual_rms: (rss / n).sqrt(),
        points: points.len(),
    })
}

//! Chunked Monte Carlo with per-chunk random streams.
//!
//! Chunk `k` of a run seeded with `seed` always draws from the ChaCha8 stream
//! `(seed, k)`, and chunk summaries are merged in chunk order, so results do not
//! depend on how many worker threads execute the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per chunk. Part of the reproducibility contract: changing it changes results.
pub const CHUNK_SIZE: usize = 4096;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "STEIN_WORKERS";

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Worker count from `STEIN_WORKERS`, defaulting to the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Run `f` on a dedicated pool with `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Sample count, mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

fn chunk_bounds(n: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(CHUNK_SIZE))
        .map(|k| (k as u64, CHUNK_SIZE.min(n - k * CHUNK_SIZE)))
        .collect()
}

/// Apply `f(rng, count)` to every chunk and return the outputs in chunk order.
pub fn map_chunks<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    chunk_bounds(n)
        .into_par_iter()
        .map(|(k, count)| {
            let mut rng = chunk_rng(seed, k);
            f(&mut rng, count)
        })
        .collect()
}

/// Moments of several per-sample statistics at once.
pub fn sample_moments<const K: usize, F>(n: usize, seed: u64, f: F) -> Result<[Moments; K]>
where
    F: Fn(&mut ChaCha8Rng) -> Result<[f64; K]> + Sync,
{
    let parts: Vec<Result<[Moments; K]>> = map_chunks(n, seed, |rng, count| {
        let mut acc = [Moments::default(); K];
        for _ in 0..count {
            let v = f(rng)?;
            for (a, x) in acc.iter_mut().zip(v) {
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        context: "Monte Carlo sample".into(),
                        value: x,
                    });
                }
                a.push(x);
            }
        }
        Ok(acc)
    });
    let mut total = [Moments::default(); K];
    for p in parts {
        let p = p?;
        for (t, m) in total.iter_mut().zip(p.iter()) {
            *t = t.merge(m);
        }
    }
    Ok(total)
}

/// [`sample_moments`] with the number of statistics fixed at run time.
pub fn sample_moments_dyn<F>(n: usize, seed: u64, k: usize, f: F) -> Result<Vec<Moments>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let parts: Vec<Result<Vec<Moments>>> = map_chunks(n, seed, |rng, count| {
        let mut acc = vec![Moments::default(); k];
        let mut buf = vec![0.0; k];
        for _ in 0..count {
            f(rng, &mut buf)?;
            for (a, &x) in acc.iter_mut().zip(&buf) {
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        context: "Monte Carlo sample".into(),
                        value: x,
                    });
                }
                a.push(x);
            }
        }
        Ok(acc)
    });
    let mut total = vec![Moments::default(); k];
    for p in parts {
        for (t, m) in total.iter_mut().zip(p?.iter()) {
            *t = t.merge(m);
        }
    }
    Ok(total)
}

/// Mean and standard error of a scalar statistic.
pub fn sample_mean<F>(n: usize, seed: u64, f: F) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let [m] = sample_moments::<1, _>(n, seed, |rng| Ok([f(rng)?]))?;
    Ok(m)
}

pub fn standard_normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Deterministic standard Gaussian vectors in dimension `dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianSampler {
    pub dim: usize,
    pub seed: u64,
}

impl GaussianSampler {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    /// `n` draws laid out row-major (`n * dim` values).
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let dim = self.dim;
        map_chunks(n, self.seed, |rng, count| {
            let mut buf = vec![0.0; count * dim];
            fill_standard_normal(rng, &mut buf);
            buf
        })
        .concat()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
    pub config: String,
}

impl EstimatorResult {
    pub fn from_moments(m: &Moments, seed: u64, config: impl Into<String>) -> Self {
        Self {
            estimate: m.mean,
            std_error: m.std_error(),
            n: m.n as usize,
            seed,
            config: config.into(),
        }
    }

    pub fn exact(value: f64, config: impl Into<String>) -> Self {
        Self {
            estimate: value,
            std_error: 0.0,
            n: 0,
            seed: 0,
            config: config.into(),
        }
    }

    /// Number of combined standard errors separating two estimates.
    pub fn sigmas_from(&self, other: &EstimatorResult) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        let d = (self.estimate - other.estimate).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        let m = a.merge(&b);
        assert_eq!(m.n, all.n);
        assert!((m.mean - all.mean).abs() < 1e-12);
        assert!((m.m2 - all.m2).abs() < 1e-9);
    }

    #[test]
    fn identical_across_worker_counts() {
        let run = || {
            sample_mean(20_000, 7, |rng| {
                let x: f64 = rng.gen();
                Ok(x * x)
            })
            .unwrap()
        };
        let one = with_workers(1, run);
        let eight = with_workers(8, run);
        assert_eq!(one.mean.to_bits(), eight.mean.to_bits());
        assert_eq!(one.m2.to_bits(), eight.m2.to_bits());
        assert!((one.mean - 1.0 / 3.0).abs() < 4.0 * one.std_error());
    }

    #[test]
    fn gaussian_sampler_is_deterministic() {
        let s = GaussianSampler::new(3, 11);
        let a = with_workers(1, || s.sample(10_000));
        let b = with_workers(8, || s.sample(10_000));
        assert_eq!(a, b);
        assert_eq!(a.len(), 30_000);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.03);
        assert_ne!(a, GaussianSampler::new(3, 12).sample(10_000));
    }

    #[test]
    fn chunk_streams_differ() {
        let mut r0 = chunk_rng(1, 0);
        let mut r1 = chunk_rng(1, 1);
        let a: u64 = r0.gen();
        let b: u64 = r1.gen();
        assert_ne!(a, b);
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let r = sample_mean(10, 1, |_| Ok(f64::NAN));
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}

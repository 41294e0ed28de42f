//! Monte Carlo bookkeeping: estimates with standard errors, streaming moments,
//! and a chunked parallel driver whose output does not depend on the number
//! of worker threads.
//!
//! Every stochastic routine in the crate funnels through [`run_chunks`]. The
//! sample budget is cut into fixed-size chunks; chunk `c` draws from a ChaCha
//! stream selected by `(seed, c)`, and the per-chunk partial results are
//! merged in chunk order. A run is therefore a pure function of
//! `(samples, seed)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per chunk. Fixed so that results are independent of worker count.
pub const CHUNK_SIZE: usize = 4096;

pub type Rng = ChaCha8Rng;

/// A Monte Carlo (or quadrature) value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, samples: 0, seed: 0 }
    }

    pub fn with_meta(value: f64, stderr: f64, samples: u64, seed: u64) -> Self {
        Estimate { value, stderr, samples, seed }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.stderr.is_finite()
    }

    /// `|self - other|` measured in combined standard errors. Two exact values
    /// that differ give `inf`; two equal values give 0.
    pub fn sigma_distance(&self, other: &Estimate) -> f64 {
        let diff = (self.value - other.value).abs();
        let s = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        if diff == 0.0 {
            0.0
        } else {
            diff / s
        }
    }

    /// Distance from a known constant, in standard errors.
    pub fn sigma_from(&self, target: f64) -> f64 {
        self.sigma_distance(&Estimate::exact(target))
    }

    pub fn scale(&self, c: f64) -> Self {
        Estimate { value: self.value * c, stderr: self.stderr * c.abs(), ..*self }
    }

    /// `value^e` with first-order error propagation.
    pub fn powf(&self, e: f64) -> Self {
        let value = self.value.powf(e);
        let stderr = if self.value == 0.0 {
            if e < 1.0 {
                // derivative blows up at 0; report the error of the transformed bound
                self.stderr.powf(e)
            } else {
                0.0
            }
        } else {
            (e * self.value.powf(e - 1.0)).abs() * self.stderr
        };
        Estimate { value, stderr, ..*self }
    }

    /// Quotient of two independent estimates.
    pub fn ratio(&self, den: &Estimate) -> Self {
        let value = self.value / den.value;
        let rel = if self.value == 0.0 {
            self.stderr / den.value.abs()
        } else {
            ((self.stderr / self.value).powi(2) + (den.stderr / den.value).powi(2)).sqrt()
                * value.abs()
        };
        Estimate {
            value,
            stderr: rel,
            samples: self.samples.max(den.samples),
            seed: self.seed,
        }
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Self {
        Estimate {
            value: self.value - other.value,
            stderr: (self.stderr.powi(2) + other.stderr.powi(2)).sqrt(),
            samples: self.samples.max(other.samples),
            seed: self.seed,
        }
    }
}

/// Streaming mean/variance (Welford) with a parallel merge (Chan et al.).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate::with_meta(self.mean, self.stderr(), self.count, seed)
    }
}

/// Joint moments of several quantities evaluated on the same samples; used
/// wherever differences or ratios need common-random-number error bars.
#[derive(Clone, Debug)]
pub struct CoMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl CoMoments {
    pub fn new(dim: usize) -> Self {
        CoMoments { count: 0, mean: vec![0.0; dim], comoment: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, xs: &[f64]) {
        let d = self.dim();
        debug_assert_eq!(xs.len(), d);
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = xs.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for i in 0..d {
            let after_i = xs[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += delta[j] * after_i;
            }
        }
    }

    pub fn merge(&mut self, other: &CoMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] +=
                    other.comoment[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.count += other.count;
    }

    /// Covariance matrix of the sample means (row-major).
    pub fn mean_covariance(&self) -> Vec<f64> {
        let d = self.dim();
        if self.count < 2 {
            return vec![0.0; d * d];
        }
        let scale = 1.0 / ((self.count - 1) as f64 * self.count as f64);
        self.comoment.iter().map(|c| c * scale).collect()
    }

    pub fn marginal(&self, i: usize, seed: u64) -> Estimate {
        let d = self.dim();
        let var = self.mean_covariance()[i * d + i];
        Estimate::with_meta(self.mean[i], var.max(0.0).sqrt(), self.count, seed)
    }

    /// First-order (delta-method) error of `g(means)` given its gradient.
    pub fn delta_stderr(&self, gradient: &[f64]) -> f64 {
        let d = self.dim();
        let cov = self.mean_covariance();
        let mut v = 0.0;
        for i in 0..d {
            for j in 0..d {
                v += gradient[i] * gradient[j] * cov[i * d + j];
            }
        }
        v.max(0.0).sqrt()
    }
}

/// Sampling budget and reproducibility knobs shared by every estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool. Results do not
    /// depend on this value.
    pub workers: Option<usize>,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        McConfig { samples, seed, workers: None }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    /// A decorrelated configuration for a sub-estimator.
    pub fn derive(&self, salt: u64) -> Self {
        McConfig { seed: mix_seed(self.seed, salt), ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Parameter("sample count must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Parameter("worker count must be positive".into()));
        }
        Ok(())
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig::new(100_000, 0)
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Deterministic single stream, for small sequential sampling tasks.
pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Runs `body(rng, count)` over the chunks of `cfg.samples` and returns the
/// per-chunk results in chunk order.
pub fn run_chunks<T, F>(cfg: &McConfig, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng, usize) -> T + Sync + Send,
{
    let chunks = cfg.samples.div_ceil(CHUNK_SIZE);
    let job = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let count = CHUNK_SIZE.min(cfg.samples - c * CHUNK_SIZE);
                let mut rng = chunk_rng(cfg.seed, c as u64);
                body(&mut rng, count)
            })
            .collect::<Vec<T>>()
    };
    match cfg.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        },
        None => job(),
    }
}

/// Sample mean of `sample(rng)` over the configured budget.
pub fn mc_mean<F>(cfg: &McConfig, sample: F) -> Estimate
where
    F: Fn(&mut Rng) -> f64 + Sync + Send,
{
    let parts = run_chunks(cfg, |rng, count| {
        let mut m = Moments::default();
        for _ in 0..count {
            m.push(sample(rng));
        }
        m
    });
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total.estimate(cfg.seed)
}

/// Joint sample means of a vector-valued sampler (common random numbers).
pub fn mc_joint<F>(cfg: &McConfig, dim: usize, sample: F) -> CoMoments
where
    F: Fn(&mut Rng, &mut [f64]) + Sync + Send,
{
    let parts = run_chunks(cfg, |rng, count| {
        let mut m = CoMoments::new(dim);
        let mut buf = vec![0.0; dim];
        for _ in 0..count {
            sample(rng, &mut buf);
            m.push(&buf);
        }
        m
    });
    let mut total = CoMoments::new(dim);
    for p in &parts {
        total.merge(p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn comoments_merge_matches_sequential() {
        let mut all = CoMoments::new(2);
        let mut a = CoMoments::new(2);
        let mut b = CoMoments::new(2);
        for i in 0..500 {
            let x = [(i as f64).sin(), (i as f64 * 0.3).cos() + i as f64 * 0.01];
            all.push(&x);
            if i < 200 {
                a.push(&x)
            } else {
                b.push(&x)
            }
        }
        a.merge(&b);
        let (ca, cb) = (a.mean_covariance(), all.mean_covariance());
        for (x, y) in ca.iter().zip(&cb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = McConfig::new(50_000, 11);
        let f = |rng: &mut Rng| rng.random::<f64>().powi(2);
        let one = mc_mean(&cfg.with_workers(1), f);
        let four = mc_mean(&cfg.with_workers(4), f);
        assert_eq!(one, four);
        assert!(one.sigma_from(1.0 / 3.0) < 4.0);
    }

    #[test]
    fn ratio_and_power_propagate_errors() {
        let a = Estimate::with_meta(2.0, 0.02, 10, 0);
        let b = Estimate::with_meta(4.0, 0.04, 10, 0);
        let r = a.ratio(&b);
        assert!((r.value - 0.5).abs() < 1e-15);
        assert!((r.stderr - 0.5 * (2.0f64).sqrt() * 0.01).abs() < 1e-12);
        let p = b.powf(0.5);
        assert!((p.value - 2.0).abs() < 1e-15);
        assert!((p.stderr - 0.01).abs() < 1e-12);
    }
}

//! Deterministic Monte Carlo expectations and Gauss–Hermite quadrature.
//!
//! Sample `i` draws its randomness from a generator seeded only by
//! `(seed, i)`, and per-sample values are reduced with a fixed pairwise
//! tree. Estimates are therefore bit-identical for any batch size or
//! number of rayon workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Samples per parallel work item. Affects scheduling only.
    pub batch_size: usize,
}

impl MCConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        MCConfig {
            n_samples,
            seed,
            batch_size: 256,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        MCConfig { seed, ..self }
    }

    pub fn with_samples(self, n_samples: usize) -> Self {
        MCConfig { n_samples, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig::new(10_000, 0)
    }
}

/// A Monte Carlo (or exact) estimate of an expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Estimate {
    /// A closed-form value: zero standard error, no samples.
    pub fn exact(mean: f64) -> Self {
        Estimate {
            mean,
            stderr: 0.0,
            n_samples: 0,
            seed: 0,
        }
    }

    /// Sum of independent estimates, standard errors added in quadrature.
    pub fn sum(parts: &[Estimate]) -> Self {
        let mean = pairwise_sum(&parts.iter().map(|e| e.mean).collect::<Vec<_>>());
        let var = pairwise_sum(&parts.iter().map(|e| e.stderr * e.stderr).collect::<Vec<_>>());
        Estimate {
            mean,
            stderr: var.sqrt(),
            n_samples: parts.iter().map(|e| e.n_samples).sum(),
            seed: parts.first().map(|e| e.seed).unwrap_or(0),
        }
    }

    /// Arithmetic mean of independent estimates.
    pub fn average(parts: &[Estimate]) -> Self {
        let k = parts.len().max(1) as f64;
        let s = Estimate::sum(parts);
        Estimate {
            mean: s.mean / k,
            stderr: s.stderr / k,
            ..s
        }
    }

    pub fn offset(self, delta: f64) -> Self {
        Estimate {
            mean: self.mean + delta,
            ..self
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for sample `index` of the stream `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Derive an independent sub-stream seed, e.g. for a second estimator that
/// must not share draws with the first.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed.rotate_left(17) ^ splitmix64(tag))
}

/// Draw from CN(0, variance).
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    c(scale * a, scale * b)
}

/// Sum with a fixed binary-tree topology.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean and standard error of i.i.d. values.
pub fn summarize(values: &[f64], seed: u64) -> Estimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let stderr = if n > 1 {
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&dev) / (n as f64 - 1.0) / n as f64).sqrt()
    } else {
        0.0
    };
    Estimate {
        mean,
        stderr,
        n_samples: n,
        seed,
    }
}

/// Evaluate `f(i, rng_i)` for every sample index and return the raw values
/// in index order.
pub fn sample_values<F>(mc: &MCConfig, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut ChaCha8Rng) -> f64 + Sync,
{
    mc.validate()?;
    let batch = mc.batch_size.max(1);
    let mut values = vec![0.0; mc.n_samples];
    values
        .par_chunks_mut(batch)
        .enumerate()
        .for_each(|(b, chunk)| {
            for (k, slot) in chunk.iter_mut().enumerate() {
                let i = b * batch + k;
                let mut rng = sample_rng(mc.seed, i as u64);
                *slot = f(i, &mut rng);
            }
        });
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(values)
}

/// Generic i.i.d. Monte Carlo mean.
pub fn expect<F>(mc: &MCConfig, f: F) -> Result<Estimate>
where
    F: Fn(usize, &mut ChaCha8Rng) -> f64 + Sync,
{
    let values = sample_values(mc, f)?;
    Ok(summarize(&values, mc.seed))
}

/// `E[f(s)]` for `s ~ CN(0, variance)`.
pub fn expect_complex_gaussian<F>(f: F, variance: f64, mc: &MCConfig) -> Result<Estimate>
where
    F: Fn(C64) -> f64 + Sync,
{
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument(format!("variance {variance} must be >= 0")));
    }
    if variance == 0.0 {
        let v = f(c(0.0, 0.0));
        if !v.is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
        return Ok(Estimate {
            mean: v,
            stderr: 0.0,
            n_samples: 0,
            seed: mc.seed,
        });
    }
    expect(mc, |_, rng| f(complex_normal(rng, variance)))
}

/// Gauss–Hermite nodes and weights for the weight `e^{-x²}` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Product-rule Gauss–Hermite quadrature of `E[f(s)]`, `s ~ CN(0, variance)`.
pub fn gauss_hermite_2d<F>(f: F, variance: f64, nodes: usize) -> Result<f64>
where
    F: Fn(C64) -> f64,
{
    if nodes < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 nodes per axis, got {nodes}")));
    }
    let (x, w) = gauss_hermite(nodes);
    let scale = variance.max(0.0).sqrt();
    let mut terms = Vec::with_capacity(nodes * nodes);
    for (xa, wa) in x.iter().zip(&w) {
        for (xb, wb) in x.iter().zip(&w) {
            terms.push(wa * wb * f(c(scale * xa, scale * xb)));
        }
    }
    Ok(pairwise_sum(&terms) / std::f64::consts::PI)
}

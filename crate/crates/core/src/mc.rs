//! Reproducible Monte-Carlo engine with keyed substreams and exact accumulation.
//!
//! Draw `i` of a run is produced by substream `i mod n_streams`, and each
//! substream is the ChaCha keystream selected by `(seed, stream index)`. The
//! output of a run therefore depends only on `(seed, n_streams, n_samples)`,
//! never on how many worker threads execute it.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{domain, usage, Error, Result};

/// Random source handed to every sampler.
pub type StreamRng = ChaCha12Rng;

/// Run-level Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub n_streams: usize,
    pub ci_level: f64,
}

impl McConfig {
    pub fn new(seed: u64, n_samples: usize, n_streams: usize) -> Result<Self> {
        let cfg = McConfig { seed, n_samples, n_streams, ci_level: 0.95 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(domain("McConfig", "n_samples must be positive"));
        }
        if self.n_streams == 0 || self.n_streams > self.n_samples {
            return Err(domain("McConfig", format!("n_streams {} must lie in 1..={}", self.n_streams, self.n_samples)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(domain("McConfig", format!("ci_level {} not in (0, 1)", self.ci_level)));
        }
        Ok(())
    }

    /// Same seed and streams with a different sample count.
    pub fn with_samples(&self, n_samples: usize) -> McConfig {
        let n_samples = n_samples.max(1);
        McConfig { n_samples, n_streams: self.n_streams.min(n_samples), ..*self }
    }

    /// An independent configuration keyed off this one, used for pilot runs.
    pub fn derived(&self, label: u64, n_samples: usize) -> McConfig {
        McConfig { seed: splitmix64(self.seed ^ splitmix64(label)), ..self.with_samples(n_samples) }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// The substream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on `(0, 1]`, consuming exactly one 64-bit word.
#[inline]
pub fn uniform_open0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard exponential draw, one word.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -uniform_open0(rng).ln()
}

/// `CN(0, 1)` draw (real and imaginary parts of variance 1/2), two words.
#[inline]
pub fn complex_gaussian<R: RngCore + ?Sized>(rng: &mut R) -> Complex64 {
    let r = exponential(rng).sqrt();
    let theta = std::f64::consts::TAU * uniform_open0(rng);
    Complex64::from_polar(r, theta)
}

/// Sum of `k` standard exponentials (a Gamma(k, 1) draw), exactly `k` words.
#[inline]
pub fn gamma_sum<R: RngCore + ?Sized>(rng: &mut R, k: usize) -> f64 {
    let mut log_acc = 0.0;
    let mut prod = 1.0;
    for _ in 0..k {
        prod *= uniform_open0(rng);
        if prod < 1e-250 {
            log_acc += prod.ln();
            prod = 1.0;
        }
    }
    -(log_acc + prod.ln())
}

/// Draws `mc.n_samples` values in sample-index order.
pub fn draw_samples<F>(sampler: F, mc: &McConfig) -> Result<Vec<f64>>
where
    F: Fn(&mut StreamRng) -> Result<f64> + Sync,
{
    draw_with(sampler, mc)
}

/// As [`draw_samples`] for samplers producing any sendable value.
pub fn draw_with<T, F>(sampler: F, mc: &McConfig) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng) -> Result<T> + Sync,
{
    mc.validate()?;
    let n = mc.n_samples;
    let k = mc.n_streams;
    let per_stream: Vec<Result<Vec<T>>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(mc.seed, j as u64);
            (j..n)
                .step_by(k)
                .map(|i| sampler(&mut rng).map_err(|e| Error::Sampler { index: i, source: Box::new(e) }))
                .collect()
        })
        .collect();
    let mut streams = Vec::with_capacity(k);
    for s in per_stream {
        streams.push(s?.into_iter());
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(streams[i % k].next().expect("stream holds its share of draws"));
    }
    Ok(out)
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Order-independent accumulator: exact running sums of values and squares.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    sum: ExactSum,
    sum_sq: ExactSum,
    n: usize,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.sum.add(x);
        let (p, e) = two_product(x, x);
        self.sum_sq.add(p);
        self.sum_sq.add(e);
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.n += other.n;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn estimate(&self) -> Result<Estimate> {
        if self.n == 0 {
            return Err(usage("Accumulator::estimate", "no samples"));
        }
        let n = self.n as f64;
        let mean = self.sum.value() / n;
        if self.n == 1 {
            return Ok(Estimate { mean, stderr: 0.0, n: 1 });
        }
        // n·Σx² − (Σx)², evaluated exactly before the final rounding.
        let mut num = ExactSum::default();
        for &q in &self.sum_sq.partials {
            let (p, e) = two_product(n, q);
            num.add(p);
            num.add(e);
        }
        for &a in &self.sum.partials {
            for &b in &self.sum.partials {
                let (p, e) = two_product(a, b);
                num.add(-p);
                num.add(-e);
            }
        }
        let var = (num.value() / (n * (n - 1.0))).max(0.0);
        Ok(Estimate { mean, stderr: (var / n).sqrt(), n: self.n })
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

#[inline]
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Shewchuk-style exact floating-point sum with correctly rounded readout.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&top) = p.last() else { return 0.0 };
        let mut n = p.len() - 1;
        let mut hi = top;
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            let y = p[n - 1];
            n -= 1;
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// Mean and standard error of `sampler` over `mc.n_samples` draws.
pub fn estimate_mean<F>(sampler: F, mc: &McConfig) -> Result<Estimate>
where
    F: Fn(&mut StreamRng) -> Result<f64> + Sync,
{
    let draws = draw_samples(sampler, mc)?;
    draws.into_iter().collect::<Accumulator>().estimate()
}

/// Estimate of a precomputed sample vector.
pub fn estimate_from(values: &[f64]) -> Result<Estimate> {
    values.iter().copied().collect::<Accumulator>().estimate()
}

/// All draws of `sampler`, sorted ascending.
pub fn empirical_cdf_scan<F>(sampler: F, mc: &McConfig) -> Result<Vec<f64>>
where
    F: Fn(&mut StreamRng) -> Result<f64> + Sync,
{
    let mut draws = draw_samples(sampler, mc)?;
    draws.sort_by(f64::total_cmp);
    Ok(draws)
}

/// Percentile bootstrap interval of `statistic` at confidence `level`.
pub fn bootstrap_ci<S, R>(
    samples: &[f64],
    statistic: S,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    S: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if samples.len() < 100 {
        return Err(usage("bootstrap_ci", format!("need at least 100 samples, got {}", samples.len())));
    }
    if resamples == 0 {
        return Err(usage("bootstrap_ci", "resamples must be positive"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain("bootstrap_ci", format!("level {level} not in (0, 1)")));
    }
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = samples[rng.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&stats, tail), quantile_sorted(&stats, 1.0 - tail)))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

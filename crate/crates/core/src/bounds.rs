//! Achievability and converse bounds on the error probability and coding rate.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{posterior_params, sample_fading, BlockConfig, PatConfig, RicianParams};
use crate::error::{domain, usage, Error, Result};
use crate::infodens::{e0_noncoherent, s_from_noise, t_from_parts, NoncoherentKernelParams, PatNnKernelParams};
use crate::mc::{
    bootstrap_ci, complex_gaussian, draw_samples, draw_with, estimate_from, gamma_sum, stream_rng, Accumulator,
    McConfig, StreamRng,
};
use crate::numerics::{gaussian_q_inv, golden_section_extremum, log_sum_exp, QuadratureSpec, Sense};

/// A bound value with its Monte-Carlo uncertainty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundEstimate {
    /// Error probability in `[0, 1]` or rate in bits per channel use, depending on the bound.
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub s_used: Option<f64>,
    /// Optimizer traces and diagnostics.
    pub meta: BTreeMap<String, f64>,
}

impl BoundEstimate {
    fn exact(value: f64) -> Self {
        BoundEstimate { value, ..Default::default() }
    }

    fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }
}

/// Codebook size, kept as `log₂ M` so that fractional and very large sizes are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSpec {
    log2_m: f64,
    rate_bits: f64,
}

impl RateSpec {
    /// `log2_m` information bits over a blocklength of `n` channel uses.
    pub fn from_log2_m(log2_m: f64, n: usize) -> Result<Self> {
        if !(log2_m >= 0.0) || !log2_m.is_finite() {
            return Err(domain("RateSpec", format!("log2_m = {log2_m} must be finite and nonnegative")));
        }
        if n == 0 {
            return Err(domain("RateSpec", "blocklength must be positive"));
        }
        Ok(RateSpec { log2_m, rate_bits: log2_m / n as f64 })
    }

    /// Rate `rate_bits` in bits per channel use at blocklength `n`.
    pub fn from_rate_bits(rate_bits: f64, n: usize) -> Result<Self> {
        if !(rate_bits >= 0.0) || !rate_bits.is_finite() {
            return Err(domain("RateSpec", format!("rate {rate_bits} must be finite and nonnegative")));
        }
        RateSpec::from_log2_m(rate_bits * n as f64, n)
    }

    pub fn log2_m(&self) -> f64 {
        self.log2_m
    }

    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    /// `ln M`.
    pub fn ln_m(&self) -> f64 {
        self.log2_m * LN_2
    }

    /// `ln(M − 1)`, which is `−∞` for a single codeword.
    pub fn ln_m_minus_1(&self) -> f64 {
        let x = self.log2_m * LN_2;
        x + (-(-x).exp_m1()).ln()
    }
}

const S_MIN: f64 = 0.05;
const S_MAX: f64 = 3.0;
const S_GRID_POINTS: usize = 14;
const S_TOL: f64 = 5e-3;
const PILOT_LABEL: u64 = 0x5_0117;
const BOOTSTRAP_LABEL: u64 = 0xB007;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Optimizes `objective(s)` over `[0.05, 3]`: a log-spaced scan locates the
/// basin and golden-section search refines it between the scan neighbours.
///
/// Returns `(s, value, evaluations)`.
pub fn optimize_s<F>(mut objective: F, sense: Sense) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let ratio = (S_MAX / S_MIN).powf(1.0 / (S_GRID_POINTS - 1) as f64);
    let grid: Vec<f64> = (0..S_GRID_POINTS).map(|i| S_MIN * ratio.powi(i as i32)).collect();
    let better = |a: f64, b: f64| match sense {
        Sense::Min => a < b,
        Sense::Max => a > b,
    };
    let mut best = (grid[0], objective(grid[0])?);
    let mut best_i = 0;
    for (i, &s) in grid.iter().enumerate().skip(1) {
        let v = objective(s)?;
        if better(v, best.1) {
            best = (s, v);
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(S_GRID_POINTS - 1)];
    let mut failure = None;
    let mut evals = S_GRID_POINTS;
    let (s, v) = golden_section_extremum(
        |s| {
            evals += 1;
            match objective(s) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        S_TOL,
        sense,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(if better(v, best.1) { (s, v, evals) } else { (best.0, best.1, evals) })
}

/// The randomness of one block that does not depend on the metric parameter.
#[derive(Debug, Clone, Copy)]
struct BlockDraw {
    h: Complex64,
    h_hat: Complex64,
    w1: Complex64,
    rest: f64,
}

fn noise_draw(h: Complex64, h_hat: Complex64, dims: usize, rng: &mut StreamRng) -> BlockDraw {
    let w1 = complex_gaussian(rng);
    let rest = gamma_sum(rng, dims - 1);
    BlockDraw { h, h_hat, w1, rest }
}

/// Stored per-block draws of a set of codewords.
#[derive(Debug, Clone)]
pub struct CodewordDraws {
    ell: usize,
    blocks: Vec<BlockDraw>,
}

impl CodewordDraws {
    pub fn n_codewords(&self) -> usize {
        self.blocks.len() / self.ell.max(1)
    }
}

struct Metric {
    base: NoncoherentKernelParams,
    nn: Option<PatNnKernelParams>,
}

/// The per-block information density entering an RCUs-type bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockDensity {
    /// Noncoherent shell ensemble with the optimal decoder.
    Noncoherent,
    /// Pilot-assisted transmission with nearest-neighbour decoding on the estimate.
    PatNn(PatConfig),
    /// Pilot-assisted transmission with the posterior (mismatch-free) decoder.
    PatMl(PatConfig),
}

/// An RCUs-type ensemble: `ell` independent blocks of one block density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcusProblem {
    pub cfg: BlockConfig,
    pub rician: RicianParams,
    pub density: BlockDensity,
    pub quad: QuadratureSpec,
}

impl RcusProblem {
    pub fn new(cfg: BlockConfig, rician: RicianParams, density: BlockDensity) -> Result<Self> {
        match density {
            BlockDensity::PatNn(pat) if pat.np() == 0 => {
                return Err(domain("RcusProblem", "nearest-neighbour decoding needs at least one pilot"))
            }
            BlockDensity::PatNn(pat) | BlockDensity::PatMl(pat) if pat.np() + pat.nd() != cfg.nc() => {
                return Err(domain("RcusProblem", format!("pilot split {pat:?} does not match nc = {}", cfg.nc())))
            }
            _ => {}
        }
        Ok(RcusProblem { cfg, rician, density, quad: QuadratureSpec::default() })
    }

    fn draw_block(&self, rng: &mut StreamRng) -> BlockDraw {
        let zero = Complex64::new(0.0, 0.0);
        match self.density {
            BlockDensity::Noncoherent => noise_draw(zero, zero, self.cfg.nc(), rng),
            BlockDensity::PatMl(pat) if pat.np() == 0 => noise_draw(zero, zero, self.cfg.nc(), rng),
            BlockDensity::PatNn(pat) => {
                let h = sample_fading(&self.rician, rng);
                let h_hat = h + complex_gaussian(rng) * (1.0 / pat.pilot_energy()).sqrt();
                noise_draw(h, h_hat, pat.nd(), rng)
            }
            BlockDensity::PatMl(pat) => {
                let spread = (self.rician.sigma2_h() + 1.0 / pat.pilot_energy()).sqrt();
                let h_hat = Complex64::new(self.rician.mu_h(), 0.0) + complex_gaussian(rng) * spread;
                noise_draw(zero, h_hat, pat.nd(), rng)
            }
        }
    }

    fn metric(&self, s: f64) -> Result<Metric> {
        let base = NoncoherentKernelParams::new(self.cfg.nc(), self.cfg.rho(), &self.rician, s)?;
        let nn = match self.density {
            BlockDensity::PatNn(pat) => Some(PatNnKernelParams::new(&pat, s)?),
            _ => None,
        };
        Ok(Metric { base, nn })
    }

    fn eval_block(&self, metric: &Metric, d: &BlockDraw) -> Result<f64> {
        match (self.density, metric.nn.as_ref()) {
            (BlockDensity::PatNn(_), Some(nn)) => Ok(t_from_parts(nn, d.h, d.h_hat, d.w1, d.rest)),
            (BlockDensity::PatMl(pat), _) if pat.np() > 0 => {
                let post = posterior_params(&self.rician, pat.pilot_energy(), d.h_hat)?;
                let params = NoncoherentKernelParams {
                    nc: pat.nd(),
                    rho: pat.rho_d(),
                    mu_h: post.mu_p.norm(),
                    sigma2_h: post.sigma2_p,
                    s: metric.base.s,
                };
                s_from_noise(&params, d.w1, d.rest, &self.quad)
            }
            _ => s_from_noise(&metric.base, d.w1, d.rest, &self.quad),
        }
    }

    /// Per-draw sums of the block density over the `ell` blocks of a codeword.
    pub fn block_sums(&self, s: f64, mc: &McConfig) -> Result<Vec<f64>> {
        let metric = self.metric(s)?;
        let ell = self.cfg.ell();
        draw_samples(
            |rng| {
                let mut acc = 0.0;
                for _ in 0..ell {
                    acc += self.eval_block(&metric, &self.draw_block(rng))?;
                }
                Ok(acc)
            },
            mc,
        )
    }

    /// Draws the `s`-independent randomness of `mc.n_samples` codewords once,
    /// so that [`RcusProblem::sums_from_draws`] can rescore them at any `s`.
    pub fn draws(&self, mc: &McConfig) -> Result<CodewordDraws> {
        let ell = self.cfg.ell();
        let per_word = draw_with(|rng| Ok((0..ell).map(|_| self.draw_block(rng)).collect::<Vec<_>>()), mc)?;
        Ok(CodewordDraws { ell, blocks: per_word.into_iter().flatten().collect() })
    }

    /// Same values as [`RcusProblem::block_sums`] on the configuration the draws came from.
    pub fn sums_from_draws(&self, s: f64, draws: &CodewordDraws) -> Result<Vec<f64>> {
        if draws.ell != self.cfg.ell() {
            return Err(usage(
                "sums_from_draws",
                format!("draws hold {} blocks per word, need {}", draws.ell, self.cfg.ell()),
            ));
        }
        let metric = self.metric(s)?;
        draws
            .blocks
            .par_chunks(draws.ell)
            .enumerate()
            .map(|(i, word)| {
                word.iter()
                    .try_fold(0.0, |acc, d| Ok(acc + self.eval_block(&metric, d)?))
                    .map_err(|e| Error::Sampler { index: i, source: Box::new(e) })
            })
            .collect()
    }

    /// RCUs bound; `s` is optimized on an independent pilot run when absent.
    pub fn epsilon(&self, rate: &RateSpec, s: Option<f64>, mc: &McConfig) -> Result<BoundEstimate> {
        mc.validate()?;
        let ln_m1 = rate.ln_m_minus_1();
        if ln_m1 == f64::NEG_INFINITY {
            return Ok(BoundEstimate::exact(0.0));
        }
        let (s, mut meta) = match s {
            Some(s) => (s, BTreeMap::new()),
            None => {
                let pilot = pilot_config(mc);
                let draws = self.draws(&pilot)?;
                let (s, v, evals) = optimize_s(
                    |s| Ok(rcus_epsilon_from_sums(&self.sums_from_draws(s, &draws)?, ln_m1)?.mean),
                    Sense::Min,
                )?;
                let meta = BTreeMap::from([
                    ("pilot_samples".to_string(), pilot.n_samples as f64),
                    ("pilot_epsilon".to_string(), v),
                    ("s_evaluations".to_string(), evals as f64),
                ]);
                (s, meta)
            }
        };
        let est = rcus_epsilon_from_sums(&self.block_sums(s, mc)?, ln_m1)?;
        meta.insert("ln_m_minus_1".to_string(), ln_m1);
        Ok(BoundEstimate { value: est.mean, stderr: est.stderr, n_samples: est.n, s_used: Some(s), meta })
    }
}

/// The pilot run used for parameter selection; 10% of the budget on an independent seed.
pub fn pilot_config(mc: &McConfig) -> McConfig {
    mc.derived(PILOT_LABEL, (mc.n_samples / 10).max(1))
}

/// `E[exp(−[Σ − ln(M−1)]⁺)]` over precomputed sums.
pub fn rcus_epsilon_from_sums(sums: &[f64], ln_m_minus_1: f64) -> Result<crate::mc::Estimate> {
    if ln_m_minus_1 == f64::NEG_INFINITY {
        return Ok(crate::mc::Estimate { mean: 0.0, stderr: 0.0, n: sums.len() });
    }
    sums.iter().map(|&x| (-(x - ln_m_minus_1).max(0.0)).exp()).collect::<Accumulator>().estimate()
}

/// RCUs bound of the noncoherent shell ensemble.
pub fn rcus_noncoherent(
    cfg: &BlockConfig,
    rician: &RicianParams,
    rate: &RateSpec,
    s: Option<f64>,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    RcusProblem::new(*cfg, *rician, BlockDensity::Noncoherent)?.epsilon(rate, s, mc)
}

/// RCUs bound of pilot-assisted transmission with nearest-neighbour decoding.
pub fn rcus_pat_nn(
    cfg: &BlockConfig,
    rician: &RicianParams,
    pat: &PatConfig,
    rate: &RateSpec,
    s: Option<f64>,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    RcusProblem::new(*cfg, *rician, BlockDensity::PatNn(*pat))?.epsilon(rate, s, mc)
}

/// RCUs bound of pilot-assisted transmission with the posterior decoder.
pub fn rcus_pat_ml(
    cfg: &BlockConfig,
    rician: &RicianParams,
    pat: &PatConfig,
    rate: &RateSpec,
    s: Option<f64>,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    RcusProblem::new(*cfg, *rician, BlockDensity::PatMl(*pat))?.epsilon(rate, s, mc)
}

/// Random-coding error exponent bound of the noncoherent shell ensemble.
pub fn rce_noncoherent(cfg: &BlockConfig, rician: &RicianParams, rate: &RateSpec) -> Result<BoundEstimate> {
    rce_noncoherent_with(cfg, rician, rate, &QuadratureSpec::default())
}

pub fn rce_noncoherent_with(
    cfg: &BlockConfig,
    rician: &RicianParams,
    rate: &RateSpec,
    quad: &QuadratureSpec,
) -> Result<BoundEstimate> {
    let ell = cfg.ell() as f64;
    let per_block_rate = rate.ln_m() / ell;
    let mut failure = None;
    let (tau, exponent) = golden_section_extremum(
        |tau| match e0_noncoherent(tau, cfg.nc(), cfg.rho(), rician, quad) {
            Ok(e0) => e0 - tau * per_block_rate,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        1.0,
        1e-5,
        Sense::Max,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let exponent = exponent.max(0.0);
    Ok(BoundEstimate::exact((-ell * exponent).exp()).with_meta("tau", tau).with_meta("exponent", exponent))
}

/// Exponent bound of pilot-assisted nearest-neighbour decoding.
///
/// The Gallager function is estimated from joint draws of fading, estimate
/// and noise as `−ln Ê[exp(−τ T^s)]`; `(τ, s)` maximize the exponent on the
/// same draws, and the standard error follows from the delta method.
pub fn rce_pat_nn(
    cfg: &BlockConfig,
    rician: &RicianParams,
    pat: &PatConfig,
    rate: &RateSpec,
    mc_hhat: &McConfig,
) -> Result<BoundEstimate> {
    mc_hhat.validate()?;
    if pat.np() == 0 || pat.np() + pat.nd() != cfg.nc() {
        return Err(domain("rce_pat_nn", format!("pilot split {pat:?} invalid for nc = {}", cfg.nc())));
    }
    if cfg.rho() == 0.0 {
        return Ok(BoundEstimate::exact(1.0));
    }
    let ell = cfg.ell() as f64;
    let per_block_rate = rate.ln_m() / ell;
    let single = RcusProblem::new(BlockConfig::new(1, cfg.nc(), cfg.rho())?, *rician, BlockDensity::PatNn(*pat))?;
    let joint = single.draws(mc_hhat)?;
    let draws = |s: f64| single.sums_from_draws(s, &joint);
    let best_tau = |t: &[f64]| -> Result<(f64, f64)> {
        let ln_n = (t.len() as f64).ln();
        let mut buf = vec![0.0; t.len()];
        golden_section_extremum(
            |tau| {
                for (b, &x) in buf.iter_mut().zip(t) {
                    *b = -tau * x;
                }
                let ln_mean = log_sum_exp(&buf).unwrap_or(f64::NAN) - ln_n;
                -ln_mean - tau * per_block_rate
            },
            0.0,
            1.0,
            1e-5,
            Sense::Max,
        )
    };
    let (s, _, evals) = optimize_s(|s| Ok(best_tau(&draws(s)?)?.1), Sense::Max)?;
    let t = draws(s)?;
    let (tau, exponent) = best_tau(&t)?;
    let exponent = exponent.max(0.0);
    let value = (-ell * exponent).exp();
    let stderr = if exponent > 0.0 {
        let shift = t.iter().map(|&x| -tau * x).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = t.iter().map(|&x| (-tau * x - shift).exp()).collect();
        let est = estimate_from(&w)?;
        value * ell * est.stderr / est.mean
    } else {
        0.0
    };
    Ok(BoundEstimate { value, stderr, n_samples: t.len(), s_used: Some(s), meta: BTreeMap::new() }
        .with_meta("tau", tau)
        .with_meta("exponent", exponent)
        .with_meta("s_evaluations", evals as f64))
}

/// Min-max converse from sorted draws of `Σ S¹`: the rate bound in bits per
/// channel use and the minimizing threshold, or `None` when no threshold has
/// empirical probability above `epsilon`.
pub fn converse_rate_from_sorted(sorted: &[f64], n: usize, epsilon: f64) -> Option<(f64, f64)> {
    let total = sorted.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let lambda = sorted[i];
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == lambda {
            j += 1;
        }
        let excess = (j + 1) as f64 / total - epsilon;
        if excess > 0.0 {
            let objective = lambda - excess.ln();
            if best.is_none_or(|(b, _)| objective < b) {
                best = Some((objective, lambda));
            }
        }
        i = j + 1;
    }
    best.map(|(nats, lambda)| (nats / (n as f64 * LN_2), lambda))
}

/// Min-max converse bound on the rate in bits per channel use.
///
/// The threshold is scanned over every sample point; the standard error is
/// the half-width of the bootstrap interval divided by its normal quantile.
pub fn minmax_converse_rate(
    cfg: &BlockConfig,
    rician: &RicianParams,
    epsilon: f64,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain("minmax_converse_rate", format!("epsilon {epsilon} not in (0, 1)")));
    }
    let problem = RcusProblem::new(*cfg, *rician, BlockDensity::Noncoherent)?;
    let mut sums = problem.block_sums(1.0, mc)?;
    converse_from_sums(&mut sums, cfg.n(), epsilon, mc)
}

pub(crate) fn converse_from_sums(sums: &mut [f64], n: usize, epsilon: f64, mc: &McConfig) -> Result<BoundEstimate> {
    sums.sort_by(f64::total_cmp);
    let tail_points = epsilon * sums.len() as f64;
    let Some((rate, lambda)) = converse_rate_from_sorted(sums, n, epsilon) else {
        return Ok(BoundEstimate { value: f64::INFINITY, n_samples: sums.len(), ..Default::default() }
            .with_meta("insufficient_samples", 1.0)
            .with_meta("tail_points", tail_points));
    };
    let (lo, hi) = if sums.len() >= 100 {
        let mut rng = stream_rng(mc.derived(BOOTSTRAP_LABEL, 1).seed, 0);
        bootstrap_ci(
            sums,
            |resample| {
                let mut v = resample.to_vec();
                v.sort_by(f64::total_cmp);
                converse_rate_from_sorted(&v, n, epsilon).map_or(f64::INFINITY, |r| r.0)
            },
            BOOTSTRAP_RESAMPLES,
            mc.ci_level,
            &mut rng,
        )?
    } else {
        (rate, rate)
    };
    let z = gaussian_q_inv(0.5 * (1.0 - mc.ci_level))?;
    let stderr = if lo.is_finite() && hi.is_finite() { 0.5 * (hi - lo) / z } else { f64::INFINITY };
    Ok(BoundEstimate { value: rate, stderr, n_samples: sums.len(), s_used: Some(1.0), meta: BTreeMap::new() }
        .with_meta("lambda", lambda)
        .with_meta("ci_lo", lo)
        .with_meta("ci_hi", hi)
        .with_meta("tail_points", tail_points))
}

/// Normal approximation of the AWGN maximal rate, in bits per channel use.
pub fn normal_approx_rate(rho: f64, n: usize, epsilon: f64) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() || n == 0 {
        return Err(domain("normal_approx_rate", format!("invalid snr {rho} or blocklength {n}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain("normal_approx_rate", format!("epsilon {epsilon} not in (0, 1)")));
    }
    let log2e = std::f64::consts::LOG2_E;
    let capacity = rho.ln_1p() * log2e;
    let dispersion = rho * (2.0 + rho) / ((1.0 + rho) * (1.0 + rho)) * log2e * log2e;
    let q = gaussian_q_inv(epsilon)?;
    Ok(capacity - (dispersion / n as f64).sqrt() * q)
}

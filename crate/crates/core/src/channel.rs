//! Rician block-fading model, pilot-assisted configurations and channel estimation.

use num_complex::Complex64;
use rand::RngCore;

use crate::error::{domain, Error, Result};
use crate::mc::complex_gaussian;

/// Fading law `H ~ CN(mu_h, sigma2_h)` with unit average energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianParams {
    kappa: f64,
    mu_h: f64,
    sigma2_h: f64,
}

impl RicianParams {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Line-of-sight mean, real and nonnegative.
    pub fn mu_h(&self) -> f64 {
        self.mu_h
    }

    /// Scattered-component variance.
    pub fn sigma2_h(&self) -> f64 {
        self.sigma2_h
    }

    /// Deterministic unit gain (κ = ∞).
    pub fn is_awgn(&self) -> bool {
        self.sigma2_h == 0.0
    }
}

/// Rician parameters from the factor κ. `f64::INFINITY` gives the AWGN channel.
pub fn rician_from_kappa(kappa: f64) -> Result<RicianParams> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(domain("rician_from_kappa", format!("kappa {kappa} must be nonnegative")));
    }
    if kappa == f64::INFINITY {
        return Ok(RicianParams { kappa, mu_h: 1.0, sigma2_h: 0.0 });
    }
    Ok(RicianParams { kappa, mu_h: (kappa / (1.0 + kappa)).sqrt(), sigma2_h: 1.0 / (1.0 + kappa) })
}

/// Block structure: `ell` independently faded blocks of `nc` channel uses at SNR `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    ell: usize,
    nc: usize,
    rho: f64,
}

impl BlockConfig {
    pub fn new(ell: usize, nc: usize, rho: f64) -> Result<Self> {
        if ell == 0 || nc == 0 {
            return Err(domain("BlockConfig", format!("ell = {ell} and nc = {nc} must be positive")));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(domain("BlockConfig", format!("snr {rho} must be finite and nonnegative")));
        }
        Ok(BlockConfig { ell, nc, rho })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Blocklength `ell · nc`.
    pub fn n(&self) -> usize {
        self.ell * self.nc
    }

    /// Energy per coherence block, `nc · rho`.
    pub fn block_energy(&self) -> f64 {
        self.nc as f64 * self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        BlockConfig::new(self.ell, self.nc, rho)
    }
}

/// Pilot/data split of a coherence block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatConfig {
    np: usize,
    nd: usize,
    rho_p: f64,
    rho_d: f64,
}

impl PatConfig {
    pub fn np(&self) -> usize {
        self.np
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    pub fn rho_p(&self) -> f64 {
        self.rho_p
    }

    pub fn rho_d(&self) -> f64 {
        self.rho_d
    }

    /// Total pilot energy `np · rho_p`.
    pub fn pilot_energy(&self) -> f64 {
        self.np as f64 * self.rho_p
    }

    /// Total data energy `nd · rho_d`.
    pub fn data_energy(&self) -> f64 {
        self.nd as f64 * self.rho_d
    }
}

/// Splits the block energy between `np` pilots at power `rho_p` and the data symbols.
pub fn pat_split(cfg: &BlockConfig, np: usize, rho_p: f64) -> Result<PatConfig> {
    if np >= cfg.nc() {
        return Err(domain("pat_split", format!("np = {np} must be below nc = {}", cfg.nc())));
    }
    if !(rho_p >= 0.0) || !rho_p.is_finite() {
        return Err(domain("pat_split", format!("pilot power {rho_p} must be finite and nonnegative")));
    }
    let pilot_energy = np as f64 * rho_p;
    let block_energy = cfg.block_energy();
    if pilot_energy > block_energy * (1.0 + 1e-12) {
        return Err(Error::InfeasiblePower { pilot_energy, block_energy });
    }
    let nd = cfg.nc() - np;
    let rho_d = ((block_energy - pilot_energy) / nd as f64).max(0.0);
    Ok(PatConfig { np, nd, rho_p, rho_d })
}

/// Split that gives the pilots a fraction `alpha` of the block energy.
pub fn pat_split_fraction(cfg: &BlockConfig, np: usize, alpha: f64) -> Result<PatConfig> {
    if np == 0 || np >= cfg.nc() {
        return Err(domain("pat_split_fraction", format!("np = {np} must lie in 1..{}", cfg.nc())));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain("pat_split_fraction", format!("energy fraction {alpha} not in [0, 1]")));
    }
    let rho_p = alpha * cfg.block_energy() / np as f64;
    pat_split(cfg, np, rho_p)
}

/// One draw of the fading coefficient, always two rng words.
pub fn sample_fading<R: RngCore + ?Sized>(params: &RicianParams, rng: &mut R) -> Complex64 {
    let g = complex_gaussian(rng);
    Complex64::new(params.mu_h, 0.0) + g * params.sigma2_h.sqrt()
}

/// Least-squares channel estimate `pilotᴴ·received / ‖pilot‖²`.
pub fn ml_channel_estimate(pilot: &[Complex64], received: &[Complex64]) -> Result<Complex64> {
    if pilot.len() != received.len() || pilot.is_empty() {
        return Err(domain(
            "ml_channel_estimate",
            format!("pilot length {} and received length {} must match and be positive", pilot.len(), received.len()),
        ));
    }
    let energy: f64 = pilot.iter().map(|p| p.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(domain("ml_channel_estimate", "pilot vector is zero"));
    }
    let corr: Complex64 = pilot.iter().zip(received).map(|(p, r)| p.conj() * r).sum();
    Ok(corr / energy)
}

/// Conditional law of the fading given a pilot-based estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatePosterior {
    pub mu_p: Complex64,
    pub sigma2_p: f64,
}

/// Posterior `H | Ĥ = h_hat ~ CN(mu_p, sigma2_p)` when `Ĥ | H ~ CN(H, 1/np_rho_p)`.
pub fn posterior_params(params: &RicianParams, np_rho_p: f64, h_hat: Complex64) -> Result<EstimatePosterior> {
    if !(np_rho_p > 0.0) {
        return Err(domain("posterior_params", format!("pilot energy {np_rho_p} must be positive")));
    }
    let prior_mean = Complex64::new(params.mu_h, 0.0);
    let s2 = params.sigma2_h;
    if s2 == 0.0 {
        return Ok(EstimatePosterior { mu_p: prior_mean, sigma2_p: 0.0 });
    }
    let est_var = 1.0 / np_rho_p;
    let denom = s2 + est_var;
    Ok(EstimatePosterior { mu_p: (h_hat * s2 + prior_mean * est_var) / denom, sigma2_p: s2 * est_var / denom })
}

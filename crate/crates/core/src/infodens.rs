//! Generalized information densities of shell codes over one coherence block,
//! and the Gallager functions built from them.
//!
//! Every sampler draws a fixed number of rng words per call for a given block
//! size, so runs that differ only in SNR or `s` stay aligned draw by draw.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::RngCore;

use crate::channel::{posterior_params, sample_fading, EstimatePosterior, PatConfig, RicianParams};
use crate::error::{domain, Result};
use crate::mc::{complex_gaussian, gamma_sum};
use crate::numerics::{
    integrate_log_halfline_from, ln_bessel_i_scaled, ln_gamma, ln_sphere_average, log_bessel_i_over_pow,
    log_gamma_series, QuadratureSpec,
};

/// Parameters of the noncoherent shell-code metric on one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncoherentKernelParams {
    pub nc: usize,
    pub rho: f64,
    pub mu_h: f64,
    pub sigma2_h: f64,
    pub s: f64,
}

impl NoncoherentKernelParams {
    pub fn new(nc: usize, rho: f64, rician: &RicianParams, s: f64) -> Result<Self> {
        let p = NoncoherentKernelParams { nc, rho, mu_h: rician.mu_h(), sigma2_h: rician.sigma2_h(), s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nc == 0 {
            return Err(domain("NoncoherentKernelParams", "nc must be positive"));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(domain("NoncoherentKernelParams", format!("snr {} invalid", self.rho)));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(domain("NoncoherentKernelParams", format!("s = {} must be positive", self.s)));
        }
        if !(self.mu_h >= 0.0) || !(self.sigma2_h >= 0.0) || !self.mu_h.is_finite() || !self.sigma2_h.is_finite() {
            return Err(domain(
                "NoncoherentKernelParams",
                format!("fading mean {} and variance {} invalid", self.mu_h, self.sigma2_h),
            ));
        }
        Ok(())
    }

    fn energy(&self) -> f64 {
        self.nc as f64 * self.rho
    }

    fn order(&self) -> f64 {
        (self.nc - 1) as f64
    }
}

/// Parameters of the pilot-assisted nearest-neighbour metric on one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatNnKernelParams {
    pub nd: usize,
    pub rho_d: f64,
    pub np_rho_p: f64,
    pub s: f64,
}

impl PatNnKernelParams {
    pub fn new(pat: &PatConfig, s: f64) -> Result<Self> {
        let p = PatNnKernelParams { nd: pat.nd(), rho_d: pat.rho_d(), np_rho_p: pat.pilot_energy(), s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nd == 0 {
            return Err(domain("PatNnKernelParams", "nd must be positive"));
        }
        if !(self.rho_d >= 0.0) || !self.rho_d.is_finite() {
            return Err(domain("PatNnKernelParams", format!("data power {} invalid", self.rho_d)));
        }
        if !(self.np_rho_p > 0.0) {
            return Err(domain("PatNnKernelParams", format!("pilot energy {} must be positive", self.np_rho_p)));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(domain("PatNnKernelParams", format!("s = {} must be positive", self.s)));
        }
        Ok(())
    }
}

#[inline]
fn ln_i0(x: f64) -> f64 {
    ln_bessel_i_scaled(0.0, x) + x
}

/// Starting point for integrands shaped like `exp(-c z + 2 β √z) z^{-γ/2}`.
fn mode_hint(c: f64, beta: f64, gamma: f64) -> f64 {
    let disc = beta * beta - 2.0 * c * gamma;
    let q = if disc > 0.0 { (beta + disc.sqrt()) / (2.0 * c) } else { (gamma / (2.0 * c)).sqrt() };
    (q * q).max(1e-300)
}

/// `ln ∫₀^∞ e^{-s(A+1/σ²)z} (t√(Az))^{-ν} I_ν(2st√(Az)) I₀(2sμ√z/σ²) dz` with `t² = t2`.
///
/// This is the shell-averaged metric integral shared by the noncoherent
/// density, its Gallager function and the pilot-assisted posterior metric.
#[allow(clippy::too_many_arguments)]
fn ln_shell_integral(
    nu: f64,
    energy: f64,
    t2: f64,
    s: f64,
    mu: f64,
    sigma2: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let precision = 1.0 / sigma2;
    let c = s * (energy + precision);
    if mu == 0.0 {
        let x = s * t2 * energy / (energy + precision);
        return Ok(nu * s.ln() - c.ln() + log_gamma_series(nu, x));
    }
    let b = s * (t2 * energy).sqrt();
    let d = s * mu * precision;
    let ln_s_nu = nu * s.ln();
    let g = |z: f64| {
        let q = z.sqrt();
        -c * z + ln_s_nu + log_bessel_i_over_pow(nu, b * q) + ln_i0(2.0 * d * q)
    };
    integrate_log_halfline_from(g, mode_hint(c, b + d, nu + 1.0), quad)
}

/// `ln P(y | h)` for the shell input on one block, a function of `‖y‖²` and `|h|²`.
pub fn log_density_given_gain(y_norm2: f64, gain2: f64, nc: usize, rho: f64, noise_var: f64) -> Result<f64> {
    if nc == 0 || !(y_norm2 >= 0.0) || !(gain2 >= 0.0) || !(rho >= 0.0) || !(noise_var > 0.0) {
        return Err(domain(
            "log_density_given_gain",
            format!("invalid arguments y2={y_norm2} g2={gain2} nc={nc} rho={rho} noise={noise_var}"),
        ));
    }
    let energy = nc as f64 * rho;
    let nu = (nc - 1) as f64;
    let x = (y_norm2 * gain2 * energy).sqrt() / noise_var;
    Ok(-(y_norm2 + gain2 * energy) / noise_var - nc as f64 * (PI * noise_var).ln() + ln_sphere_average(nu, x))
}

/// `ln E_U[P_{Y|U}(y|U)^s]` with `U` uniform on the shell.
pub fn log_output_density(y_norm2: f64, params: &NoncoherentKernelParams, quad: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    if !(y_norm2 >= 0.0) {
        return Err(domain("log_output_density", format!("squared norm {y_norm2} invalid")));
    }
    let NoncoherentKernelParams { nc, mu_h: mu, sigma2_h: sigma2, s, .. } = *params;
    let energy = params.energy();
    let nu = params.order();
    let ncf = nc as f64;
    if sigma2 == 0.0 {
        return Ok(-s * ncf * PI.ln() - s * (y_norm2 + mu * mu * energy)
            + ln_sphere_average(nu, s * mu * (energy * y_norm2).sqrt()));
    }
    let ln_int = ln_shell_integral(nu, energy, y_norm2, s, mu, sigma2, quad)?;
    Ok(ln_gamma(ncf) + (2.0 - ncf) * s.ln()
        - s * y_norm2
        - s * mu * mu / sigma2
        - s * ncf * PI.ln()
        - (s - 1.0) * (sigma2 * energy).ln_1p()
        - sigma2.ln()
        + ln_int)
}

/// One draw of the noncoherent information density `S^s` for one block.
///
/// Consumes `nc + 1` rng words.
pub fn sample_s<R: RngCore + ?Sized>(
    params: &NoncoherentKernelParams,
    rng: &mut R,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let w1 = complex_gaussian(rng);
    let rest = gamma_sum(rng, params.nc - 1);
    s_from_noise(params, w1, rest, quad)
}

/// `S^s` given the first noise component and the energy of the others.
pub fn s_from_noise(params: &NoncoherentKernelParams, w1: Complex64, rest: f64, quad: &QuadratureSpec) -> Result<f64> {
    let NoncoherentKernelParams { nc, mu_h: mu, sigma2_h: sigma2, s, .. } = *params;
    let energy = params.energy();
    if energy == 0.0 {
        return Ok(0.0);
    }
    let nu = params.order();
    let ncf = nc as f64;
    let sqa = energy.sqrt();
    let w1_sq = w1.norm_sqr();
    if sigma2 == 0.0 {
        let y1_sq = (w1 + mu * sqa).norm_sqr();
        let y2 = y1_sq + rest;
        return Ok(s * (y1_sq - w1_sq) + s * mu * mu * energy - ln_sphere_average(nu, s * mu * (energy * y2).sqrt()));
    }
    let wt1 = w1 * (sigma2 * energy + 1.0).sqrt() + mu * sqa;
    let wt1_sq = wt1.norm_sqr();
    let t2 = wt1_sq + rest;
    let ln_int = ln_shell_integral(nu, energy, t2, s, mu, sigma2, quad)?;
    Ok((ncf - 2.0) * s.ln() - ((1.0 + sigma2 * energy) / sigma2).ln() - ln_gamma(ncf) - s * (w1_sq - wt1_sq)
        + s * mu * mu / sigma2
        - ln_int)
}

/// `ln E_U[exp(-s‖y − √(nd·ρd)·ĥ·U‖²)]` for `U` uniform on the data shell.
pub fn log_nn_metric_average(y_norm2: f64, h_hat_abs: f64, nd: usize, rho_d: f64, s: f64) -> f64 {
    let energy = nd as f64 * rho_d;
    let nu = (nd - 1) as f64;
    let x = s * h_hat_abs * (energy * y_norm2).sqrt();
    -s * (y_norm2 + energy * h_hat_abs * h_hat_abs) + ln_sphere_average(nu, x)
}

/// One draw of the pilot-assisted nearest-neighbour density `T^s` for one block.
///
/// Consumes `nd + 5` rng words: fading, estimation error, then noise.
pub fn sample_t<R: RngCore + ?Sized>(params: &PatNnKernelParams, rician: &RicianParams, rng: &mut R) -> f64 {
    let h = sample_fading(rician, rng);
    let h_hat = h + complex_gaussian(rng) * (1.0 / params.np_rho_p).sqrt();
    let w1 = complex_gaussian(rng);
    let rest = gamma_sum(rng, params.nd - 1);
    t_from_parts(params, h, h_hat, w1, rest)
}

/// `T^s` conditioned on the estimate: the fading is drawn from its posterior.
///
/// Consumes `nd + 3` rng words.
pub fn sample_t_given_estimate<R: RngCore + ?Sized>(
    params: &PatNnKernelParams,
    posterior: &EstimatePosterior,
    h_hat: Complex64,
    rng: &mut R,
) -> f64 {
    let h = posterior.mu_p + complex_gaussian(rng) * posterior.sigma2_p.sqrt();
    let w1 = complex_gaussian(rng);
    let rest = gamma_sum(rng, params.nd - 1);
    t_from_parts(params, h, h_hat, w1, rest)
}

/// `T^s` from the fading, its estimate and the block noise.
///
/// With `y = √A·h·e₁ + w`, the metric of the transmitted word depends on
/// `w̄₁ = y₁` and `w̃₁ = y₁ − √A·ĥ`; both come from the same noise draw.
pub fn t_from_parts(params: &PatNnKernelParams, h: Complex64, h_hat: Complex64, w1: Complex64, rest: f64) -> f64 {
    let PatNnKernelParams { nd, rho_d, s, .. } = *params;
    let energy = nd as f64 * rho_d;
    let sqa = energy.sqrt();
    let wbar1 = w1 + h * sqa;
    let wtil1 = wbar1 - h_hat * sqa;
    let wbar1_sq = wbar1.norm_sqr();
    let ybar2 = wbar1_sq + rest;
    let h_hat_abs = h_hat.norm();
    let x = s * h_hat_abs * (energy * ybar2).sqrt();
    s * (wbar1_sq - wtil1.norm_sqr()) + s * energy * h_hat_abs * h_hat_abs - ln_sphere_average((nd - 1) as f64, x)
}

/// One draw of the pilot-assisted mismatched-free density `S̄^s` for one block.
///
/// With `np = 0` this is exactly [`sample_s`] on `(nc, ρ)`. Otherwise the
/// estimate is drawn from its marginal (two words) and the data block is
/// scored with the posterior fading law.
pub fn sample_s_bar<R: RngCore + ?Sized>(
    base: &NoncoherentKernelParams,
    pat: &PatConfig,
    rician: &RicianParams,
    rng: &mut R,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if pat.np() == 0 {
        let params = NoncoherentKernelParams { mu_h: rician.mu_h(), sigma2_h: rician.sigma2_h(), ..*base };
        return sample_s(&params, rng, quad);
    }
    let pilot_energy = pat.pilot_energy();
    let spread = (rician.sigma2_h() + 1.0 / pilot_energy).sqrt();
    let h_hat = Complex64::new(rician.mu_h(), 0.0) + complex_gaussian(rng) * spread;
    let post = posterior_params(rician, pilot_energy, h_hat)?;
    let params = NoncoherentKernelParams {
        nc: pat.nd(),
        rho: pat.rho_d(),
        mu_h: post.mu_p.norm(),
        sigma2_h: post.sigma2_p,
        s: base.s,
    };
    sample_s(&params, rng, quad)
}

/// Gallager function of the noncoherent shell ensemble on one block, with `s = 1/(1+τ)`.
pub fn e0_noncoherent(tau: f64, nc: usize, rho: f64, rician: &RicianParams, quad: &QuadratureSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(domain("e0_noncoherent", format!("tau {tau} not in [0, 1]")));
    }
    let params = NoncoherentKernelParams::new(nc, rho, rician, 1.0 / (1.0 + tau))?;
    if tau == 0.0 || params.energy() == 0.0 {
        return Ok(0.0);
    }
    Ok(-ln_gallager_integral_noncoherent(tau, &params, quad)?)
}

/// `ln ∫ E_U[P(y|U)^{1/(1+τ)}]^{1+τ} dy`, which is 1 at τ = 0.
pub fn ln_gallager_integral_noncoherent(
    tau: f64,
    params: &NoncoherentKernelParams,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let NoncoherentKernelParams { nc, mu_h: mu, sigma2_h: sigma2, s, .. } = *params;
    let energy = params.energy();
    let nu = params.order();
    let ncf = nc as f64;
    let power = 1.0 + tau;
    let hint = ncf + energy;
    if sigma2 == 0.0 {
        let g = |r: f64| {
            nu * r.ln() - r - mu * mu * energy + power * log_bessel_i_over_pow(nu, s * mu * (energy * r).sqrt())
        };
        return Ok(tau * ln_gamma(ncf) + integrate_log_halfline_from(g, hint, quad)?);
    }
    let ln_c = tau * (sigma2 * energy).ln_1p() + tau * ln_gamma(ncf) - mu * mu / sigma2
        + power * ((ncf - 2.0) * power.ln() - sigma2.ln());
    let failure = std::cell::Cell::new(None);
    let g = |r: f64| match ln_shell_integral(nu, energy, r, s, mu, sigma2, quad) {
        Ok(ln_j) => nu * r.ln() - r + power * ln_j,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let outer = integrate_log_halfline_from(g, hint, quad);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(ln_c + outer?)
}

/// Gallager function of the pilot-assisted NN metric given the estimate `h_hat`:
/// `−ln E[exp(−τ T^s) | Ĥ = h_hat]`.
pub fn e0_pat_nn(
    tau: f64,
    s: f64,
    h_hat: Complex64,
    nd: usize,
    rho_d: f64,
    posterior: &EstimatePosterior,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(domain("e0_pat_nn", format!("tau {tau} not in [0, 1]")));
    }
    if !(s > 0.0) || nd == 0 || !(rho_d >= 0.0) {
        return Err(domain("e0_pat_nn", format!("invalid s={s}, nd={nd}, rho_d={rho_d}")));
    }
    let sigma2 = posterior.sigma2_p;
    if !(sigma2 > 0.0) {
        return Err(domain("e0_pat_nn", format!("posterior variance {sigma2} must be positive")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let energy = nd as f64 * rho_d;
    let nu = (nd - 1) as f64;
    let tilt = 1.0 + sigma2 * energy;
    let a = posterior.mu_p - h_hat * (s * tau * tilt);
    let a_abs = a.norm();
    let mu_abs = posterior.mu_p.norm();
    let h_abs = h_hat.norm();
    let precision = 1.0 / sigma2;
    let beta = precision + energy;
    let d = a_abs * precision;

    let failure = std::cell::Cell::new(None);
    let inner = |r: f64| -> f64 {
        let p = (r * energy).sqrt();
        let g = |z: f64| {
            let q = z.sqrt();
            -beta * z + log_bessel_i_over_pow(nu, p * q) + ln_i0(2.0 * d * q)
        };
        match integrate_log_halfline_from(g, mode_hint(beta, p + d, nu + 1.0), quad) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let outer = |r: f64| -r + nu * r.ln() + tau * log_bessel_i_over_pow(nu, s * h_abs * (r * energy).sqrt()) + inner(r);
    let hint = nd as f64 + energy * (mu_abs * mu_abs + sigma2);
    let ln_integral = integrate_log_halfline_from(outer, hint, quad);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let ln_f0 =
        tau * ln_gamma(nd as f64) - sigma2.ln() - a_abs * a_abs / (sigma2 * tilt) - mu_abs * mu_abs * energy / tilt
            + ln_integral?;
    Ok(-ln_f0)
}

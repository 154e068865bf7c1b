//! Fast invariant checks run by `fbl selftest`.

use fbl_core::bounds::{rcus_noncoherent, rcus_pat_ml, RateSpec};
use fbl_core::channel::{pat_split, rician_from_kappa, sample_fading, BlockConfig};
use fbl_core::infodens::{log_output_density, NoncoherentKernelParams};
use fbl_core::mc::{complex_gaussian, estimate_from, stream_rng, McConfig, StreamRng};
use fbl_core::numerics::{integrate_log_halfline, log_bessel_i_scaled, log_gamma, QuadratureSpec};
use num_complex::Complex64;
use std::f64::consts::PI;

const SEED: u64 = 0x5E1F;

/// Replaceable numerical kernels, so that a broken kernel can be shown to be caught.
pub struct Hooks {
    pub log_bessel_i_scaled: fn(f64, f64) -> fbl_core::Result<f64>,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks { log_bessel_i_scaled }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn bessel_recurrence(hooks: &Hooks) -> Check {
    // I_{ν−1}(z) − I_{ν+1}(z) = (2ν/z) I_ν(z), divided through by I_ν
    let mut worst = 0.0f64;
    for &nu in &[1.0, 3.5, 20.0, 150.0] {
        for &z in &[0.1, 2.0, 30.0, 400.0] {
            let lb = |v: f64| (hooks.log_bessel_i_scaled)(v, z);
            let (Ok(lo), Ok(mid), Ok(hi)) = (lb(nu - 1.0), lb(nu), lb(nu + 1.0)) else {
                return check("bessel_recurrence", false, format!("evaluation failed at nu={nu}, z={z}"));
            };
            let lhs = (lo - mid).exp() - (hi - mid).exp();
            let rhs = 2.0 * nu / z;
            worst = worst.max((lhs - rhs).abs() / rhs);
        }
    }
    check("bessel_recurrence", worst < 1e-9, format!("max relative residual {worst:.1e}"))
}

fn gamma_quadrature() -> Check {
    let spec = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for &a in &[0.5, 3.0, 40.0, 500.0] {
        let Ok(q) = integrate_log_halfline(|z| (a - 1.0) * z.ln() - z, &spec) else {
            return check("gamma_quadrature", false, format!("quadrature failed at a={a}"));
        };
        let exact = log_gamma(a).unwrap_or(f64::NAN);
        worst = worst.max((q - exact).abs() / exact.abs().max(1.0));
    }
    check("gamma_quadrature", worst < 1e-8, format!("max relative error {worst:.1e}"))
}

fn output_density_mass() -> Check {
    let spec = QuadratureSpec::new(1e-10, 45.0, 1 << 16).expect("valid spec");
    let quad = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for &kappa in &[0.0, 1.0, f64::INFINITY] {
        let r = rician_from_kappa(kappa).expect("valid kappa");
        let nc = 4;
        let p = NoncoherentKernelParams::new(nc, 2.0, &r, 1.0).expect("valid params");
        let ln_surface = nc as f64 * PI.ln() - log_gamma(nc as f64).unwrap_or(f64::NAN);
        let mass = integrate_log_halfline(
            |y2| (nc - 1) as f64 * y2.ln() + log_output_density(y2, &p, &quad).unwrap_or(f64::NAN),
            &spec,
        )
        .map(|m| m + ln_surface)
        .unwrap_or(f64::NAN);
        worst = worst.max(mass.abs());
    }
    check("output_density_mass", worst < 1e-6, format!("max |ln mass| {worst:.1e}"))
}

/// `E[exp(i_s(X̄; Y))] = 1` when the scored input `X̄` is independent of `Y`.
fn density_normalization() -> Check {
    let quad = QuadratureSpec::default();
    let n = 50_000;
    let mut worst = 0.0f64;
    for (i, &(nc, rho, kappa, s)) in [(3usize, 2.0, 0.0, 0.7), (2, 5.0, 1.0, 1.0)].iter().enumerate() {
        let r = rician_from_kappa(kappa).expect("valid kappa");
        let p = NoncoherentKernelParams::new(nc, rho, &r, s).expect("valid params");
        let energy = nc as f64 * rho;
        let mut rng = stream_rng(SEED, i as u64);
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let u = unit_vector(nc, &mut rng);
                let h = sample_fading(&r, &mut rng);
                let y: Vec<Complex64> =
                    u.iter().map(|ui| ui * h * energy.sqrt() + complex_gaussian(&mut rng)).collect();
                let other = unit_vector(nc, &mut rng);
                let y2: f64 = y.iter().map(|v| v.norm_sqr()).sum();
                let ln_q = log_output_density(y2, &p, &quad).unwrap_or(f64::NAN);
                (s * ln_gaussian_law(&y, &other, energy, r.mu_h(), r.sigma2_h()) - ln_q).exp()
            })
            .collect();
        match estimate_from(&vals) {
            Ok(est) => worst = worst.max((est.mean - 1.0).abs() / est.stderr),
            Err(_) => worst = f64::INFINITY,
        }
    }
    check("density_normalization", worst < 4.0, format!("max |z| {worst:.2} over 2 cases"))
}

fn unit_vector(n: usize, rng: &mut StreamRng) -> Vec<Complex64> {
    let g: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng)).collect();
    let norm = g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    g.into_iter().map(|x| x / norm).collect()
}

/// ln of `CN(μ√A u, I + σ²A uuᴴ)` at `y`.
fn ln_gaussian_law(y: &[Complex64], u: &[Complex64], energy: f64, mu: f64, sigma2: f64) -> f64 {
    let e: Vec<Complex64> = y.iter().zip(u).map(|(yi, ui)| yi - ui * (mu * energy.sqrt())).collect();
    let proj: Complex64 = u.iter().zip(&e).map(|(a, b)| a.conj() * b).sum();
    let g = sigma2 * energy;
    -(y.len() as f64) * PI.ln() - g.ln_1p() - e.iter().map(|v| v.norm_sqr()).sum::<f64>()
        + g / (1.0 + g) * proj.norm_sqr()
}

fn pat_ml_without_pilots() -> Check {
    let run = || -> fbl_core::Result<(f64, f64)> {
        let r = rician_from_kappa(1.0)?;
        let cfg = BlockConfig::new(3, 4, 2.0)?;
        let rate = RateSpec::from_log2_m(6.0, 12)?;
        let mc = McConfig::new(SEED, 1000, 8)?;
        let a = rcus_pat_ml(&cfg, &r, &pat_split(&cfg, 0, 0.0)?, &rate, Some(0.8), &mc)?;
        let b = rcus_noncoherent(&cfg, &r, &rate, Some(0.8), &mc)?;
        Ok((a.value, b.value))
    };
    match run() {
        Ok((a, b)) => check("pat_ml_without_pilots", a == b, format!("{a:.6} vs {b:.6}")),
        Err(e) => check("pat_ml_without_pilots", false, e.to_string()),
    }
}

/// Runs every check with the given kernels.
pub fn run(hooks: &Hooks) -> Vec<Check> {
    vec![
        bessel_recurrence(hooks),
        gamma_quadrature(),
        output_density_mass(),
        density_normalization(),
        pat_ml_without_pilots(),
    ]
}

/// Fixed-width report, one line per check.
pub fn report(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!("{:<24} {:<4} {}\n", c.name, if c.pass { "ok" } else { "FAIL" }, c.detail));
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    out.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    out
}

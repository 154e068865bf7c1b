//! Full-vector oracles shared by the integration tests.
#![allow(dead_code)]

use fbl_core::channel::{posterior_params, rician_from_kappa, sample_fading, PatConfig, RicianParams};
use fbl_core::infodens::{log_output_density, NoncoherentKernelParams, PatNnKernelParams};
use fbl_core::mc::{complex_gaussian, StreamRng};
use fbl_core::numerics::{integrate_log_halfline, log_gamma, QuadratureSpec};
use num_complex::Complex64;
use std::f64::consts::{LN_2, PI};

pub fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// Uniform unit vector in C^n.
pub fn random_direction(n: usize, rng: &mut StreamRng) -> Vec<Complex64> {
    let g: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng)).collect();
    let norm = g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    g.into_iter().map(|x| x / norm).collect()
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// ln of the Gaussian law of y given unit direction u: y ~ CN(μ√A u, I + σ²A uuᴴ).
pub fn ln_channel_law(y: &[Complex64], u: &[Complex64], energy: f64, mu: f64, sigma2: f64) -> f64 {
    let nc = y.len() as f64;
    let sqa = energy.sqrt();
    let e: Vec<Complex64> = y.iter().zip(u).map(|(yi, ui)| yi - ui * (mu * sqa)).collect();
    let proj = inner(u, &e).norm_sqr();
    let g = sigma2 * energy;
    -nc * PI.ln() - g.ln_1p() - norm2(&e) + g / (1.0 + g) * proj
}

/// Output of the block channel for direction u.
pub fn channel_output(u: &[Complex64], energy: f64, rician: &RicianParams, rng: &mut StreamRng) -> Vec<Complex64> {
    let h = sample_fading(rician, rng);
    let sqa = energy.sqrt();
    u.iter().map(|ui| ui * (h * sqa) + complex_gaussian(rng)).collect()
}

/// Generalized information density of an independent input/output pair.
pub fn independent_s_density(p: &NoncoherentKernelParams, rician: &RicianParams, rng: &mut StreamRng) -> f64 {
    let energy = p.nc as f64 * p.rho;
    let u = random_direction(p.nc, rng);
    let y = channel_output(&u, energy, rician, rng);
    let other = random_direction(p.nc, rng);
    p.s * ln_channel_law(&y, &other, energy, p.mu_h, p.sigma2_h) - log_output_density(norm2(&y), p, &quad()).unwrap()
}

/// `ln E_U[exp(2 Re(cᴴU))]` over the unit sphere in C^n, by its power series.
pub fn ln_sphere_mgf(n: usize, c_abs: f64) -> f64 {
    let q = c_abs * c_abs;
    let mut sum = 0.0;
    let mut term = 1.0;
    let mut k = 0usize;
    while k < 2000 {
        sum += term;
        k += 1;
        term *= q / (k as f64 * (n - 1 + k) as f64);
        if term < 1e-18 * sum {
            break;
        }
    }
    (sum * 1.0).ln()
}

/// Direct evaluation of the NN information density for a full simulated block.
pub fn direct_t(p: &PatNnKernelParams, rician: &RicianParams, rng: &mut StreamRng, independent: bool) -> f64 {
    let energy = p.nd as f64 * p.rho_d;
    let sqa = energy.sqrt();
    let h = sample_fading(rician, rng);
    let h_hat = h + complex_gaussian(rng) * (1.0 / p.np_rho_p).sqrt();
    let u = random_direction(p.nd, rng);
    let y: Vec<Complex64> = u.iter().map(|ui| ui * (h * sqa) + complex_gaussian(rng)).collect();
    let scored = if independent { random_direction(p.nd, rng) } else { u };
    let dist: f64 = y.iter().zip(&scored).map(|(yi, ui)| (yi - ui * (h_hat * sqa)).norm_sqr()).sum();
    let y2 = norm2(&y);
    let c_abs = p.s * sqa * h_hat.norm() * y2.sqrt();
    let ln_avg = -p.s * (y2 + energy * h_hat.norm_sqr()) + ln_sphere_mgf(p.nd, c_abs);
    -p.s * dist - ln_avg
}

/// Mismatched PAT density of an independent input/output pair, scored
/// against the posterior law of the channel given the estimate.
pub fn independent_s_bar_density(pat: &PatConfig, rician: &RicianParams, s: f64, rng: &mut StreamRng) -> f64 {
    let energy = pat.data_energy();
    let h = sample_fading(rician, rng);
    let h_hat = h + complex_gaussian(rng) * (1.0 / pat.pilot_energy()).sqrt();
    let post = posterior_params(rician, pat.pilot_energy(), h_hat).unwrap();
    let u = random_direction(pat.nd(), rng);
    let y: Vec<Complex64> = u.iter().map(|ui| ui * (h * energy.sqrt()) + complex_gaussian(rng)).collect();
    let other = random_direction(pat.nd(), rng);
    // rotate so that the posterior mean is real, as the kernel assumes
    let phase = if post.mu_p.norm() > 0.0 { post.mu_p.conj() / post.mu_p.norm() } else { Complex64::new(1.0, 0.0) };
    let y_rot: Vec<Complex64> = y.iter().map(|v| v * phase).collect();
    let p =
        NoncoherentKernelParams { nc: pat.nd(), rho: pat.rho_d(), mu_h: post.mu_p.norm(), sigma2_h: post.sigma2_p, s };
    s * ln_channel_law(&y_rot, &other, energy, p.mu_h, p.sigma2_h) - log_output_density(norm2(&y), &p, &quad()).unwrap()
}

/// ln of the total mass of the output density, integrated radially over C^nc.
pub fn output_mass(p: &NoncoherentKernelParams) -> f64 {
    let nc = p.nc;
    let ln_surface = nc as f64 * PI.ln() - log_gamma(nc as f64).unwrap();
    let total = integrate_log_halfline(
        |r| (nc - 1) as f64 * r.ln() + log_output_density(r, p, &quad()).unwrap(),
        &QuadratureSpec::new(1e-10, 45.0, 1 << 16).unwrap(),
    )
    .unwrap();
    ln_surface + total
}

/// Scalar channel (one block of one channel use) with a phase-only input:
/// `E[exp(−[i_s − ln(M−1)]⁺)]` and the CDF of `i_1`, by 2-D quadrature of the
/// output law in polar coordinates relative to the transmitted phase.
pub struct ScalarOracle {
    a: f64,
    v: f64,
}

impl ScalarOracle {
    pub fn new(kappa: f64, rho: f64) -> Self {
        let r = rician_from_kappa(kappa).unwrap();
        ScalarOracle { a: r.mu_h() * rho.sqrt(), v: 1.0 + r.sigma2_h() * rho }
    }

    fn ln_i0(x: f64) -> f64 {
        // large-argument safe ln I0 via scaled series / asymptotics
        if x < 30.0 {
            let q = 0.25 * x * x;
            let (mut sum, mut term, mut k) = (1.0f64, 1.0f64, 1.0f64);
            while term > 1e-18 * sum {
                term *= q / (k * k);
                sum += term;
                k += 1.0;
            }
            sum.ln()
        } else {
            let mut sum = 1.0;
            let mut term = 1.0;
            for k in 1..12 {
                let odd = (2 * k - 1) as f64;
                term *= odd * odd / (k as f64 * 8.0 * x);
                sum += term;
            }
            x - 0.5 * (2.0 * PI * x).ln() + f64::ln(sum)
        }
    }

    fn density(&self, s: f64, r: f64, phi: f64) -> f64 {
        let _ = s;
        (-(r * r - 2.0 * r * self.a * phi.cos() + self.a * self.a) / self.v).exp() / (PI * self.v) * r
    }

    fn info(&self, s: f64, r: f64, phi: f64) -> f64 {
        2.0 * s * self.a * r * phi.cos() / self.v - Self::ln_i0(2.0 * s * self.a * r / self.v)
    }

    fn grid<F: FnMut(f64, f64, f64)>(&self, mut f: F) {
        let r_max = self.a + 12.0 * self.v.sqrt();
        let (nr, nphi) = (1200, 720);
        let hr = r_max / nr as f64;
        let hphi = 2.0 * PI / nphi as f64;
        for i in 0..=nr {
            let r = i as f64 * hr;
            let wr = if i == 0 || i == nr {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * hr
                / 3.0;
            for j in 0..nphi {
                let phi = (j as f64 + 0.5) * hphi;
                f(r, phi, wr * hphi);
            }
        }
    }

    pub fn rcus(&self, s: f64, ln_m1: f64) -> f64 {
        let mut acc = 0.0;
        self.grid(|r, phi, w| acc += w * self.density(s, r, phi) * (-(self.info(s, r, phi) - ln_m1).max(0.0)).exp());
        acc
    }

    pub fn converse_bits(&self, epsilon: f64) -> f64 {
        let mut pts = Vec::new();
        self.grid(|r, phi, w| pts.push((self.info(1.0, r, phi), w * self.density(1.0, r, phi))));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let mut cdf = 0.0;
        let mut best = f64::INFINITY;
        for (lambda, w) in pts {
            cdf += w / total;
            if cdf > epsilon {
                best = best.min(lambda - (cdf - epsilon).ln());
            }
        }
        best / LN_2
    }
}

use fbl_core::channel::{pat_split, posterior_params, rician_from_kappa, sample_fading, BlockConfig, RicianParams};
use fbl_core::infodens::{
    e0_noncoherent, e0_pat_nn, ln_gallager_integral_noncoherent, log_density_given_gain, log_nn_metric_average,
    log_output_density, sample_s, sample_s_bar, sample_t, sample_t_given_estimate, t_from_parts,
    NoncoherentKernelParams, PatNnKernelParams,
};
use fbl_core::mc::{estimate_from, stream_rng};
use fbl_core::numerics::{integrate_log_halfline, log_gamma, QuadratureSpec};
use num_complex::Complex64;
use proptest::prelude::*;

mod common;
use common::*;
use std::f64::consts::PI;

fn ln_gamma_int(n: usize) -> f64 {
    log_gamma(n as f64).unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

// Exponentiated densities are right-skewed, so their sample means sit
// below the truth more often than a normal tail suggests.
const SKEWED_Z: f64 = 4.0;

fn ks_critical_01(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

#[test]
fn density_given_gain_limits() {
    let (nc, y2, noise) = (5, 3.7, 1.6);
    let got = log_density_given_gain(y2, 0.8, nc, 0.0, noise).unwrap();
    let expected = -(nc as f64) * (PI * noise).ln() - y2 / noise;
    assert!((got - expected).abs() < 1e-12);

    let (y2, g2, rho) = (2.2, 0.7, 1.9);
    let got = log_density_given_gain(y2, g2, 1, rho, 1.0).unwrap();
    let x = 2.0 * (y2 * g2 * rho).sqrt();
    let i0: f64 = (0..60).map(|k| (x / 2.0).powi(2 * k) / (1..=k).map(|j| (j * j) as f64).product::<f64>()).sum();
    let expected = (1.0 / PI).ln() - (y2 + g2 * rho) + i0.ln();
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn density_given_gain_integrates_to_one() {
    let (nc, rho, g2) = (4usize, 2.0, 1.3);
    let ln_surface = nc as f64 * PI.ln() - ln_gamma_int(nc);
    let total = integrate_log_halfline(
        |r| (nc - 1) as f64 * r.ln() + log_density_given_gain(r, g2, nc, rho, 1.0).unwrap(),
        &quad(),
    )
    .unwrap();
    assert!((ln_surface + total).abs() < 1e-6, "ln mass {}", ln_surface + total);
}

#[test]
fn output_density_no_signal_limit() {
    let r = rician_from_kappa(1.0).unwrap();
    for &s in &[0.4, 1.0, 1.7] {
        let p = NoncoherentKernelParams::new(3, 0.0, &r, s).unwrap();
        let y2 = 2.9;
        let got = log_output_density(y2, &p, &quad()).unwrap();
        assert!((got - (-3.0 * s * PI.ln() - s * y2)).abs() < 1e-8, "s={s}: {got}");
    }
}

#[test]
fn output_density_matches_fading_average() {
    let r = rician_from_kappa(0.0).unwrap();
    let (nc, rho) = (3usize, 1.5);
    let p = NoncoherentKernelParams::new(nc, rho, &r, 1.0).unwrap();
    let mut rng = stream_rng(17, 0);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_fading(&r, &mut rng).norm_sqr()).collect();
    for &y2 in &[0.5, 3.0, 9.0] {
        let mc = estimate_from(
            &draws.iter().map(|&g2| log_density_given_gain(y2, g2, nc, rho, 1.0).unwrap().exp()).collect::<Vec<_>>(),
        )
        .unwrap();
        let got = log_output_density(y2, &p, &quad()).unwrap().exp();
        assert!((got - mc.mean).abs() < 0.01 * mc.mean, "y2={y2}: {got} vs {}", mc.mean);
    }
}

#[test]
fn output_density_integrates_to_one() {
    for &kappa in &[0.0, 1.0, 10.0, f64::INFINITY] {
        let r = rician_from_kappa(kappa).unwrap();
        let p = NoncoherentKernelParams::new(4, 2.0, &r, 1.0).unwrap();
        let m = output_mass(&p);
        assert!(m.abs() < 1e-6, "kappa={kappa}: ln mass {m}");
    }
}

#[test]
fn rayleigh_closed_form_agrees_with_quadrature() {
    // κ = 1e-14 gives μ ≈ 1e-7, forcing the quadrature path; the density moves by O(μ²)
    let exact = rician_from_kappa(0.0).unwrap();
    let near = rician_from_kappa(1e-14).unwrap();
    for &(nc, rho, s) in &[(1usize, 4.0, 1.0), (3, 1.5, 0.7), (12, 10.0, 1.0), (40, 0.5, 0.4)] {
        let a = NoncoherentKernelParams::new(nc, rho, &exact, s).unwrap();
        let b = NoncoherentKernelParams::new(nc, rho, &near, s).unwrap();
        for &scale in &[0.2, 1.0, 3.0] {
            let y2 = scale * nc as f64 * (1.0 + rho);
            let (x, y) = (log_output_density(y2, &a, &quad()).unwrap(), log_output_density(y2, &b, &quad()).unwrap());
            assert!((x - y).abs() < 1e-8 * x.abs().max(1.0), "nc={nc} rho={rho} y2={y2}: {x} vs {y}");
        }
    }
}

#[test]
fn s_vanishes_without_signal() {
    let r = rician_from_kappa(3.0).unwrap();
    let mut rng = stream_rng(2, 0);
    for &s in &[0.2, 1.0, 2.5] {
        let p = NoncoherentKernelParams::new(6, 0.0, &r, s).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_s(&p, &mut rng, &quad()).unwrap(), 0.0);
        }
    }
}

#[test]
fn s_normalization_under_independent_pairing() {
    for (i, &(nc, rho, kappa, s)) in
        [(3usize, 2.0, 0.0, 0.7), (2, 5.0, 1.0, 1.0), (4, 1.0, f64::INFINITY, 0.5)].iter().enumerate()
    {
        let r = rician_from_kappa(kappa).unwrap();
        let p = NoncoherentKernelParams::new(nc, rho, &r, s).unwrap();
        let mut rng = stream_rng(100 + i as u64, 0);
        let vals: Vec<f64> = (0..100_000).map(|_| independent_s_density(&p, &r, &mut rng).exp()).collect();
        let est = estimate_from(&vals).unwrap();
        assert!((est.mean - 1.0).abs() < SKEWED_Z * est.stderr, "case {i}: {} ± {}", est.mean, est.stderr);
    }
}

/// Block mutual information of the shell input over Rayleigh fading by 2-D quadrature.
fn rayleigh_shell_mutual_information(nc: usize, rho: f64) -> f64 {
    let energy = nc as f64 * rho;
    let spec = QuadratureSpec::new(1e-10, 45.0, 1 << 16).unwrap();
    let ln_py = |r: f64| {
        integrate_log_halfline(|g2| -g2 + log_density_given_gain(r, g2, nc, rho, 1.0).unwrap(), &spec).unwrap()
    };
    let ln_surface = nc as f64 * PI.ln() - ln_gamma_int(nc);
    // h(Y) = −∫ p ln p, integrand split by sign of ln p
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let grid_ln_min = -12.0f64;
    let grid_ln_max = (40.0 * (1.0 + energy)).ln();
    let k = 4000;
    let h = (grid_ln_max - grid_ln_min) / k as f64;
    for i in 0..=k {
        let x = grid_ln_min + i as f64 * h;
        let r = x.exp();
        let lp = ln_py(r);
        let w = if i == 0 || i == k { 0.5 } else { 1.0 };
        let v = w * h * (ln_surface + nc as f64 * x + lp).exp() * lp;
        if v >= 0.0 {
            pos.push(v)
        } else {
            neg.push(-v)
        }
    }
    let hy = neg.iter().sum::<f64>() - pos.iter().sum::<f64>();
    let hy_given_u = nc as f64 * (PI * std::f64::consts::E).ln() + energy.ln_1p();
    hy - hy_given_u
}

#[test]
fn s_mean_matches_mutual_information() {
    let r = rician_from_kappa(0.0).unwrap();
    for &(nc, rho) in &[(2usize, 10.0), (2, 1.0), (4, 4.0), (8, 1.0)] {
        let p = NoncoherentKernelParams::new(nc, rho, &r, 1.0).unwrap();
        let mut rng = stream_rng(5, nc as u64);
        let vals: Vec<f64> = (0..100_000).map(|_| sample_s(&p, &mut rng, &quad()).unwrap()).collect();
        let est = estimate_from(&vals).unwrap();
        let mi = rayleigh_shell_mutual_information(nc, rho);
        assert!((est.mean - mi).abs() < 0.01 * mi + 3.0 * est.stderr, "nc={nc} rho={rho}: {} vs {mi}", est.mean);
    }
}

#[test]
fn s_is_unitarily_invariant() {
    for &kappa in &[0.0, 1.0] {
        let r = rician_from_kappa(kappa).unwrap();
        let p = NoncoherentKernelParams::new(3, 2.5, &r, 0.8).unwrap();
        let energy = 3.0 * 2.5;
        let mut rng = stream_rng(31, 0);
        let fast: Vec<f64> = (0..10_000).map(|_| sample_s(&p, &mut rng, &quad()).unwrap()).collect();
        let mut rng = stream_rng(31, 1);
        let full: Vec<f64> = (0..10_000)
            .map(|_| {
                let u = random_direction(3, &mut rng);
                let y = channel_output(&u, energy, &r, &mut rng);
                p.s * ln_channel_law(&y, &u, energy, p.mu_h, p.sigma2_h)
                    - log_output_density(norm2(&y), &p, &quad()).unwrap()
            })
            .collect();
        let d = ks_statistic(fast, full);
        assert!(d < ks_critical_01(10_000, 10_000), "kappa={kappa}: KS {d}");
    }
}

#[test]
fn t_is_finite_at_zero_estimate() {
    let p = PatNnKernelParams { nd: 5, rho_d: 2.0, np_rho_p: 1.0, s: 0.6 };
    let w1 = Complex64::new(0.3, -0.8);
    let h = Complex64::new(0.5, 0.1);
    let t = t_from_parts(&p, h, Complex64::new(0.0, 0.0), w1, 2.5);
    let energy: f64 = 10.0;
    let wbar = w1 + h * energy.sqrt();
    // the Bessel term reduces to −ln Γ(nd), cancelling the Γ normalisation
    let expected = p.s * (wbar.norm_sqr() - wbar.norm_sqr());
    assert!(t.is_finite());
    assert!((t - expected).abs() < 1e-12, "{t} vs {expected}");
}

#[test]
fn t_matches_direct_metric() {
    let r = rician_from_kappa(0.0).unwrap();
    let p = PatNnKernelParams { nd: 7, rho_d: 2.5, np_rho_p: 2.5, s: 0.3 };
    let mut rng = stream_rng(41, 0);
    let fast: Vec<f64> = (0..100_000).map(|_| sample_t(&p, &r, &mut rng)).collect();
    let mut rng = stream_rng(41, 1);
    let direct: Vec<f64> = (0..100_000).map(|_| direct_t(&p, &r, &mut rng, false)).collect();
    let a = estimate_from(&fast).unwrap();
    let b = estimate_from(&direct).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    let d = ks_statistic(fast[..10_000].to_vec(), direct[..10_000].to_vec());
    assert!(d < ks_critical_01(10_000, 10_000), "KS {d}");
}

#[test]
fn nn_metric_average_matches_series() {
    for &(nd, rho_d, h, y2, s) in &[(1usize, 2.0, 0.7, 3.0, 0.5), (7, 2.5, 1.2, 20.0, 0.3), (30, 1.0, 0.1, 40.0, 1.0)] {
        let energy = nd as f64 * rho_d;
        let c_abs = s * energy.sqrt() * h * f64::sqrt(y2);
        let expected = -s * (y2 + energy * h * h) + ln_sphere_mgf(nd, c_abs);
        assert!((log_nn_metric_average(y2, h, nd, rho_d, s) - expected).abs() < 1e-10);
    }
}

#[test]
fn t_normalization_under_independent_pairing() {
    for (i, &(nd, rho_d, np_rho_p, kappa, s)) in
        [(3usize, 2.0, 1.0, 0.0, 0.7), (6, 1.0, 4.0, 1.0, 0.4), (1, 4.0, 2.0, 0.0, 1.0)].iter().enumerate()
    {
        let r = rician_from_kappa(kappa).unwrap();
        let p = PatNnKernelParams { nd, rho_d, np_rho_p, s };
        let mut rng = stream_rng(200 + i as u64, 0);
        let vals: Vec<f64> = (0..100_000).map(|_| direct_t(&p, &r, &mut rng, true).exp()).collect();
        let est = estimate_from(&vals).unwrap();
        assert!((est.mean - 1.0).abs() < SKEWED_Z * est.stderr, "case {i}: {} ± {}", est.mean, est.stderr);
    }
}

#[test]
fn s_bar_without_pilots_is_s() {
    let r = rician_from_kappa(0.0).unwrap();
    let cfg = BlockConfig::new(4, 8, 2.0).unwrap();
    let pat = pat_split(&cfg, 0, 0.0).unwrap();
    let base = NoncoherentKernelParams::new(8, 2.0, &r, 0.8).unwrap();
    let mut a = stream_rng(9, 0);
    let mut b = stream_rng(9, 0);
    for _ in 0..1000 {
        let x = sample_s_bar(&base, &pat, &r, &mut a, &quad()).unwrap();
        let y = sample_s(&base, &mut b, &quad()).unwrap();
        assert_eq!(x, y);
    }
    let mut a = stream_rng(9, 1);
    let mut b = stream_rng(9, 2);
    let xs: Vec<f64> = (0..10_000).map(|_| sample_s_bar(&base, &pat, &r, &mut a, &quad()).unwrap()).collect();
    let ys: Vec<f64> = (0..10_000).map(|_| sample_s(&base, &mut b, &quad()).unwrap()).collect();
    assert!(ks_statistic(xs, ys) < ks_critical_01(10_000, 10_000));
}

#[test]
fn s_bar_with_perfect_estimate_is_finite() {
    let r = rician_from_kappa(0.0).unwrap();
    let cfg = BlockConfig::new(1, 8, 2.0).unwrap();
    let pat = pat_split(&cfg, 1, 1e12).unwrap_or_else(|_| pat_split(&cfg, 1, 15.0).unwrap());
    let base = NoncoherentKernelParams::new(8, 2.0, &r, 0.8).unwrap();
    let mut rng = stream_rng(12, 0);
    for _ in 0..1000 {
        assert!(sample_s_bar(&base, &pat, &r, &mut rng, &quad()).unwrap().is_finite());
    }
}

#[test]
fn s_bar_discards_pilot_uses() {
    let r = rician_from_kappa(0.0).unwrap();
    let rho = 2.0;
    let cfg = BlockConfig::new(1, 8, rho).unwrap();
    let pat = pat_split(&cfg, 1, rho).unwrap();
    let base = NoncoherentKernelParams::new(8, rho, &r, 1.0).unwrap();
    let mut rng = stream_rng(13, 0);
    let bar: Vec<f64> = (0..100_000).map(|_| sample_s_bar(&base, &pat, &r, &mut rng, &quad()).unwrap()).collect();
    let full: Vec<f64> = (0..100_000).map(|_| sample_s(&base, &mut rng, &quad()).unwrap()).collect();
    let a = estimate_from(&bar).unwrap();
    let b = estimate_from(&full).unwrap();
    assert!(a.mean <= b.mean + 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(), "{} vs {}", a.mean, b.mean);
}

#[test]
fn s_bar_normalization_under_independent_pairing() {
    for (i, &(nc, np, rho, kappa, s)) in [(4usize, 1usize, 2.0, 0.0, 0.8), (6, 2, 1.0, 1.0, 1.0)].iter().enumerate() {
        let r = rician_from_kappa(kappa).unwrap();
        let cfg = BlockConfig::new(1, nc, rho).unwrap();
        let pat = pat_split(&cfg, np, rho).unwrap();
        let mut rng = stream_rng(300 + i as u64, 0);
        let vals: Vec<f64> = (0..100_000).map(|_| independent_s_bar_density(&pat, &r, s, &mut rng).exp()).collect();
        let est = estimate_from(&vals).unwrap();
        assert!((est.mean - 1.0).abs() < SKEWED_Z * est.stderr, "case {i}: {} ± {}", est.mean, est.stderr);
    }
}

#[test]
fn e0_noncoherent_limits() {
    let r = rician_from_kappa(0.0).unwrap();
    assert_eq!(e0_noncoherent(0.0, 8, 3.98107, &r, &quad()).unwrap(), 0.0);
    for &tau in &[0.1, 0.5, 1.0] {
        assert_eq!(e0_noncoherent(tau, 8, 0.0, &r, &quad()).unwrap(), 0.0);
    }
    for &kappa in &[0.0, 2.0, f64::INFINITY] {
        let r = rician_from_kappa(kappa).unwrap();
        let p = NoncoherentKernelParams::new(5, 1.5, &r, 1.0).unwrap();
        let v = ln_gallager_integral_noncoherent(0.0, &p, &quad()).unwrap();
        assert!(v.abs() < 1e-6, "kappa={kappa}: {v}");
    }
    assert!(e0_noncoherent(1.5, 8, 1.0, &r, &quad()).is_err());
}

fn mc_gallager_noncoherent(tau: f64, nc: usize, rho: f64, r: &RicianParams, n: usize, seed: u64) -> (f64, f64) {
    let p = NoncoherentKernelParams::new(nc, rho, r, 1.0 / (1.0 + tau)).unwrap();
    let mut rng = stream_rng(seed, 0);
    let vals: Vec<f64> = (0..n).map(|_| (-tau * sample_s(&p, &mut rng, &quad()).unwrap()).exp()).collect();
    let est = estimate_from(&vals).unwrap();
    (-est.mean.ln(), est.stderr / est.mean)
}

#[test]
fn e0_noncoherent_matches_monte_carlo() {
    for &(tau, nc, rho, kappa, n) in &[
        (1.0, 8usize, 3.98107, 0.0, 100_000usize),
        (0.4, 4, 2.0, 0.0, 100_000),
        (0.6, 3, 2.0, 3.0, 20_000),
        (0.5, 4, 1.0, f64::INFINITY, 50_000),
    ] {
        let r = rician_from_kappa(kappa).unwrap();
        let exact = e0_noncoherent(tau, nc, rho, &r, &quad()).unwrap();
        let (mc, se) = mc_gallager_noncoherent(tau, nc, rho, &r, n, 77);
        assert!((exact - mc).abs() < SKEWED_Z * se + 1e-9, "tau={tau} nc={nc} kappa={kappa}: {exact} vs {mc} ± {se}");
    }
}

#[test]
fn e0_noncoherent_nonnegative_and_rising() {
    let r = rician_from_kappa(0.0).unwrap();
    for &(nc, rho) in &[(2usize, 1.0), (6, 4.0), (24, 2.0)] {
        let mut prev = 0.0;
        for i in 1..=10 {
            let tau = i as f64 / 10.0;
            let v = e0_noncoherent(tau, nc, rho, &r, &quad()).unwrap();
            assert!(v >= 0.0, "nc={nc} tau={tau}: {v}");
            assert!(v >= prev - 1e-9);
            prev = v;
        }
        let small = e0_noncoherent(1e-3, nc, rho, &r, &quad()).unwrap();
        assert!(small > 0.0);
    }
}

#[test]
fn e0_pat_nn_limits() {
    let r = rician_from_kappa(0.0).unwrap();
    let post = posterior_params(&r, 2.5, Complex64::new(0.9, 0.2)).unwrap();
    assert_eq!(e0_pat_nn(0.0, 0.7, Complex64::new(0.9, 0.2), 7, 2.5, &post, &quad()).unwrap(), 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let post0 = posterior_params(&r, 2.5, zero).unwrap();
    let v = e0_pat_nn(0.5, 0.5, zero, 7, 2.5, &post0, &quad()).unwrap();
    assert!(v.is_finite());
}

#[test]
fn e0_pat_nn_matches_conditional_monte_carlo() {
    for &(kappa, nd, rho, tau, s, h_hat) in &[
        (0.0, 7usize, 2.5, 0.2, 0.3, None),
        (0.0, 3, 1.0, 0.9, 0.8, Some(Complex64::new(0.2, -0.4))),
        (2.0, 4, 2.0, 0.3, 0.6, Some(Complex64::new(0.1, 1.1))),
    ] {
        let r = rician_from_kappa(kappa).unwrap();
        let np_rho_p = rho;
        let spread = (r.sigma2_h() + 1.0 / np_rho_p).sqrt();
        let h_hat = h_hat.unwrap_or(Complex64::new(r.mu_h() + spread, 0.0));
        let post = posterior_params(&r, np_rho_p, h_hat).unwrap();
        let exact = e0_pat_nn(tau, s, h_hat, nd, rho, &post, &quad()).unwrap();
        let p = PatNnKernelParams { nd, rho_d: rho, np_rho_p, s };
        let mut rng = stream_rng(58, 0);
        let vals: Vec<f64> =
            (0..100_000).map(|_| (-tau * sample_t_given_estimate(&p, &post, h_hat, &mut rng)).exp()).collect();
        let est = estimate_from(&vals).unwrap();
        let (mc, se) = (-est.mean.ln(), est.stderr / est.mean);
        assert!((exact - mc).abs() < SKEWED_Z * se, "kappa={kappa} nd={nd}: {exact} vs {mc} ± {se}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn samplers_never_nan(nc in 1usize..40, rho in 0.0f64..50.0, kappa in prop::sample::select(vec![0.0, 0.5, 10.0, 1000.0, f64::INFINITY]),
                          s in 0.05f64..3.0, seed in any::<u64>(), np_frac in 0.01f64..0.99) {
        let r = rician_from_kappa(kappa).unwrap();
        let p = NoncoherentKernelParams::new(nc, rho, &r, s).unwrap();
        let mut rng = stream_rng(seed, 0);
        for _ in 0..20 {
            let v = sample_s(&p, &mut rng, &quad()).unwrap();
            prop_assert!(!v.is_nan());
        }
        if nc >= 2 && rho > 0.0 {
            let cfg = BlockConfig::new(1, nc, rho).unwrap();
            let np = 1 + (np_frac * (nc - 1) as f64) as usize % (nc - 1);
            let pat = pat_split(&cfg, np, np_frac * cfg.block_energy() / np as f64).unwrap();
            let t = PatNnKernelParams::new(&pat, s).unwrap();
            for _ in 0..20 {
                prop_assert!(!sample_t(&t, &r, &mut rng).is_nan());
                prop_assert!(!sample_s_bar(&p, &pat, &r, &mut rng, &quad()).unwrap().is_nan());
            }
        }
    }
}

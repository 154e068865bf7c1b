use fbl_core::mc::{
    bootstrap_ci, draw_samples, empirical_cdf_scan, estimate_from, estimate_mean, stream_rng, uniform_open0,
    Accumulator, McConfig,
};
use fbl_core::Error;
use proptest::prelude::*;
use rand::RngCore;

fn normal(rng: &mut dyn RngCore) -> f64 {
    let u1 = uniform_open0(rng);
    let u2 = uniform_open0(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[test]
fn constant_sampler_has_zero_stderr() {
    let mc = McConfig::new(1, 10_000, 7).unwrap();
    for &c in &[0.0, 0.1, 1.0 / 3.0, 0.7, 1e-300] {
        let est = estimate_mean(|_| Ok(c), &mc).unwrap();
        assert_eq!(est.mean, c);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n, 10_000);
    }
}

#[test]
fn reruns_are_bit_identical() {
    let mc = McConfig::new(42, 5_000, 8).unwrap();
    let a = estimate_mean(|r| Ok(uniform_open0(r)), &mc).unwrap();
    let b = estimate_mean(|r| Ok(uniform_open0(r)), &mc).unwrap();
    assert_eq!(a, b);
    let other = estimate_mean(|r| Ok(uniform_open0(r)), &McConfig::new(43, 5_000, 8).unwrap()).unwrap();
    assert_ne!(a.mean, other.mean);
}

#[test]
fn result_independent_of_worker_count() {
    let mc = McConfig::new(9, 20_000, 16).unwrap();
    let many = draw_samples(|r| Ok(uniform_open0(r)), &mc).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| draw_samples(|r| Ok(uniform_open0(r)), &mc).unwrap());
    assert_eq!(many, one);
}

#[test]
fn uniform_mean_and_stderr() {
    let mc = McConfig::new(2024, 100_000, 4).unwrap();
    let est = estimate_mean(|r| Ok(uniform_open0(r)), &mc).unwrap();
    assert!((est.mean - 0.5).abs() < 3.0 * est.stderr);
    let expected = (1.0f64 / 12.0 / 1e5).sqrt();
    assert!((est.stderr - expected).abs() < 0.02 * expected, "{} vs {}", est.stderr, expected);
    assert!((est.stderr - 0.000913).abs() < 2e-5);
}

#[test]
fn sampler_failure_reports_draw_index() {
    let mc = McConfig::new(0, 100, 3).unwrap();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let err = estimate_mean(
        |r| {
            let _ = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            let u = uniform_open0(r);
            if u > 0.999 {
                Err(Error::Infeasible("boom".into()))
            } else {
                Ok(u)
            }
        },
        &mc.with_samples(100_000),
    )
    .unwrap_err();
    match err {
        Error::Sampler { index, .. } => assert!(index < 100_000),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn cdf_scan_is_sorted_and_quantile_is_right() {
    let mc = McConfig::new(5, 100_000, 4).unwrap();
    let v = empirical_cdf_scan(|r| Ok(normal(r)), &mc).unwrap();
    assert!(v.windows(2).all(|w| w[0] <= w[1]));
    let q = v[100];
    assert!((q + 3.09).abs() < 0.15, "quantile {q}");
    let c = empirical_cdf_scan(|_| Ok(2.5), &mc.with_samples(50)).unwrap();
    assert!(c.iter().all(|&x| x == 2.5));
}

#[test]
fn bootstrap_examples() {
    let mut rng = stream_rng(77, 0);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let constant = vec![4.0; 200];
    assert_eq!(bootstrap_ci(&constant, mean, 200, 0.95, &mut rng).unwrap(), (4.0, 4.0));

    let data = draw_samples(|r| Ok(uniform_open0(r)), &McConfig::new(3, 10_000, 1).unwrap()).unwrap();
    let (lo, hi) = bootstrap_ci(&data, mean, 1000, 0.95, &mut rng).unwrap();
    let plug_in = mean(&data);
    assert!(lo <= plug_in && plug_in <= hi);
    let expected = 2.0 * 1.96 * 0.00289;
    assert!(((hi - lo) - expected).abs() < 0.2 * expected, "width {}", hi - lo);

    assert!(matches!(bootstrap_ci(&data[..99], mean, 100, 0.95, &mut rng), Err(Error::Usage { .. })));
}

#[test]
fn streams_are_uncorrelated() {
    let n = 10_000;
    let mut a = stream_rng(11, 0);
    let mut b = stream_rng(11, 1);
    let xs: Vec<f64> = (0..n).map(|_| uniform_open0(&mut a)).collect();
    let ys: Vec<f64> = (0..n).map(|_| uniform_open0(&mut b)).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    assert!(r.abs() < 0.03, "correlation {r}");
}

#[test]
fn config_validation() {
    assert!(McConfig::new(0, 0, 1).is_err());
    assert!(McConfig::new(0, 10, 0).is_err());
    assert!(McConfig::new(0, 10, 11).is_err());
    assert!(McConfig::new(0, 10, 10).is_ok());
}

proptest! {
    #[test]
    fn merge_is_exact(values in prop::collection::vec(-1e6f64..1e6, 2..400), split in 0usize..400) {
        let split = split % values.len();
        let whole = estimate_from(&values).unwrap();
        let mut left: Accumulator = values[..split].iter().copied().collect();
        let right: Accumulator = values[split..].iter().copied().collect();
        left.merge(&right);
        prop_assert_eq!(left.estimate().unwrap(), whole);
        let mut reversed = values.clone();
        reversed.reverse();
        prop_assert_eq!(estimate_from(&reversed).unwrap(), whole);
    }
}

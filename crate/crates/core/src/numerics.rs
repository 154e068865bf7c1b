//! Log-domain special functions, stable accumulation and half-line quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{LN_2, PI, SQRT_2};
use std::ops::{Add, Div, Mul};
use std::sync::OnceLock;

use crate::error::{domain, numerical, usage, Result};

/// A nonnegative quantity stored by its natural logarithm.
///
/// `-inf` encodes zero. NaN and `+inf` are rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogReal(f64);

impl LogReal {
    pub const ZERO: LogReal = LogReal(f64::NEG_INFINITY);
    pub const ONE: LogReal = LogReal(0.0);

    pub fn from_ln(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln == f64::INFINITY {
            return Err(domain("LogReal::from_ln", format!("invalid log magnitude {ln}")));
        }
        Ok(LogReal(ln))
    }

    pub fn from_value(x: f64) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(domain("LogReal::from_value", format!("{x} is not a finite nonnegative value")));
        }
        Ok(LogReal(x.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn powf(self, p: f64) -> LogReal {
        if self.is_zero() {
            return if p == 0.0 { LogReal::ONE } else { LogReal::ZERO };
        }
        LogReal(self.0 * p)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for LogReal {
    type Output = LogReal;
    fn mul(self, rhs: LogReal) -> LogReal {
        LogReal(self.0 + rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for LogReal {
    type Output = LogReal;
    fn div(self, rhs: LogReal) -> LogReal {
        LogReal(self.0 - rhs.0)
    }
}

impl Add for LogReal {
    type Output = LogReal;
    fn add(self, rhs: LogReal) -> LogReal {
        LogReal(log_add_exp(self.0, rhs.0))
    }
}

/// Controls for [`integrate_log_halfline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_log_tail_cut: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { rel_tol: 1e-8, abs_log_tail_cut: 40.0, max_subdivisions: 1 << 16 }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_log_tail_cut: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = QuadratureSpec { rel_tol, abs_log_tail_cut, max_subdivisions };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(domain("QuadratureSpec", format!("rel_tol {} not in (0, 1)", self.rel_tol)));
        }
        if !(self.abs_log_tail_cut >= 20.0) {
            return Err(domain("QuadratureSpec", format!("abs_log_tail_cut {} below 20 nats", self.abs_log_tail_cut)));
        }
        if self.max_subdivisions == 0 {
            return Err(domain("QuadratureSpec", "max_subdivisions must be positive"));
        }
        Ok(())
    }
}

/// Direction of an extremum search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("log_gamma", format!("argument {x} must be positive and finite")));
    }
    Ok(ln_gamma(x))
}

#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    statrs::function::gamma::ln_gamma(x)
}

/// `ln(a + b)` given `ln a` and `ln b`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(tᵢ)` without overflow.
pub fn log_sum_exp(terms: &[f64]) -> Result<f64> {
    if terms.is_empty() {
        return Err(usage("log_sum_exp", "empty term list"));
    }
    if terms.len() == 1 {
        return Ok(terms[0]);
    }
    let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.is_infinite() {
        return Ok(hi);
    }
    let s: f64 = terms.iter().map(|t| (t - hi).exp()).sum();
    Ok(hi + s.ln())
}

/// `ln(1 - e^x)` for `x ≤ 0`.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Modified Bessel function of the first kind
// ---------------------------------------------------------------------------

const SERIES_MAX_Z: f64 = 30.0;
const DEBYE_MIN_ORDER: f64 = 25.0;
const DEBYE_TERMS: usize = 14;

/// `ln(e^{-z} I_ν(z))` for `ν ≥ 0`, `z ≥ 0`.
pub fn log_bessel_i_scaled(nu: f64, z: f64) -> Result<f64> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(domain("log_bessel_i_scaled", format!("order {nu} must be finite and nonnegative")));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(domain("log_bessel_i_scaled", format!("argument {z} must be finite and nonnegative")));
    }
    Ok(ln_bessel_i_scaled(nu, z))
}

/// Unchecked kernel behind [`log_bessel_i_scaled`].
pub(crate) fn ln_bessel_i_scaled(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if z <= SERIES_MAX_Z {
        let half = 0.5 * z;
        return nu * half.ln() - ln_gamma(nu + 1.0) + ln_ascending_series(nu, half * half) - z;
    }
    if nu >= DEBYE_MIN_ORDER {
        return debye_scaled(nu, z);
    }
    if z >= (2.0 * nu * nu).max(SERIES_MAX_Z) {
        return hankel_scaled(nu, z);
    }
    recurrence_scaled(nu, z)
}

/// `ln(I_ν(2x) / x^ν)`, finite at `x = 0` where it equals `-ln Γ(ν+1)`.
pub fn log_bessel_i_over_pow(nu: f64, x: f64) -> f64 {
    let z = 2.0 * x;
    if z <= SERIES_MAX_Z {
        return ln_ascending_series(nu, x * x) - ln_gamma(nu + 1.0);
    }
    ln_bessel_i_scaled(nu, z) + z - nu * x.ln()
}

/// `ln(Γ(ν+1) I_ν(2x) / x^ν)`, the log of the sphere average of `exp(2 Re(cᴴu))` at `|c| = x`.
pub(crate) fn ln_sphere_average(nu: f64, x: f64) -> f64 {
    let z = 2.0 * x;
    if z <= SERIES_MAX_Z {
        return ln_ascending_series(nu, x * x);
    }
    ln_bessel_i_scaled(nu, z) + z - nu * x.ln() + ln_gamma(nu + 1.0)
}

/// `ln Σ_k q^k / (k! (ν+1)_k)`.
fn ln_ascending_series(nu: f64, q: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * (nu + k));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum.ln()
}

fn hankel_scaled(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * z);
        let size = term.abs();
        if size > prev {
            break;
        }
        sum += term;
        if size < 1e-17 * sum.abs() {
            break;
        }
        prev = size;
    }
    sum.ln() - 0.5 * (2.0 * PI * z).ln()
}

/// Debye polynomials with `u_k(p) = p^k · Σ_j c_j p^{2j}`, stored as the `c_j`.
fn debye_polynomials() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut dense = vec![vec![1.0]];
        for k in 0..DEBYE_TERMS - 1 {
            let u = &dense[k];
            let mut next = vec![0.0; u.len() + 3];
            // ½ p²(1−p²) u'
            for (j, &c) in u.iter().enumerate().skip(1) {
                let d = 0.5 * j as f64 * c;
                next[j + 1] += d;
                next[j + 3] -= d;
            }
            // ⅛ ∫₀ᵖ (1−5t²) u(t) dt
            for (j, &c) in u.iter().enumerate() {
                next[j + 1] += 0.125 * c / (j + 1) as f64;
                next[j + 3] -= 0.625 * c / (j + 3) as f64;
            }
            dense.push(next);
        }
        dense.iter().enumerate().map(|(k, u)| u.iter().skip(k).step_by(2).copied().collect()).collect()
    })
}

fn debye_scaled(nu: f64, z: f64) -> f64 {
    let t = z / nu;
    let root = t.hypot(1.0);
    let p = 1.0 / root;
    let p2 = p * p;
    let polys = debye_polynomials();
    let mut sum = 1.0;
    let mut scale = 1.0;
    for u in polys.iter().skip(1) {
        scale *= p / nu;
        let term = u.iter().rev().fold(0.0, |acc, &c| acc * p2 + c) * scale;
        sum += term;
        if term.abs() < 1e-17 * sum {
            break;
        }
    }
    // ν(√(1+t²) − t) + ν ln(t / (1 + √(1+t²)))
    let eta_minus_t = nu / (root + t) + nu * (t / (1.0 + root)).ln();
    eta_minus_t - 0.5 * (2.0 * PI * nu).ln() - 0.5 * root.ln() + sum.ln()
}

fn recurrence_scaled(nu: f64, z: f64) -> f64 {
    let top = nu + (DEBYE_MIN_ORDER - nu).ceil();
    let ln_top = debye_scaled(top, z);
    let mut ratio = (debye_scaled(top + 1.0, z) - ln_top).exp();
    let mut ln_i = ln_top;
    let mut k = top;
    while k > nu + 0.5 {
        ratio = 1.0 / (ratio + 2.0 * k / z);
        ln_i -= ratio.ln();
        k -= 1.0;
    }
    ln_i
}

/// `ln Σ_k x^k / Γ(ν+k+1)`, i.e. `ln(e^x x^{-ν} P(ν, x))` for `ν > 0`.
pub fn log_gamma_series(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return -ln_gamma(nu + 1.0);
    }
    if nu == 0.0 {
        return x;
    }
    if x < nu + 1.0 {
        let mut sum = 1.0;
        let mut term = 1.0;
        let mut k = 1.0;
        loop {
            term *= x / (nu + k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        return sum.ln() - ln_gamma(nu + 1.0);
    }
    // Continued fraction for the upper regularized gamma Q(ν, x).
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - nu;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - nu);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    let ln_q = -x + nu * x.ln() - ln_gamma(nu) + h.ln();
    x - nu * x.ln() + log1m_exp(ln_q)
}

// ---------------------------------------------------------------------------
// Gaussian tail
// ---------------------------------------------------------------------------

/// `Q(x) = P(N(0,1) > x)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / SQRT_2)
}

/// Inverse of [`gaussian_q`].
pub fn gaussian_q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("gaussian_q_inv", format!("probability {p} not in (0, 1)")));
    }
    Ok(SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p))
}

// ---------------------------------------------------------------------------
// Golden-section search
// ---------------------------------------------------------------------------

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for an extremum of `f` on `[lo, hi]`.
///
/// The endpoints take part in the comparison, so a monotone `f` returns the
/// better endpoint exactly.
pub fn golden_section_extremum<F>(mut f: F, lo: f64, hi: f64, tol: f64, sense: Sense) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(usage("golden_section_extremum", format!("empty bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(usage("golden_section_extremum", format!("tolerance {tol} must be positive")));
    }
    let sign = match sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    let mut g = |x: f64| {
        let v = f(x);
        (if v.is_nan() { f64::NEG_INFINITY } else { sign * v }, v)
    };
    let mut best = (lo, f64::NEG_INFINITY, f64::NAN);
    let keep = |x: f64, (score, raw): (f64, f64), best: &mut (f64, f64, f64)| {
        if score > best.1 || best.2.is_nan() {
            *best = (x, score, raw);
        }
    };
    let ga = g(lo);
    keep(lo, ga, &mut best);
    let gb = g(hi);
    keep(hi, gb, &mut best);

    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = g(x1);
    keep(x1, f1, &mut best);
    let mut f2 = g(x2);
    keep(x2, f2, &mut best);
    while b - a > tol {
        if f1.0 >= f2.0 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = g(x1);
            keep(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = g(x2);
            keep(x2, f2, &mut best);
        }
    }
    Ok((best.0, best.2))
}

// ---------------------------------------------------------------------------
// Half-line quadrature
// ---------------------------------------------------------------------------

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const LN_Z_FLOOR: f64 = -700.0;
const LN_Z_CEIL: f64 = 700.0;

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Panel> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    if !kron.is_finite() {
        return Err(numerical("integrate_log_halfline", format!("non-finite integrand on [{a}, {b}]")));
    }
    Ok(Panel { a, b, value: kron * h, error: ((kron - gauss) * h).abs() })
}

/// `ln ∫₀^∞ exp(log_f(z)) dz` for a unimodal integrand.
pub fn integrate_log_halfline<F: Fn(f64) -> f64>(log_f: F, spec: &QuadratureSpec) -> Result<f64> {
    integrate_log_halfline_from(log_f, 1.0, spec)
}

/// As [`integrate_log_halfline`], starting the mode search at `hint`.
///
/// The integral is carried out in `x = ln z`, where every integrand used here
/// has a finite support window after the tail cut.
pub fn integrate_log_halfline_from<F: Fn(f64) -> f64>(log_f: F, hint: f64, spec: &QuadratureSpec) -> Result<f64> {
    let phi = |x: f64| log_f(x.exp()) + x;
    let x0 = if hint > 0.0 && hint.is_finite() { hint.ln().clamp(LN_Z_FLOOR, LN_Z_CEIL) } else { 0.0 };

    let (x_mode, peak) = match locate_mode(&phi, x0)? {
        Some(m) => m,
        None => return Ok(f64::NEG_INFINITY),
    };
    let floor = peak - spec.abs_log_tail_cut;
    let x_lo = tail_cut(&phi, x_mode, -1.0, floor)?;
    let x_hi = tail_cut(&phi, x_mode, 1.0, floor)?;

    let mut scaled = |x: f64| {
        let v = phi(x);
        if v.is_nan() {
            f64::NAN
        } else {
            (v - peak).exp()
        }
    };

    let mut heap = BinaryHeap::new();
    let mut cuts = Vec::with_capacity(9);
    for i in 0..=4 {
        cuts.push(x_lo + (x_mode - x_lo) * i as f64 / 4.0);
    }
    for i in 1..=4 {
        cuts.push(x_mode + (x_hi - x_mode) * i as f64 / 4.0);
    }
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod_panel(&mut scaled, w[0], w[1])?);
        }
    }
    let mut splits = 0usize;
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.error).sum();
        if err <= spec.rel_tol * total.abs() || (total == 0.0 && err == 0.0) {
            if !(total > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            return Ok(peak + total.ln());
        }
        if splits >= spec.max_subdivisions {
            return Err(numerical(
                "integrate_log_halfline",
                format!(
                    "no convergence after {splits} subdivisions: estimate {total:e}, error {err:e}, window [{x_lo}, {x_hi}] in ln z"
                ),
            ));
        }
        // Bisect a batch of the worst panels per pass to keep the bookkeeping cheap.
        let batch = (heap.len() / 4).max(1);
        for _ in 0..batch {
            let worst = heap.pop().expect("panel heap non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                return Err(numerical("integrate_log_halfline", "panel width underflow"));
            }
            heap.push(kronrod_panel(&mut scaled, worst.a, mid)?);
            heap.push(kronrod_panel(&mut scaled, mid, worst.b)?);
            splits += 1;
        }
    }
}

fn eval_checked<F: Fn(f64) -> f64>(phi: &F, x: f64) -> Result<f64> {
    let v = phi(x);
    if v.is_nan() {
        return Err(numerical("integrate_log_halfline", format!("integrand is NaN at z = {:e}", x.exp())));
    }
    Ok(v)
}

/// Returns `(x_mode, phi(x_mode))`, or `None` if the integrand vanishes everywhere probed.
fn locate_mode<F: Fn(f64) -> f64>(phi: &F, x0: f64) -> Result<Option<(f64, f64)>> {
    let mut x = x0;
    let mut fx = eval_checked(phi, x)?;
    if fx == f64::NEG_INFINITY {
        // Probe outward until the integrand is nonzero somewhere.
        let mut step = 1.0;
        let mut found = false;
        while step < 2.0 * (LN_Z_CEIL - LN_Z_FLOOR) {
            for cand in [x0 + step, x0 - step] {
                if (LN_Z_FLOOR..=LN_Z_CEIL).contains(&cand) {
                    let v = eval_checked(phi, cand)?;
                    if v > f64::NEG_INFINITY {
                        x = cand;
                        fx = v;
                        found = true;
                        break;
                    }
                }
            }
            if found {
                break;
            }
            step *= 1.5;
        }
        if !found {
            return Ok(None);
        }
    }
    if fx == f64::INFINITY {
        return Err(numerical("integrate_log_halfline", "integrand overflows"));
    }

    let mut step = 0.25;
    let right = eval_checked(phi, x + step)?;
    let dir = if right > fx {
        1.0
    } else {
        let left = eval_checked(phi, x - step)?;
        if left > fx {
            -1.0
        } else {
            return refine_mode(phi, x - step, x + step, x, fx);
        }
    };
    let mut prev = x;
    loop {
        let next = x + dir * step;
        if !(LN_Z_FLOOR..=LN_Z_CEIL).contains(&next) {
            return Err(numerical(
                "integrate_log_halfline",
                format!("mode search left the range at ln z = {next}; integrand not decaying"),
            ));
        }
        let fnext = eval_checked(phi, next)?;
        if fnext <= fx {
            let (a, b) = if dir > 0.0 { (prev, next) } else { (next, prev) };
            return refine_mode(phi, a, b, x, fx);
        }
        if fnext == f64::INFINITY {
            return Err(numerical("integrate_log_halfline", "integrand overflows"));
        }
        prev = x;
        x = next;
        fx = fnext;
        step *= 1.6;
    }
}

fn refine_mode<F: Fn(f64) -> f64>(phi: &F, a: f64, b: f64, x: f64, fx: f64) -> Result<Option<(f64, f64)>> {
    let (xm, fm) = golden_section_extremum(&phi, a, b, 1e-3, Sense::Max)?;
    if fm.is_nan() {
        return Err(numerical("integrate_log_halfline", "integrand is NaN near its mode"));
    }
    Ok(Some(if fm >= fx { (xm, fm) } else { (x, fx) }))
}

fn tail_cut<F: Fn(f64) -> f64>(phi: &F, x_mode: f64, dir: f64, floor: f64) -> Result<f64> {
    let mut inside = x_mode;
    let mut step = 0.5;
    loop {
        let cand = inside + dir * step;
        let v = eval_checked(phi, cand)?;
        if v < floor {
            let mut a = inside;
            let mut b = cand;
            for _ in 0..10 {
                let m = 0.5 * (a + b);
                if eval_checked(phi, m)? < floor {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Ok(b);
        }
        if !(LN_Z_FLOOR..=LN_Z_CEIL).contains(&cand) {
            return Err(numerical(
                "integrate_log_halfline",
                format!("tail does not fall below the cut within ln z in [{LN_Z_FLOOR}, {LN_Z_CEIL}]"),
            ));
        }
        inside = cand;
        step *= 1.6;
    }
}

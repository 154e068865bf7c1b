//! Inverse problems (maximum rate, minimum SNR and energy per bit) and the
//! outer searches over pilot allocation and diversity order.

use std::fmt;
use std::str::FromStr;

use crate::bounds::{
    minmax_converse_rate, normal_approx_rate, optimize_s, pilot_config, rce_noncoherent, rce_pat_nn,
    rcus_epsilon_from_sums, BlockDensity, BoundEstimate, RateSpec, RcusProblem,
};
use crate::channel::{pat_split, pat_split_fraction, BlockConfig, PatConfig, RicianParams};
use crate::error::{domain, usage, Error, Result};
use crate::mc::McConfig;
use crate::numerics::{golden_section_extremum, Sense};

/// The bounds the solvers can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundId {
    RcusNoncoherent,
    RceNoncoherent,
    RcusPatNn,
    RcePatNn,
    RcusPatMl,
    Converse,
    NormalApprox,
}

impl BoundId {
    pub const ALL: [BoundId; 7] = [
        BoundId::RcusNoncoherent,
        BoundId::RceNoncoherent,
        BoundId::RcusPatNn,
        BoundId::RcePatNn,
        BoundId::RcusPatMl,
        BoundId::Converse,
        BoundId::NormalApprox,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundId::RcusNoncoherent => "rcus_noncoherent",
            BoundId::RceNoncoherent => "rce_noncoherent",
            BoundId::RcusPatNn => "rcus_pat_nn",
            BoundId::RcePatNn => "rce_pat_nn",
            BoundId::RcusPatMl => "rcus_pat_ml",
            BoundId::Converse => "converse",
            BoundId::NormalApprox => "normal_approx",
        }
    }

    /// Bounds that produce a rate directly rather than an error probability.
    pub fn is_rate_bound(&self) -> bool {
        matches!(self, BoundId::Converse | BoundId::NormalApprox)
    }

    pub fn uses_pilots(&self) -> bool {
        matches!(self, BoundId::RcusPatNn | BoundId::RcePatNn | BoundId::RcusPatMl)
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundId::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| usage("BoundId", format!("unknown bound '{s}'")))
    }
}

/// How the pilot power is set when the block SNR changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotMode {
    /// No pilots; only valid for the noncoherent bounds.
    None,
    /// `np` pilots at the data power.
    EqualPower { np: usize },
    /// `np` pilots carrying the fraction `alpha` of the block energy.
    Fraction { np: usize, alpha: f64 },
}

impl PilotMode {
    pub fn np(&self) -> usize {
        match *self {
            PilotMode::None => 0,
            PilotMode::EqualPower { np } | PilotMode::Fraction { np, .. } => np,
        }
    }

    /// The pilot split at the SNR of `cfg`.
    pub fn split(&self, cfg: &BlockConfig) -> Result<PatConfig> {
        match *self {
            PilotMode::None => Err(usage("PilotMode::split", "bound needs a pilot configuration")),
            PilotMode::EqualPower { np } => pat_split(cfg, np, cfg.rho()),
            PilotMode::Fraction { np, alpha } => pat_split_fraction(cfg, np, alpha),
        }
    }
}

/// Quantity solved for by an inverse problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    MaxRate,
    MinSnr,
    MinEbn0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseTarget {
    pub quantity: Quantity,
    pub epsilon: f64,
    pub fixed_rate: Option<RateSpec>,
    pub bound: BoundId,
}

impl InverseTarget {
    pub fn new(quantity: Quantity, epsilon: f64, fixed_rate: Option<RateSpec>, bound: BoundId) -> Result<Self> {
        let t = InverseTarget { quantity, epsilon, fixed_rate, bound };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(domain("InverseTarget", format!("epsilon {} not in (0, 1)", self.epsilon)));
        }
        match (self.quantity, self.fixed_rate.is_some()) {
            (Quantity::MaxRate, true) => Err(usage("InverseTarget", "max_rate takes no fixed rate")),
            (Quantity::MinSnr | Quantity::MinEbn0, false) => {
                Err(usage("InverseTarget", "min_snr and min_ebn0 need a fixed rate"))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluates an error-probability bound; `s` fixes the RCUs parameter when given.
pub fn evaluate_epsilon(
    bound: BoundId,
    cfg: &BlockConfig,
    rician: &RicianParams,
    pilots: PilotMode,
    rate: &RateSpec,
    s: Option<f64>,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    match bound {
        BoundId::RcusNoncoherent => RcusProblem::new(*cfg, *rician, BlockDensity::Noncoherent)?.epsilon(rate, s, mc),
        BoundId::RceNoncoherent => rce_noncoherent(cfg, rician, rate),
        BoundId::RcusPatNn => {
            RcusProblem::new(*cfg, *rician, BlockDensity::PatNn(pilots.split(cfg)?))?.epsilon(rate, s, mc)
        }
        BoundId::RcePatNn => rce_pat_nn(cfg, rician, &pilots.split(cfg)?, rate, mc),
        BoundId::RcusPatMl => {
            let pat = match pilots {
                PilotMode::None => pat_split(cfg, 0, 0.0)?,
                p => p.split(cfg)?,
            };
            RcusProblem::new(*cfg, *rician, BlockDensity::PatMl(pat))?.epsilon(rate, s, mc)
        }
        BoundId::Converse | BoundId::NormalApprox => {
            Err(usage("evaluate_epsilon", format!("{bound} bounds the rate, not the error probability")))
        }
    }
}

/// Evaluates a rate bound in bits per channel use.
pub fn evaluate_rate(
    bound: BoundId,
    cfg: &BlockConfig,
    rician: &RicianParams,
    epsilon: f64,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    match bound {
        BoundId::Converse => minmax_converse_rate(cfg, rician, epsilon, mc),
        BoundId::NormalApprox => {
            Ok(BoundEstimate { value: normal_approx_rate(cfg.rho(), cfg.n(), epsilon)?, ..Default::default() })
        }
        _ => Err(usage("evaluate_rate", format!("{bound} bounds the error probability; use max_rate"))),
    }
}

/// Energy per bit in dB for SNR `rho` when `log2_m` bits are sent over `n` channel uses.
pub fn ebn0_from_snr(rho: f64, n: usize, log2_m: f64) -> f64 {
    10.0 * (n as f64 * rho / log2_m).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

const RATE_TOL_BITS: f64 = 1e-3;

/// Largest `x` in `[lo, hi]` with `feasible(x)`, given `feasible(lo)` and not `feasible(hi)`.
fn bisect_last_feasible<F: FnMut(f64) -> Result<bool>>(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut feasible: F,
) -> Result<(f64, f64)> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Largest `log₂ M` with RCUs estimate at most `epsilon` on fixed sums.
fn rcus_log2m_from_sums(sums: &[f64], n: usize, epsilon: f64) -> Result<f64> {
    let eps_at = |log2_m: f64| -> Result<f64> {
        Ok(rcus_epsilon_from_sums(sums, RateSpec::from_log2_m(log2_m, n)?.ln_m_minus_1())?.mean)
    };
    let mut hi = n as f64;
    let mut guard = 0;
    while eps_at(hi)? <= epsilon {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(crate::error::numerical("max_rate", "rate bracket does not close"));
        }
    }
    let (lo, _) = bisect_last_feasible(0.0, hi, RATE_TOL_BITS * n as f64 * 0.5, |x| Ok(eps_at(x)? <= epsilon))?;
    Ok(lo)
}

/// Maximum rate in bits per channel use such that the bound stays below `epsilon`.
pub fn max_rate(
    bound: BoundId,
    cfg: &BlockConfig,
    rician: &RicianParams,
    pilots: PilotMode,
    epsilon: f64,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain("max_rate", format!("epsilon {epsilon} not in (0, 1)")));
    }
    let n = cfg.n();
    let density = match bound {
        BoundId::Converse | BoundId::NormalApprox => return evaluate_rate(bound, cfg, rician, epsilon, mc),
        BoundId::RceNoncoherent | BoundId::RcePatNn => {
            return max_rate_by_bisection(bound, cfg, rician, pilots, epsilon, mc)
        }
        BoundId::RcusNoncoherent => BlockDensity::Noncoherent,
        BoundId::RcusPatNn => BlockDensity::PatNn(pilots.split(cfg)?),
        BoundId::RcusPatMl => BlockDensity::PatMl(match pilots {
            PilotMode::None => pat_split(cfg, 0, 0.0)?,
            p => p.split(cfg)?,
        }),
    };
    // Each s gives exactly monotone estimates in M on its own draws, so the
    // rate is maximized over s on the pilot run and re-solved on the full run.
    let problem = RcusProblem::new(*cfg, *rician, density)?;
    let draws = problem.draws(&pilot_config(mc))?;
    let (s, _, evals) =
        optimize_s(|s| rcus_log2m_from_sums(&problem.sums_from_draws(s, &draws)?, n, epsilon), Sense::Max)?;
    let sums = problem.block_sums(s, mc)?;
    let log2_m = rcus_log2m_from_sums(&sums, n, epsilon)?;
    // Delta-method error: stderr of ε̂ over the local slope of ε̂ in the rate.
    let step = (0.02 * log2_m).max(RATE_TOL_BITS * n as f64);
    let at = |x: f64| -> Result<crate::mc::Estimate> {
        rcus_epsilon_from_sums(&sums, RateSpec::from_log2_m(x.max(0.0), n)?.ln_m_minus_1())
    };
    let here = at(log2_m)?;
    let slope = (at(log2_m + step)?.mean - at((log2_m - step).max(0.0))?.mean) / (step + step.min(log2_m));
    let stderr = if slope > 0.0 { here.stderr / slope / n as f64 } else { 0.0 };
    let mut out = BoundEstimate {
        value: log2_m / n as f64,
        stderr,
        n_samples: sums.len(),
        s_used: Some(s),
        ..Default::default()
    };
    out.meta.insert("log2_m".into(), log2_m);
    out.meta.insert("epsilon_at_rate".into(), here.mean);
    out.meta.insert("s_evaluations".into(), evals as f64);
    Ok(out)
}

fn max_rate_by_bisection(
    bound: BoundId,
    cfg: &BlockConfig,
    rician: &RicianParams,
    pilots: PilotMode,
    epsilon: f64,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    let n = cfg.n();
    let feasible = |log2_m: f64| -> Result<bool> {
        let rate = RateSpec::from_log2_m(log2_m, n)?;
        Ok(evaluate_epsilon(bound, cfg, rician, pilots, &rate, None, mc)?.value <= epsilon)
    };
    let mut hi = n as f64;
    while feasible(hi)? {
        hi *= 2.0;
    }
    let (lo, _) = bisect_last_feasible(0.0, hi, RATE_TOL_BITS * n as f64 * 0.5, feasible)?;
    let at = evaluate_epsilon(bound, cfg, rician, pilots, &RateSpec::from_log2_m(lo, n)?, None, mc)?;
    let mut out =
        BoundEstimate { value: lo / n as f64, n_samples: at.n_samples, s_used: at.s_used, ..Default::default() };
    out.meta.insert("log2_m".into(), lo);
    out.meta.insert("epsilon_at_rate".into(), at.value);
    Ok(out)
}

pub const SNR_BRACKET_DB: (f64, f64) = (-10.0, 30.0);
pub const SNR_TOL_DB: f64 = 0.02;

/// Minimum SNR (in dB) at which the bound meets `epsilon` at `rate`.
///
/// The estimate's `value` and `stderr` are in dB; `meta` carries the
/// corresponding energy per bit and monotonicity diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn min_snr(
    bound: BoundId,
    cfg_template: &BlockConfig,
    rician: &RicianParams,
    pilots: PilotMode,
    rate: &RateSpec,
    epsilon: f64,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    min_snr_in(bound, cfg_template, rician, pilots, rate, epsilon, mc, SNR_BRACKET_DB)
}

#[allow(clippy::too_many_arguments)]
pub fn min_snr_in(
    bound: BoundId,
    cfg_template: &BlockConfig,
    rician: &RicianParams,
    pilots: PilotMode,
    rate: &RateSpec,
    epsilon: f64,
    mc: &McConfig,
    bracket_db: (f64, f64),
) -> Result<BoundEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain("min_snr", format!("epsilon {epsilon} not in (0, 1)")));
    }
    if !(rate.log2_m() > 0.0) {
        return Err(domain("min_snr", "rate must be positive"));
    }
    if !(bracket_db.0 < bracket_db.1) {
        return Err(usage("min_snr", format!("empty bracket {bracket_db:?}")));
    }
    let n = cfg_template.n();
    // Score of a candidate: log-distance to the target, feasible iff ≤ 0.
    let mut history: Vec<(f64, f64, BoundEstimate)> = Vec::new();
    let mut score = |db: f64| -> Result<f64> {
        let cfg = cfg_template.with_rho(db_to_linear(db))?;
        let (margin, est) = if bound.is_rate_bound() {
            let est = evaluate_rate(bound, &cfg, rician, epsilon, mc)?;
            (rate.rate_bits() - est.value, est)
        } else {
            let est = evaluate_epsilon(bound, &cfg, rician, pilots, rate, None, mc)?;
            (est.value.ln() - epsilon.ln(), est)
        };
        history.push((db, margin, est));
        Ok(margin)
    };
    let (mut lo, mut hi) = bracket_db;
    if score(hi)? > 0.0 {
        return Err(Error::Infeasible(format!(
            "{bound} does not reach epsilon {epsilon} at rate {} below {hi} dB",
            rate.rate_bits()
        )));
    }
    if score(lo)? <= 0.0 {
        hi = lo;
    } else {
        while hi - lo > SNR_TOL_DB {
            let mid = 0.5 * (lo + hi);
            if score(mid)? <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    history.sort_by(|a, b| a.0.total_cmp(&b.0));
    let violations = history.windows(2).filter(|w| w[0].1 <= 0.0 && w[1].1 > 0.0).count();
    let solution = history.iter().find(|h| h.0 == hi).expect("evaluated").clone();
    let below = history.iter().rev().find(|h| h.0 < hi);
    let stderr = match below {
        Some(b) if !bound.is_rate_bound() && solution.2.value > 0.0 => {
            let d_margin = (b.1 - solution.1) / (hi - b.0);
            let rel = solution.2.stderr / solution.2.value;
            if d_margin > 0.0 {
                rel / d_margin
            } else {
                0.0
            }
        }
        Some(b) if bound.is_rate_bound() => {
            let d_margin = (b.1 - solution.1) / (hi - b.0);
            if d_margin > 0.0 {
                solution.2.stderr / d_margin
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let mut out = BoundEstimate {
        value: hi,
        stderr,
        n_samples: solution.2.n_samples,
        s_used: solution.2.s_used,
        ..Default::default()
    };
    out.meta.insert("ebn0_db".into(), ebn0_from_snr(db_to_linear(hi), n, rate.log2_m()));
    out.meta.insert("bound_value".into(), solution.2.value);
    out.meta.insert("bound_stderr".into(), solution.2.stderr);
    out.meta.insert("evaluations".into(), history.len() as f64);
    out.meta.insert("monotonicity_violations".into(), violations as f64);
    Ok(out)
}

/// Pilot power handling in an envelope search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotPower {
    EqualPower,
    Optimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSpec {
    pub np_grid: Vec<usize>,
    pub power: PilotPower,
    /// Bracket and tolerance for the pilot energy fraction in optimized mode.
    pub fraction_search: (f64, f64, f64),
}

impl EnvelopeSpec {
    pub fn new(np_grid: Vec<usize>, power: PilotPower) -> Self {
        EnvelopeSpec { np_grid, power, fraction_search: (1e-3, 1.0 - 1e-3, 0.01) }
    }

    pub fn validate(&self, nc: usize) -> Result<()> {
        if self.np_grid.is_empty() {
            return Err(usage("EnvelopeSpec", "np grid is empty"));
        }
        if let Some(&np) = self.np_grid.iter().find(|&&np| np == 0 || np >= nc) {
            return Err(domain("EnvelopeSpec", format!("np = {np} must lie in 1..{nc}")));
        }
        let (lo, hi, tol) = self.fraction_search;
        if !(0.0 < lo && lo < hi && hi < 1.0 && tol > 0.0) {
            return Err(domain("EnvelopeSpec", format!("fraction search {:?} invalid", self.fraction_search)));
        }
        Ok(())
    }
}

/// One pilot count of an envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub np: usize,
    /// Share of the block energy spent on pilots.
    pub pilot_fraction: f64,
    /// Minimum SNR in dB, or the reason the pilot count failed.
    pub result: std::result::Result<BoundEstimate, Error>,
}

impl EnvelopeRow {
    /// Pilot power relative to the average power, `ρp/ρ`.
    pub fn pilot_power_ratio(&self, nc: usize) -> f64 {
        self.pilot_fraction * nc as f64 / self.np as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub best: EnvelopeRow,
    pub rows: Vec<EnvelopeRow>,
}

/// Minimum-SNR envelope over the pilot count and, in optimized mode, the pilot power.
#[allow(clippy::too_many_arguments)]
pub fn pat_envelope(
    bound: BoundId,
    cfg: &BlockConfig,
    rician: &RicianParams,
    spec: &EnvelopeSpec,
    rate: &RateSpec,
    epsilon: f64,
    mc: &McConfig,
) -> Result<Envelope> {
    if !bound.uses_pilots() {
        return Err(usage("pat_envelope", format!("{bound} has no pilots")));
    }
    spec.validate(cfg.nc())?;
    let nc = cfg.nc();
    let mut rows = Vec::with_capacity(spec.np_grid.len());
    for &np in &spec.np_grid {
        let equal = np as f64 / nc as f64;
        let solve = |alpha: f64| min_snr(bound, cfg, rician, PilotMode::Fraction { np, alpha }, rate, epsilon, mc);
        let row = match spec.power {
            PilotPower::EqualPower => EnvelopeRow { np, pilot_fraction: equal, result: solve(equal) },
            PilotPower::Optimized => {
                let mut best: Option<(f64, BoundEstimate)> = None;
                let mut last_err = None;
                let mut consider = |alpha: f64| -> f64 {
                    match solve(alpha) {
                        Ok(est) => {
                            let v = est.value;
                            if best.as_ref().is_none_or(|b| v < b.1.value) {
                                best = Some((alpha, est));
                            }
                            v
                        }
                        Err(e) => {
                            last_err = Some(e);
                            f64::INFINITY
                        }
                    }
                };
                consider(equal);
                let (lo, hi, tol) = spec.fraction_search;
                golden_section_extremum(&mut consider, lo, hi, tol, Sense::Min)?;
                match best {
                    Some((alpha, est)) => EnvelopeRow { np, pilot_fraction: alpha, result: Ok(est) },
                    None => EnvelopeRow {
                        np,
                        pilot_fraction: equal,
                        result: Err(last_err.unwrap_or_else(|| Error::Infeasible("no pilot power works".into()))),
                    },
                }
            }
        };
        rows.push(row);
    }
    let best = rows
        .iter()
        .filter(|r| r.result.is_ok())
        .min_by(|a, b| {
            let va = a.result.as_ref().map(|e| e.value).unwrap_or(f64::INFINITY);
            let vb = b.result.as_ref().map(|e| e.value).unwrap_or(f64::INFINITY);
            va.total_cmp(&vb)
        })
        .cloned()
        .ok_or_else(|| Error::Infeasible(format!("{bound}: no pilot count in {:?} is feasible", spec.np_grid)))?;
    Ok(Envelope { best, rows })
}

/// One diversity order of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityRow {
    pub ell: usize,
    pub nc: usize,
    pub result: std::result::Result<BoundEstimate, Error>,
}

/// Solves `target` at every diversity order `ell` dividing the blocklength `n`.
///
/// `rho` is the SNR used for `max_rate` targets and ignored otherwise.
/// Failures are recorded per row and the sweep continues.
pub fn diversity_sweep(
    n: usize,
    ells: &[usize],
    rician: &RicianParams,
    pilots: PilotMode,
    rho: f64,
    target: &InverseTarget,
    mc: &McConfig,
) -> Result<Vec<DiversityRow>> {
    target.validate()?;
    if n == 0 || ells.is_empty() {
        return Err(usage("diversity_sweep", "blocklength and diversity list must be nonempty"));
    }
    Ok(ells
        .iter()
        .map(|&ell| {
            let nc = n.checked_div(ell).unwrap_or(0);
            let result = if ell > 0 && n.is_multiple_of(ell) {
                solve_target(target, ell, nc, rician, pilots, rho, mc)
            } else {
                Err(domain("diversity_sweep", format!("ell = {ell} does not divide n = {n}")))
            };
            DiversityRow { ell, nc, result }
        })
        .collect())
}

/// Solves one inverse target at a given block structure.
pub fn solve_target(
    target: &InverseTarget,
    ell: usize,
    nc: usize,
    rician: &RicianParams,
    pilots: PilotMode,
    rho: f64,
    mc: &McConfig,
) -> Result<BoundEstimate> {
    match target.quantity {
        Quantity::MaxRate => {
            max_rate(target.bound, &BlockConfig::new(ell, nc, rho)?, rician, pilots, target.epsilon, mc)
        }
        Quantity::MinSnr | Quantity::MinEbn0 => {
            let rate = target.fixed_rate.ok_or_else(|| usage("solve_target", "fixed rate missing"))?;
            let cfg = BlockConfig::new(ell, nc, 1.0)?;
            let mut est = min_snr(target.bound, &cfg, rician, pilots, &rate, target.epsilon, mc)?;
            if target.quantity == Quantity::MinEbn0 {
                est.value = est.meta["ebn0_db"];
            }
            Ok(est)
        }
    }
}

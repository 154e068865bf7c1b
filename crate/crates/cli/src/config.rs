//! Run parameters: a flat key-value file whose keys mirror the flags.

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use fbl_core::bounds::RateSpec;
use fbl_core::channel::{rician_from_kappa, BlockConfig, RicianParams};
use fbl_core::mc::McConfig;
use fbl_core::solvers::{db_to_linear, BoundId, PilotMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_STREAMS: usize = 16;

/// What a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Solve {
    /// The bound itself: ε for error-probability bounds, the rate for rate bounds.
    Value,
    MaxRate,
    MinSnr,
    MinEbn0,
}

impl Solve {
    pub fn name(&self) -> &'static str {
        match self {
            Solve::Value => "value",
            Solve::MaxRate => "max_rate",
            Solve::MinSnr => "min_snr",
            Solve::MinEbn0 => "min_ebn0",
        }
    }

    pub fn needs_snr(&self) -> bool {
        matches!(self, Solve::Value | Solve::MaxRate)
    }
}

/// Every setting of a run. All fields are optional so that a file and the
/// command line can be layered.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Params {
    /// Bound to evaluate (rcus_noncoherent, rce_noncoherent, rcus_pat_nn, rce_pat_nn, rcus_pat_ml, converse, normal_approx)
    #[arg(long)]
    pub bound: Option<String>,
    /// Number of coherence blocks per codeword
    #[arg(long)]
    pub ell: Option<usize>,
    /// Channel uses per coherence block
    #[arg(long)]
    pub nc: Option<usize>,
    /// Blocklength; fixes nc = n / ell when sweeping ell
    #[arg(long)]
    pub n: Option<usize>,
    /// Average SNR per channel use in dB
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Rician factor (0 is Rayleigh, inf is AWGN)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Rate in bits per channel use
    #[arg(long, conflicts_with = "log2m")]
    pub rate_bits: Option<f64>,
    /// Codebook size as log2 M
    #[arg(long)]
    pub log2m: Option<f64>,
    /// Target error probability
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Pilot symbols per coherence block
    #[arg(long)]
    pub np: Option<usize>,
    /// Pilot SNR in dB
    #[arg(long, conflicts_with_all = ["equal_power", "pilot_fraction"])]
    pub rho_p_db: Option<f64>,
    /// Pilots at the data power
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub equal_power: Option<bool>,
    /// Share of the block energy spent on pilots
    #[arg(long, conflicts_with = "equal_power")]
    pub pilot_fraction: Option<f64>,
    /// Fixed RCUs parameter s (optimized when absent)
    #[arg(long)]
    pub s: Option<f64>,
    /// What to report
    #[arg(long, value_enum)]
    pub solve: Option<Solve>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo samples
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random streams the samples are spread over
    #[arg(long)]
    pub streams: Option<usize>,
    /// Output path (standard output when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => { $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )* };
}

impl Params {
    pub fn from_file(path: &Path) -> Result<Params> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// `self` with every field set in `top` replaced.
    pub fn overlay(mut self, top: &Params) -> Params {
        overlay!(
            self,
            top,
            bound,
            ell,
            nc,
            n,
            snr_db,
            kappa,
            rate_bits,
            log2m,
            epsilon,
            np,
            rho_p_db,
            equal_power,
            pilot_fraction,
            s,
            solve,
            seed,
            samples,
            streams,
            out
        );
        self
    }

    /// Flag form of the parameters, in a fixed order.
    pub fn to_flags(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |name: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("--{name}"));
                out.push(v);
            }
        };
        push("bound", self.bound.clone());
        push("ell", self.ell.map(|v| v.to_string()));
        push("nc", self.nc.map(|v| v.to_string()));
        push("n", self.n.map(|v| v.to_string()));
        push("snr-db", self.snr_db.map(fmt_f64));
        push("kappa", self.kappa.map(fmt_f64));
        push("rate-bits", self.rate_bits.map(fmt_f64));
        push("log2m", self.log2m.map(fmt_f64));
        push("epsilon", self.epsilon.map(fmt_f64));
        push("np", self.np.map(|v| v.to_string()));
        push("rho-p-db", self.rho_p_db.map(fmt_f64));
        push("equal-power", self.equal_power.map(|v| v.to_string()));
        push("pilot-fraction", self.pilot_fraction.map(fmt_f64));
        push("s", self.s.map(fmt_f64));
        push("solve", self.solve.map(|v| v.name().to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("samples", self.samples.map(|v| v.to_string()));
        push("streams", self.streams.map(|v| v.to_string()));
        out
    }

    pub fn bound_id(&self) -> Result<BoundId> {
        let name = self.bound.as_deref().ok_or_else(|| anyhow!("field `bound`: required"))?;
        name.parse().map_err(|_| {
            let names: Vec<_> = BoundId::ALL.iter().map(|b| b.name()).collect();
            anyhow!("field `bound`: unknown bound `{name}` (expected one of {})", names.join(", "))
        })
    }

    pub fn solve(&self) -> Solve {
        self.solve.unwrap_or(Solve::Value)
    }

    pub fn ell(&self) -> Result<usize> {
        require(self.ell, "ell")
    }

    pub fn nc(&self) -> Result<usize> {
        match (self.nc, self.n, self.ell) {
            (Some(nc), _, _) => Ok(nc),
            (None, Some(n), Some(ell)) if ell > 0 && n % ell == 0 => Ok(n / ell),
            (None, Some(n), Some(ell)) => bail!("field `n`: {n} is not a multiple of ell = {ell}"),
            _ => bail!("field `nc`: required"),
        }
    }

    pub fn blocklength(&self) -> Result<usize> {
        Ok(self.ell()? * self.nc()?)
    }

    pub fn rho(&self) -> Result<f64> {
        let db = require(self.snr_db, "snr-db")?;
        if !db.is_finite() {
            bail!("field `snr-db`: {db} is not finite");
        }
        Ok(db_to_linear(db))
    }

    /// Block configuration; the SNR is a placeholder when it is being solved for.
    pub fn block(&self) -> Result<BlockConfig> {
        let rho = if self.solve().needs_snr() { self.rho()? } else { 1.0 };
        BlockConfig::new(self.ell()?, self.nc()?, rho).map_err(|e| anyhow!("fields `ell`/`nc`/`snr-db`: {e}"))
    }

    pub fn rician(&self) -> Result<RicianParams> {
        rician_from_kappa(require(self.kappa, "kappa")?).map_err(|e| anyhow!("field `kappa`: {e}"))
    }

    pub fn rate(&self) -> Result<RateSpec> {
        let n = self.blocklength()?;
        match (self.rate_bits, self.log2m) {
            (Some(_), Some(_)) => bail!("fields `rate-bits` and `log2m` are mutually exclusive"),
            (Some(r), None) => RateSpec::from_rate_bits(r, n).map_err(|e| anyhow!("field `rate-bits`: {e}")),
            (None, Some(m)) => RateSpec::from_log2_m(m, n).map_err(|e| anyhow!("field `log2m`: {e}")),
            (None, None) => bail!("field `rate-bits`: required (or `log2m`)"),
        }
    }

    pub fn epsilon(&self) -> Result<f64> {
        let e = require(self.epsilon, "epsilon")?;
        if !(e > 0.0 && e < 1.0) {
            bail!("field `epsilon`: {e} not in (0, 1)");
        }
        Ok(e)
    }

    pub fn pilots(&self, bound: BoundId) -> Result<PilotMode> {
        let np = self.np;
        if !bound.uses_pilots() {
            if np.unwrap_or(0) > 0 || self.rho_p_db.is_some() || self.pilot_fraction.is_some() {
                bail!("field `np`: bound {bound} takes no pilots");
            }
            return Ok(PilotMode::None);
        }
        let Some(np) = np else {
            if bound == BoundId::RcusPatMl {
                return Ok(PilotMode::None);
            }
            bail!("field `np`: required by bound {bound}");
        };
        let exclusive = [self.rho_p_db.is_some(), self.equal_power == Some(true), self.pilot_fraction.is_some()];
        if exclusive.iter().filter(|&&x| x).count() > 1 {
            bail!("fields `rho-p-db`, `equal-power` and `pilot-fraction` are mutually exclusive");
        }
        if np == 0 {
            return if bound == BoundId::RcusPatMl {
                Ok(PilotMode::None)
            } else {
                bail!("field `np`: bound {bound} needs np >= 1")
            };
        }
        if self.equal_power == Some(true) {
            return Ok(PilotMode::EqualPower { np });
        }
        if let Some(alpha) = self.pilot_fraction {
            return Ok(PilotMode::Fraction { np, alpha });
        }
        let Some(db) = self.rho_p_db else {
            bail!("field `rho-p-db`: required by bound {bound} (or pass `equal-power` or `pilot-fraction`)");
        };
        if !self.solve().needs_snr() {
            bail!(
                "field `rho-p-db`: a fixed pilot SNR cannot follow a solved SNR; use `equal-power` or `pilot-fraction`"
            );
        }
        // pilot energy as a share of the block energy at the configured SNR
        let block = self.nc()? as f64 * self.rho()?;
        Ok(PilotMode::Fraction { np, alpha: np as f64 * db_to_linear(db) / block })
    }

    pub fn mc(&self) -> Result<McConfig> {
        McConfig::new(
            self.seed.unwrap_or(DEFAULT_SEED),
            self.samples.unwrap_or(DEFAULT_SAMPLES),
            self.streams.unwrap_or(DEFAULT_STREAMS),
        )
        .map_err(|e| anyhow!("fields `seed`/`samples`/`streams`: {e}"))
    }
}

fn require<T: Copy>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("field `{field}`: required"))
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

//! Subcommand implementations.

use crate::config::{fmt_f64, Params, Solve};
use crate::output::{num, outcome_cells, Table, OUTCOME_COLUMNS};
use anyhow::{bail, Context, Result};
use fbl_core::bounds::BoundEstimate;
use fbl_core::solvers::{
    evaluate_epsilon, evaluate_rate, max_rate, min_snr, pat_envelope, BoundId, Envelope, EnvelopeSpec, PilotPower,
};
use rayon::prelude::*;
use serde::Deserialize;
use std::path::{Path, PathBuf};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Evaluates the configured bound or inverse problem.
pub fn evaluate(p: &Params) -> Result<BoundEstimate> {
    let bound = p.bound_id()?;
    let solve = p.solve();
    let cfg = p.block()?;
    let rician = p.rician()?;
    let mc = p.mc()?;
    if p.s.is_some() && (bound.is_rate_bound() || solve != Solve::Value) {
        bail!("field `s`: only applies to a direct evaluation of an error-probability bound");
    }
    let pilots = p.pilots(bound)?;
    let est = match solve {
        Solve::Value if bound.is_rate_bound() => evaluate_rate(bound, &cfg, &rician, p.epsilon()?, &mc)?,
        Solve::Value => evaluate_epsilon(bound, &cfg, &rician, pilots, &p.rate()?, p.s, &mc)?,
        Solve::MaxRate => max_rate(bound, &cfg, &rician, pilots, p.epsilon()?, &mc)?,
        Solve::MinSnr | Solve::MinEbn0 => {
            let mut est = min_snr(bound, &cfg, &rician, pilots, &p.rate()?, p.epsilon()?, &mc)?;
            if solve == Solve::MinEbn0 {
                let snr = est.value;
                est.value = est.meta["ebn0_db"];
                est.meta.insert("snr_db".into(), snr);
            }
            est
        }
    };
    Ok(est)
}

fn provenance(table: &mut Table, command: &str, p: &Params, rerun: String) {
    table.comment(format!("fbl {VERSION} {command}"));
    table.comment(format!(
        "seed = {}, samples = {}, streams = {}",
        p.seed.unwrap_or(crate::config::DEFAULT_SEED),
        p.samples.unwrap_or(crate::config::DEFAULT_SAMPLES),
        p.streams.unwrap_or(crate::config::DEFAULT_STREAMS)
    ));
    table.comment(format!("config: {}", p.to_flags().join(" ")));
    table.comment(format!("rerun: {rerun}"));
}

fn rerun_line(command: &str, leading: &[String], p: &Params) -> String {
    let mut parts = vec!["fbl".to_string(), command.to_string()];
    parts.extend(leading.iter().cloned());
    parts.extend(p.to_flags());
    if let Some(out) = &p.out {
        parts.push("--out".into());
        parts.push(out.display().to_string());
    }
    parts.join(" ")
}

const BOUND_COLUMNS: [&str; 15] = [
    "bound",
    "quantity",
    "ell",
    "nc",
    "snr_db",
    "kappa",
    "rate_bits",
    "log2m",
    "epsilon",
    "np",
    "rho_p_db",
    "pilot_fraction",
    "equal_power",
    "s",
    "seed",
];

/// `fbl bound`: one record for a single configuration.
pub fn cmd_bound(p: &Params) -> Result<Table> {
    let est = evaluate(p)?;
    let mut columns: Vec<&str> = BOUND_COLUMNS.to_vec();
    columns.extend(["samples", "streams"]);
    columns.extend(OUTCOME_COLUMNS);
    let mut table = Table::new(&columns);
    provenance(&mut table, "bound", p, rerun_line("bound", &[], p));
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut row = vec![
        p.bound.clone().unwrap_or_default(),
        p.solve().name().to_string(),
        p.ell.map(|v| v.to_string()).unwrap_or_default(),
        p.nc()?.to_string(),
        opt(p.snr_db),
        opt(p.kappa),
        opt(p.rate_bits),
        opt(p.log2m),
        opt(p.epsilon),
        p.np.map(|v| v.to_string()).unwrap_or_default(),
        opt(p.rho_p_db),
        opt(p.pilot_fraction),
        p.equal_power.map(|v| v.to_string()).unwrap_or_default(),
        opt(p.s),
        p.mc()?.seed.to_string(),
        p.mc()?.n_samples.to_string(),
        p.mc()?.n_streams.to_string(),
    ];
    row.extend(outcome_cells(&Ok(est)));
    table.push(row);
    Ok(table)
}

/// Swept parameter of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Ell,
    RhoDb,
    Kappa,
    Np,
    RhoP,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Ell => "ell",
            Axis::RhoDb => "rho_db",
            Axis::Kappa => "kappa",
            Axis::Np => "np",
            Axis::RhoP => "rho_p",
        }
    }

    fn is_count(&self) -> bool {
        matches!(self, Axis::Ell | Axis::Np)
    }

    /// `base` with the swept field set to `v`.
    fn apply(&self, base: &Params, v: f64) -> Params {
        let mut p = base.clone();
        match self {
            Axis::Ell => {
                p.ell = Some(v as usize);
                if p.n.is_some() {
                    p.nc = None;
                }
            }
            Axis::RhoDb => p.snr_db = Some(v),
            Axis::Kappa => p.kappa = Some(v),
            Axis::Np => p.np = Some(v as usize),
            Axis::RhoP => p.rho_p_db = Some(v),
        }
        p
    }
}

/// A sweep file: one axis, the bounds to evaluate and the fixed configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Bounds to sweep; defaults to the fixed configuration's bound.
    #[serde(default)]
    pub bounds: Vec<String>,
    /// Output prefix; each bound is written to `<out>_<bound>.csv`.
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub fixed: Params,
}

impl SweepSpec {
    pub fn from_file(path: &Path) -> Result<SweepSpec> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec: SweepSpec = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            bail!("field `values`: axis {} has no values", self.axis.name());
        }
        if let Some(w) = self.values.windows(2).find(|w| !(w[0] < w[1])) {
            bail!("field `values`: not strictly increasing at {} -> {}", w[0], w[1]);
        }
        if self.axis.is_count() {
            if let Some(v) = self.values.iter().find(|v| !(v.fract() == 0.0 && **v >= 0.0)) {
                bail!("field `values`: {} is not a count", v);
            }
        }
        if self.bounds.is_empty() && self.fixed.bound.is_none() {
            bail!("field `bounds`: required (or `bound` in [fixed])");
        }
        Ok(())
    }

    fn bound_names(&self) -> Vec<String> {
        if self.bounds.is_empty() {
            vec![self.fixed.bound.clone().unwrap_or_default()]
        } else {
            self.bounds.clone()
        }
    }
}

/// `fbl sweep`: one table per bound, rows in axis order. Row failures are
/// recorded in the `error` column.
pub fn cmd_sweep(spec_path: &Path, spec: &SweepSpec, overrides: &Params) -> Result<Vec<(Option<PathBuf>, Table)>> {
    let fixed = spec.fixed.clone().overlay(overrides);
    let mut tables = Vec::new();
    for name in spec.bound_names() {
        let mut p = fixed.clone();
        p.bound = Some(name.clone());
        p.bound_id()?;
        let results: Vec<std::result::Result<BoundEstimate, String>> =
            spec.values.par_iter().map(|&v| evaluate(&spec.axis.apply(&p, v)).map_err(|e| format!("{e:#}"))).collect();
        let mut columns = vec![spec.axis.name()];
        columns.extend(OUTCOME_COLUMNS);
        let mut table = Table::new(&columns);
        provenance(&mut table, "sweep", &p, rerun_line("sweep", &[spec_path.display().to_string()], overrides));
        table.comment(format!("axis = {}, bound = {name}, quantity = {}", spec.axis.name(), p.solve().name()));
        for (v, r) in spec.values.iter().zip(&results) {
            let mut row = vec![num(*v)];
            row.extend(outcome_cells(r));
            table.push(row);
        }
        let out = overrides.out.clone().or_else(|| spec.out.clone()).map(|prefix| {
            let mut s = prefix.into_os_string();
            s.push(format!("_{name}.csv"));
            PathBuf::from(s)
        });
        tables.push((out, table));
    }
    Ok(tables)
}

/// `fbl envelope`: minimum SNR per pilot count.
pub fn cmd_envelope(p: &Params, np_grid: Option<Vec<usize>>) -> Result<Table> {
    let bound = p.bound_id()?;
    let mut q = p.clone();
    q.solve = Some(Solve::MinSnr);
    let cfg = q.block()?;
    let nc = cfg.nc();
    let grid = np_grid.unwrap_or_else(|| (1..nc).collect());
    let power = if p.equal_power == Some(true) { PilotPower::EqualPower } else { PilotPower::Optimized };
    if p.rho_p_db.is_some() || p.pilot_fraction.is_some() || p.np.is_some() {
        bail!(
            "fields `np`, `rho-p-db` and `pilot-fraction`: set by the envelope search; use --np-grid and --equal-power"
        );
    }
    let spec = EnvelopeSpec::new(grid.clone(), power);
    let env: Envelope = pat_envelope(bound, &cfg, &p.rician()?, &spec, &p.rate()?, p.epsilon()?, &p.mc()?)?;
    let mut columns = vec!["np", "pilot_fraction", "rho_p_over_rho", "ebn0_db"];
    columns.extend(OUTCOME_COLUMNS);
    let mut table = Table::new(&columns);
    let grid_flag = grid.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    provenance(&mut table, "envelope", p, rerun_line("envelope", &["--np-grid".into(), grid_flag], p));
    table.comment(format!(
        "pilot power = {}, best np = {}, value = minimum SNR in dB",
        if power == PilotPower::EqualPower { "equal" } else { "optimized" },
        env.best.np
    ));
    for row in &env.rows {
        let result = row.result.clone().map_err(|e| e.to_string());
        let ebn0 = result.as_ref().ok().and_then(|e| e.meta.get("ebn0_db").copied());
        let mut cells = vec![
            row.np.to_string(),
            num(row.pilot_fraction),
            num(row.pilot_power_ratio(nc)),
            ebn0.map(num).unwrap_or_default(),
        ];
        cells.extend(outcome_cells(&result));
        table.push(cells);
    }
    Ok(table)
}

pub fn bound_names() -> String {
    BoundId::ALL.iter().map(|b| b.name()).collect::<Vec<_>>().join(", ")
}

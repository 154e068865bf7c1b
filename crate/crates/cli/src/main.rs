use anyhow::Result;
use clap::{Parser, Subcommand};
use fbl_cli::commands::{cmd_bound, cmd_envelope, cmd_sweep, SweepSpec};
use fbl_cli::config::Params;
use fbl_cli::selftest::{self, Hooks};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fbl", version, about = "Finite-blocklength bounds for Rician block-fading channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one bound, or solve for a rate or SNR
    Bound {
        /// TOML file with the same keys as the flags; flags win
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: Params,
    },
    /// Sweep one parameter as described by a spec file
    Sweep {
        spec: PathBuf,
        #[command(flatten)]
        params: Params,
    },
    /// Minimum SNR of a pilot-assisted bound per pilot count
    Envelope {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pilot counts to try (default 1..nc)
        #[arg(long, value_delimiter = ',')]
        np_grid: Option<Vec<usize>>,
        #[command(flatten)]
        params: Params,
    },
    /// Run the fast invariant checks
    Selftest {
        #[arg(long, hide = true)]
        inject_bessel_fault: bool,
    },
}

fn layered(config: Option<PathBuf>, flags: &Params) -> Result<Params> {
    let base = match config {
        Some(path) => Params::from_file(&path)?,
        None => Params::default(),
    };
    Ok(base.overlay(flags))
}

fn broken_bessel(nu: f64, z: f64) -> fbl_core::Result<f64> {
    fbl_core::numerics::log_bessel_i_scaled(nu, z).map(|v| v * (1.0 + 1e-6))
}

fn run(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    match cli.command {
        Command::Bound { config, params } => {
            let p = layered(config, &params)?;
            cmd_bound(&p)?.emit(p.out.as_deref())?;
        }
        Command::Sweep { spec, params } => {
            let s = SweepSpec::from_file(&spec)?;
            for (path, table) in cmd_sweep(&spec, &s, &params)? {
                table.emit(path.as_deref())?;
            }
        }
        Command::Envelope { config, np_grid, params } => {
            let p = layered(config, &params)?;
            cmd_envelope(&p, np_grid)?.emit(p.out.as_deref())?;
        }
        Command::Selftest { inject_bessel_fault } => {
            let hooks =
                if inject_bessel_fault { Hooks { log_bessel_i_scaled: broken_bessel } } else { Hooks::default() };
            let checks = selftest::run(&hooks);
            print!("{}", selftest::report(&checks));
            return Ok(checks.iter().all(|c| c.pass));
        }
    }
    eprintln!("# wall time {:.3} s", start.elapsed().as_secs_f64());
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

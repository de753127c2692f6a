use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use muskat_core::harness::{dn_suite, emit_report, para_suite, parse_config, run_convergence_sweep, SuiteCheck};
use muskat_core::integrator::{integrate, write_series_csv, write_snapshot, RunStatus};
use muskat_core::MuskatError;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BREACH: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "muskat", about = "Muskat interface simulations and operator checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Single simulation at the configured surface tension.
    Run,
    /// Convergence study over the configured surface-tension sweep.
    Sweep,
    /// Elliptic operator checks.
    DnTest,
    /// Paradifferential calculus checks.
    ParaTest,
    /// Print the version.
    Version,
}

fn exit_code(e: &MuskatError) -> u8 {
    match e {
        MuskatError::Config { .. }
        | MuskatError::Validation(_)
        | MuskatError::InvalidArgument(_)
        | MuskatError::Precondition(_)
        | MuskatError::Io { .. } => EXIT_VALIDATION,
        MuskatError::MonitorBreach { .. } => EXIT_BREACH,
        _ => EXIT_NUMERICAL,
    }
}

fn config_path(cli: &Cli) -> Result<&Path, MuskatError> {
    cli.config
        .as_deref()
        .ok_or_else(|| MuskatError::InvalidArgument("--config PATH is required".into()))
}

fn report(checks: &[SuiteCheck]) -> u8 {
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        0
    } else {
        EXIT_NUMERICAL
    }
}

fn run(cli: &Cli) -> Result<u8, MuskatError> {
    match cli.command {
        Command::Version => {
            println!("muskat {}", env!("CARGO_PKG_VERSION"));
            Ok(0)
        }
        Command::DnTest => Ok(report(&dn_suite(cli.seed, 64)?)),
        Command::ParaTest => Ok(report(&para_suite()?)),
        Command::Run => {
            let cfg = parse_config(config_path(cli)?)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            std::fs::create_dir_all(&out).map_err(|e| MuskatError::Io { path: out.clone(), source: e })?;
            let model = cfg.model(cfg.params.surface_tension)?;
            let series = integrate(&cfg.eta0(), model.as_ref(), &cfg.sim)?;
            write_series_csv(&series, &out.join("series.csv"))?;
            write_snapshot(series.last(), &out.join("final.bin"))?;
            match &series.status {
                RunStatus::Completed => {
                    println!("completed t = {} in {} steps", series.last().t, series.states.len() - 1);
                    Ok(0)
                }
                RunStatus::HypothesisBreach { t, reason } => {
                    eprintln!("monitor breach at t = {t}: {reason}");
                    Ok(EXIT_BREACH)
                }
            }
        }
        Command::Sweep => {
            let cfg = parse_config(config_path(cli)?)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let rep = run_convergence_sweep(&cfg, cli.threads)?;
            emit_report(&rep, &out)?;
            for (name, fit) in [
                ("sup H^(s-1)", &rep.fits.sup_hsm1),
                ("L2t H^(s-1/2)", &rep.fits.l2t_hsmhalf),
                ("sup H^(s-2)", &rep.fits.sup_hsm2),
                ("L2t H^(s-3/2)", &rep.fits.l2t_hsm3half),
            ] {
                match &fit.degenerate {
                    None => println!(
                        "{name}: order {:.3} [{:.3}, {:.3}]",
                        fit.slope, fit.interval.0, fit.interval.1
                    ),
                    Some(why) => println!("{name}: degenerate fit ({why})"),
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swaprelay::coincidence::{representative_heralds, visibility_with, Method, SweepVariable};
use swaprelay::oracle::oracle_coincidence;
use swaprelay::transfer::Transfer;
use swaprelay::RotatorAngles;
use swaprelay_cli::runner::{self, with_workers};
use swaprelay_cli::{CliError, ConfigBuilder, RunConfig};

/// Coincidence probabilities and visibility of an entanglement-swapping relay.
#[derive(Parser)]
#[command(name = "swaprelay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Visibility at one configuration.
    Visibility(Opts),
    /// Q values over the rotator angle delta_tilde.
    SweepAngle(Opts),
    /// Visibility over the source parameter chi.
    SweepChi(Opts),
    /// Visibility over the end-to-end distance, with threshold crossings.
    SweepDistance(Opts),
    /// Visibility for several photon-number truncations n_max.
    CompareNmax(Opts),
    /// Closed form against the brute-force Fock simulator (small N only).
    OracleCheck(Opts),
    /// Sweep selected by the `sweep` key of the configuration.
    Run(Opts),
}

#[derive(Args)]
struct Opts {
    /// `key = value` configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<String>,
    #[arg(long)]
    out_svg: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    n_stations: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    chi: Option<String>,
    #[arg(long)]
    chi_squared: Option<String>,
    /// Fixed net detector efficiency (no transmission or constant loss).
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    eta0: Option<String>,
    #[arg(long)]
    darkcount: Option<String>,
    #[arg(long)]
    alpha_db_per_km: Option<String>,
    #[arg(long)]
    alpha0_db: Option<String>,
    #[arg(long)]
    distance_km: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long)]
    tuple_sum_min: Option<String>,
    #[arg(long)]
    tuple_sum_max: Option<String>,
    /// Fixed rotator angle; accepts forms like `pi/2`.
    #[arg(long, allow_hyphen_values = true)]
    alpha_tilde: Option<String>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    max_row_errors: Option<String>,
}

impl Opts {
    fn build(&self, sweep: Option<&str>) -> Result<RunConfig, CliError> {
        let mut builder = ConfigBuilder::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            builder.parse(&text)?;
        }
        if let Some(s) = sweep {
            builder.set("sweep", s)?;
        }
        let flags = [
            ("out_csv", &self.out_csv),
            ("out_svg", &self.out_svg),
            ("workers", &self.workers),
            ("n_stations", &self.n_stations),
            ("chi", &self.chi),
            ("chi_squared", &self.chi_squared),
            ("eta", &self.eta),
            ("eta0", &self.eta0),
            ("darkcount", &self.darkcount),
            ("alpha_db_per_km", &self.alpha_db_per_km),
            ("alpha0_db", &self.alpha0_db),
            ("distance_km", &self.distance_km),
            ("n_max", &self.n_max),
            ("tuple_sum_min", &self.tuple_sum_min),
            ("tuple_sum_max", &self.tuple_sum_max),
            ("alpha_tilde", &self.alpha_tilde),
            ("grid", &self.grid),
            ("max_row_errors", &self.max_row_errors),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                builder.set(key, v)?;
            }
        }
        Ok(builder.build()?)
    }
}

fn sweep(opts: &Opts, variable: Option<&str>) -> Result<(), CliError> {
    let config = opts.build(variable)?;
    let outcome = runner::run_sweep(&config)?;
    for line in runner::report(&config, &outcome) {
        println!("{line}");
    }
    Ok(())
}

fn single_point(opts: &Opts) -> Result<(), CliError> {
    let config = opts.build(None)?;
    let p = &config.params;
    let report = with_workers(config.workers, || {
        visibility_with(p, config.alpha_tilde, &representative_heralds(p), Method::Transfer)
    })??;
    println!("N = {}, alpha_tilde = delta_tilde = {}", p.n_stations(), config.alpha_tilde);
    println!("Q1010 = {:e}", report.q[0]);
    println!("Q0101 = {:e}", report.q[1]);
    println!("Q0110 = {:e}", report.q[2]);
    println!("Q1001 = {:e}", report.q[3]);
    println!("Vmax = {:e}", report.v_max);
    println!("Vmin = {:e}", report.v_min);
    println!("V = {:.6}", report.visibility);
    Ok(())
}

const ORACLE_TOLERANCE: f64 = 1e-9;

fn oracle_check(opts: &Opts) -> Result<(), CliError> {
    let config = opts.build(None)?;
    let p = &config.params;
    let angles = RotatorAngles::equal(config.alpha_tilde)?;
    let closed = Transfer::new(p).coincidences(
        &representative_heralds(p),
        &swaprelay::coincidence::OUTER_CLASSES,
        angles,
    )?;
    let oracle = oracle_coincidence(p, angles)?;
    let mut worst = 0.0f64;
    for ((label, c), o) in ["Q1010", "Q0101", "Q0110", "Q1001"].iter().zip(&closed).zip(&oracle) {
        worst = worst.max((c - o).abs());
        println!("{label}: closed form {c:e}, oracle {o:e}, difference {:e}", (c - o).abs());
    }
    if worst < ORACLE_TOLERANCE {
        println!("agreement within {ORACLE_TOLERANCE:e}");
        Ok(())
    } else {
        Err(CliError::Computation(format!(
            "closed form and oracle differ by {worst:e} (tolerance {ORACLE_TOLERANCE:e})"
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Visibility(o) => single_point(o),
        Command::SweepAngle(o) => sweep(o, Some(runner::sweep_name(SweepVariable::Angle))),
        Command::SweepChi(o) => sweep(o, Some(runner::sweep_name(SweepVariable::Chi))),
        Command::SweepDistance(o) => sweep(o, Some(runner::sweep_name(SweepVariable::Distance))),
        Command::CompareNmax(o) => sweep(o, Some(runner::sweep_name(SweepVariable::NMax))),
        Command::OracleCheck(o) => oracle_check(o),
        Command::Run(o) => sweep(o, None),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

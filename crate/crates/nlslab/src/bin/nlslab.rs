//! Command-line front end.  Exit codes: 0 success, 1 config/regime error,
//! 2 numerical failure.

use clap::{Args, Parser, Subcommand};
use nlslab::config::RunConfig;
use nlslab::groundstate::{self, SolveOpts};
use nlslab::params::{self, Sign};
use nlslab::runner;
use nlslab::{Error, ProblemSpec, RadialGrid};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nlslab", version, about = "Radial spectral laboratory for NLS with an inverse-square potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Spatial dimension (3..=6).
    #[arg(long)]
    d: u32,
    /// Inverse-square coupling.
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    /// Nonlinearity power.
    #[arg(long)]
    alpha: f64,
    /// Nonlinearity sign.
    #[arg(long, value_parser = parse_sign, default_value = "focusing")]
    mu: Sign,
}

fn parse_sign(s: &str) -> Result<Sign, String> {
    match s {
        "focusing" | "-1" => Ok(Sign::Focusing),
        "defocusing" | "+1" | "1" => Ok(Sign::Defocusing),
        other => Err(format!("expected focusing|defocusing, got {other:?}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate (d, a, alpha) against the admissible regimes.
    Regime(SpecArgs),
    /// Compute the ground state, sharp constant, and thresholds.
    Groundstate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 40.0)]
        rmax: f64,
        /// Output directory for ground_state.csv / ground_state.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a configured experiment end to end.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify the configured initial datum without evolving it.
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Verify a run directory's manifest and print its summary.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Sweep one parameter over a comma-separated list of values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to vary: c, a, or amplitude.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Params(_) | Error::Config(_) | Error::Io(_) => ExitCode::from(1),
        Error::Grid(_) | Error::GroundState(_) => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Regime(args) => {
            let spec = ProblemSpec::new(args.d, args.a, args.alpha, args.mu)?;
            let report = params::validate_regime(&spec)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(if report.main_theorem_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Groundstate { spec, n, rmax, out } => {
            let spec = ProblemSpec::new(spec.d, spec.a, spec.alpha, spec.mu)?;
            let report = params::validate_regime(&spec)?;
            if !report.main_theorem_ok {
                return Err(Error::Config(report.messages.join("; ")));
            }
            let grid = RadialGrid::new(spec.d, n, rmax)?;
            let gs = runner::obtain_ground_state(&spec, &grid, &SolveOpts::default())?;
            let th = groundstate::thresholds(&gs, &spec, 1e-3)?;
            std::fs::create_dir_all(&out)?;
            runner::write_field_csv(&out.join("ground_state.csv"), &gs.q)?;
            let record = json!({
                "c_a": gs.c_a,
                "mass": gs.mass,
                "kinetic_a": gs.kinetic_a,
                "lp": gs.lp,
                "attained": gs.attained,
                "e_thresh": th.e_thresh,
                "k_thresh": th.k_thresh,
                "sigma": th.sigma,
                "pohozaev_residuals": th.pohozaev_residuals,
                "elliptic_residual": gs.elliptic_residual,
                "iterations": gs.iterations,
            });
            let text = serde_json::to_string_pretty(&record).unwrap();
            std::fs::write(out.join("ground_state.json"), &text)?;
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Evolve { config } => {
            let cfg = RunConfig::load(&config)?;
            let manifest = runner::run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { config } => {
            let cfg = RunConfig::load(&config)?;
            let classification = runner::classify_config(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&classification).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run } => {
            let manifest = runner::verify_run_dir(&run)?;
            println!("{}", serde_json::to_string_pretty(&manifest).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let cfg = RunConfig::load(&config)?;
            let values: Vec<f64> = if values.trim().is_empty() {
                Vec::new()
            } else {
                values
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("bad sweep value {v:?}")))
                    })
                    .collect::<Result<_, _>>()?
            };
            let summary = runner::sweep(&cfg, &param, &values)?;
            println!("{}", serde_json::to_string_pretty(&summary.rows).unwrap());
            // Individual failures are recorded but make the sweep non-clean.
            Ok(if summary.rows.iter().all(|r| r.error.is_empty()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

//! `vel` — batch front end for the vacuum-column solver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime/solver error,
//! 4 assertion failure. Failures print a single machine-readable JSON
//! object to stdout.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vel_cli::commands::{self, CommandError, EXIT_CONFIG, EXIT_OK};
use vel_cli::config::{parse_config, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "vel",
    about = "Vacuum free-boundary gas column: simulation and verification runs",
    after_help = "Config format: `key = value` lines under [gas] [grid] [init] [run] [time] \
[experiment] sections, `#` comments. Required keys: gas.gamma, grid.n_cells. Defaults: \
g = 1, mass = 1, t_final = 40, sine_mode with amplitude 1e-3 and mode 1, cfl_safety = 0.45, \
dt = 0.9 * cfl_safety * stability limit, output cadence ~0.25 time units. \
VEL_NUM_THREADS caps sweep parallelism (0 = auto)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for randomized verification suites.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    /// Override a config key, e.g. --set time.t_final=10 (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured model; writes series.csv and summary.json.
    Simulate,
    /// Fit an exponential to an existing series.csv.
    DecayFit {
        /// Series file; defaults to <out>/series.csv.
        #[arg(long)]
        series: Option<PathBuf>,
        /// Fit window as LO:HI (defaults to [0.25 T, 0.9 T] of the series).
        #[arg(long)]
        window: Option<String>,
    },
    /// Run the flow-map identity suite on seeded random fields.
    VerifyIdentities {
        /// Comma-separated dimensions, e.g. 2,3.
        #[arg(long, default_value = "2,3")]
        dims: String,
        /// Seeded fields per dimension.
        #[arg(long, default_value_t = 20)]
        fields: usize,
    },
    /// Refinement study over doubled grids; reports observed orders.
    Convergence,
    /// Twin damped/inertialess runs from identical data.
    DarcyCompare,
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec, CommandError> {
    let path = cli.config.as_ref().ok_or(CommandError {
        exit_code: EXIT_CONFIG,
        kind: "config",
        message: "this command needs --config PATH".into(),
    })?;
    let text = std::fs::read_to_string(path).map_err(|e| CommandError {
        exit_code: EXIT_CONFIG,
        kind: "config",
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let base = path.parent().unwrap_or(std::path::Path::new("."));
    parse_config(&text, base, &cli.overrides, cli.out.clone()).map_err(|e| CommandError {
        exit_code: EXIT_CONFIG,
        kind: "config",
        message: e.message,
    })
}

fn parse_window(w: &Option<String>) -> Result<Option<(f64, f64)>, CommandError> {
    let Some(w) = w else { return Ok(None) };
    let parts: Vec<&str> = w.split(':').collect();
    let parsed = (|| -> Option<(f64, f64)> {
        if parts.len() != 2 {
            return None;
        }
        Some((parts[0].parse().ok()?, parts[1].parse().ok()?))
    })();
    parsed.map(Some).ok_or(CommandError {
        exit_code: EXIT_CONFIG,
        kind: "config",
        message: format!("--window wants LO:HI, got `{w}`"),
    })
}

fn parse_dims(dims: &str) -> Result<Vec<usize>, CommandError> {
    let mut out = Vec::new();
    for part in dims.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.parse::<usize>() {
            Ok(d @ (2 | 3)) => out.push(d),
            _ => {
                return Err(CommandError {
                    exit_code: EXIT_CONFIG,
                    kind: "config",
                    message: format!("--dims accepts 2 and 3, got `{part}`"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(CommandError {
            exit_code: EXIT_CONFIG,
            kind: "config",
            message: "--dims is empty".into(),
        });
    }
    Ok(out)
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value, CommandError> {
    match &cli.command {
        Command::Simulate => cmd_with_spec(cli, commands::cmd_simulate),
        Command::Convergence => cmd_with_spec(cli, commands::cmd_convergence),
        Command::DarcyCompare => cmd_with_spec(cli, commands::cmd_darcy_compare),
        Command::DecayFit { series, window } => {
            let series = series.clone().unwrap_or_else(|| cli.out.join("series.csv"));
            let window = parse_window(window)?;
            commands::cmd_decay_fit(&series, window, &cli.out)
        }
        Command::VerifyIdentities { dims, fields } => {
            let dims = parse_dims(dims)?;
            commands::cmd_verify_identities(&dims, cli.seed, *fields, &cli.out, cli.quiet)
        }
    }
}

fn cmd_with_spec(
    cli: &Cli,
    f: fn(&ExperimentSpec, bool) -> Result<serde_json::Value, CommandError>,
) -> Result<serde_json::Value, CommandError> {
    let spec = load_spec(cli)?;
    f(&spec, cli.quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(value) => {
            // decay-fit's natural product is the fit itself; print it
            if matches!(cli.command, Command::DecayFit { .. }) {
                println!("{value}");
            }
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            let payload = serde_json::json!({
                "error": e.kind,
                "message": e.message,
                "exit_code": e.exit_code,
            });
            println!("{payload}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eventalloc::scenario::{load_config_file, run, write_outputs, Scenario};
use eventalloc::trigger::zeno_bounds;
use eventalloc::{kkt_allocate, Error};
use serde::Serialize;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "eventalloc", version, about = "Event-triggered distributed resource allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory.csv, events.csv and summary.json.
    Simulate {
        config: PathBuf,
        out: PathBuf,
        /// Dotted-path override, e.g. `trigger.a=0.01`. Repeatable; last write wins.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the optimal allocation as JSON.
    Oracle {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the inter-event time lower bounds as JSON.
    Bounds {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Serialize)]
struct OracleReport {
    allocation: Vec<f64>,
    multiplier: f64,
    fitness: Vec<f64>,
    negative_agents: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_cost: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            overrides,
        } => simulate(&config, &out, &overrides),
        Command::Oracle { config, overrides } => oracle(&config, &overrides),
        Command::Bounds { config, overrides } => bounds(&config, &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn fail(err: &Error) -> u8 {
    eprintln!("error: {err}");
    if err.is_validation() || matches!(err, Error::Io { .. }) {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

fn load(config: &Path, overrides: &[String]) -> Result<Scenario, u8> {
    if !config.is_file() {
        eprintln!("error: config file not found: {}", config.display());
        return Err(EXIT_VALIDATION);
    }
    let scenario = load_config_file(config, overrides).map_err(|e| {
        eprintln!("error: {}: {e}", config.display());
        if e.is_validation() || matches!(e, Error::Io { .. }) {
            EXIT_VALIDATION
        } else {
            EXIT_NUMERICAL
        }
    })?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    Ok(scenario)
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report is always serialisable")
    );
}

fn simulate(config: &Path, out: &Path, overrides: &[String]) -> Result<(), u8> {
    let scenario = load(config, overrides)?;
    let n = scenario.n();
    let result = match run(&scenario) {
        Ok(result) => result,
        Err(failure) => {
            eprintln!("error: run aborted: {}", failure.error);
            match write_outputs(&failure.partial, n, out) {
                Ok(_) => eprintln!("partial outputs written to {}", out.display()),
                Err(e) => eprintln!("error: {e}"),
            }
            return Err(if failure.error.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERICAL
            });
        }
    };
    for w in result.warnings.iter().skip(scenario.warnings.len()) {
        eprintln!("warning: {w}");
    }
    write_outputs(&result, n, out).map_err(|e| fail(&e))?;
    let s = &result.summary;
    println!(
        "consensus_residual={:.3e} events={} conservation_error={:.3e}",
        s.consensus_residual,
        s.trigger_count.iter().sum::<usize>(),
        s.conservation_error
    );
    Ok(())
}

fn oracle(config: &Path, overrides: &[String]) -> Result<(), u8> {
    let scenario = load(config, overrides)?;
    let star = kkt_allocate(&scenario.potential);
    let fitness = scenario
        .potential
        .fitness(&star.allocation)
        .map_err(|e| fail(&e))?;
    let total_cost = scenario.costs.as_ref().map(|c| c.total_cost(&star.allocation));
    if !star.negative_agents.is_empty() {
        eprintln!(
            "warning: agents {:?} receive a negative share",
            star.negative_agents
        );
    }
    print_json(&OracleReport {
        allocation: star.allocation,
        multiplier: star.multiplier,
        fitness,
        negative_agents: star.negative_agents,
        total_cost,
    });
    Ok(())
}

fn bounds(config: &Path, overrides: &[String]) -> Result<(), u8> {
    let scenario = load(config, overrides)?;
    if scenario.distributed.is_none() && scenario.centralized.is_none() {
        eprintln!(
            "error: {}: bounds need trigger parameters (rho and a, or gamma)",
            config.display()
        );
        return Err(EXIT_VALIDATION);
    }
    let lambda2 = scenario.initial_lambda2().map_err(|e| fail(&e))?;
    let z = zeno_bounds(
        &scenario.graph,
        &scenario.potential,
        &lambda2,
        scenario.distributed.as_ref(),
        scenario.centralized.as_ref(),
        scenario.q.as_deref(),
    )
    .map_err(|e| fail(&e))?;
    print_json(&z);
    Ok(())
}

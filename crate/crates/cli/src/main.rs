//! `flowkit` command line.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Outcome, Output};
use config::{Flags, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "flowkit", version, about = "Szekeres fields, clean approximations and rotation numbers")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jets of the Szekeres field on a Lobatto grid.
    Field,
    /// Classify a commuting pair as IDENTITY, CYCLIC, FLOW or DEGENERATE.
    Classify,
    /// Clean approximation of a FLOW pair.
    CleanApprox,
    /// Symbolic recursions and numeric checks of the derivative estimates.
    Estimates {
        #[arg(long, default_value = "all", value_parser = ["symbolic", "numeric", "all"])]
        suite: String,
        /// Added to each exponent target (a positive offset gives a negative control).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        exponent_offset: f64,
    },
    /// Rotation number of a circle lift.
    Rotation {
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
    },
    /// Lattice basis adapted to a vector of rational rotation numbers.
    Basis {
        /// Comma-separated rationals, e.g. "1/2,1/3".
        #[arg(long)]
        rho: String,
    },
    /// Commutation residual along the path of pairs to the identity.
    Path,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use flowkit::Error as E;
    match e.downcast_ref::<flowkit::Error>() {
        Some(E::Syntax { .. } | E::Config(_) | E::Precondition(_) | E::Domain(_)) => 2,
        Some(E::NonConverged { .. } | E::StepUnderflow { .. } | E::DivisionNearZero(_) | E::NonFinite(_)) => 3,
        Some(_) => 1,
        None if e.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let out = Output::new(cfg.out.clone())?;
    match &cli.command {
        Command::Field => commands::field(&cfg, &out),
        Command::Classify => commands::classify(&cfg, &out),
        Command::CleanApprox => commands::clean_approx(&cfg, &out),
        Command::Estimates { suite, exponent_offset } => commands::estimates(&cfg, &out, suite, *exponent_offset),
        Command::Rotation { iterations } => commands::rotation(&cfg, &out, *iterations),
        Command::Basis { rho } => commands::basis(&out, rho),
        Command::Path => commands::path(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `flatcircle`: experiments on circle maps with a flat interval.
//!
//! Every subcommand accepts `--config run.json`; keys are the long flag
//! names (and `map`, `f`, `g` for the input files), and flags given on the
//! command line take precedence.  Exit status is 0 on success, 2 for
//! invalid input and 3 for numerical failures, with a JSON line on
//! standard error describing the failure.

mod commands;
mod config;
mod output;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;
use config::{merge, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "flatcircle",
    version,
    about = "Dynamical partitions, conjugacies and quasi-symmetry of circle maps with a flat interval"
)]
struct Cli {
    /// JSON file supplying any of the subcommand's flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print a completion note on standard error
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Tune(TuneArgs),
    Rotnum(RotnumArgs),
    Partition(PartitionArgs),
    Geometry(GeometryArgs),
    Conjugate(ConjugateArgs),
    ConjugacyDefect(DefectArgs),
    QsCheck(QsArgs),
    Transition(TransitionArgs),
    Crossratio(CrossRatioArgs),
    AppendixDemo(AppendixArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.as_deref();
    let name = format!("{:?}", cli.command).split('(').next().unwrap_or_default().to_lowercase();
    match cli.command {
        Command::Tune(a) => tune(merge(&a, cfg)?),
        Command::Rotnum(a) => rotnum(merge(&a, cfg)?),
        Command::Partition(a) => partition(merge(&a, cfg)?),
        Command::Geometry(a) => geometry(merge(&a, cfg)?),
        Command::Conjugate(a) => conjugate(merge(&a, cfg)?),
        Command::ConjugacyDefect(a) => conjugacy_defect_cmd(merge(&a, cfg)?),
        Command::QsCheck(a) => qs_check(merge(&a, cfg)?),
        Command::Transition(a) => transition(merge(&a, cfg)?),
        Command::Crossratio(a) => crossratio(merge(&a, cfg)?),
        Command::AppendixDemo(a) => appendix_demo(merge(&a, cfg)?),
    }?;
    if cli.verbose {
        eprintln!("{name}: done");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hedge_cli::config::RunConfig;
use hedge_cli::run::{self, CliError, Mode, Options, Problem};

/// Optimal partial hedging in finite complete discrete-time markets.
#[derive(Parser)]
#[command(name = "hedge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one hedging problem for a configured model, claim, and budget.
    Solve {
        /// Problem to solve: success probability with (a) or without (b)
        /// admissibility, its randomized-test variant (a-rand), or
        /// expected shortfall with (c) or without (d) admissibility.
        #[arg(long, value_enum)]
        problem: ProblemArg,
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Solver for problem a: certified greedy (default) or exact
        /// branch-and-bound.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Attach the brute-force objective (problem a, small models).
        #[arg(long)]
        oracle: bool,
        /// Group binomial states by terminal price level instead of
        /// expanding the 2^N paths (problem a, greedy, call/put).
        #[arg(long)]
        levels: bool,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format: the full JSON document or the per-state CSV table.
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    A,
    #[value(name = "a-rand")]
    ARand,
    B,
    C,
    D,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

const NODE_BUDGET_ENV: &str = "HEDGE_NODE_BUDGET";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let Command::Solve {
        problem,
        config,
        mode,
        oracle,
        levels,
        out,
        format,
    } = cli.command;

    let problem = match problem {
        ProblemArg::A => Problem::A,
        ProblemArg::ARand => Problem::ARand,
        ProblemArg::B => Problem::B,
        ProblemArg::C => Problem::C,
        ProblemArg::D => Problem::D,
    };
    let mode = mode.map(|m| match m {
        ModeArg::Exact => Mode::Exact,
        ModeArg::Greedy => Mode::Greedy,
    });
    if mode.is_some() && problem != Problem::A {
        return Err(CliError::Config(String::from(
            "--mode applies only to problem a",
        )));
    }

    let node_budget = match std::env::var(NODE_BUDGET_ENV) {
        Ok(text) => text.parse::<u64>().map_err(|_| {
            CliError::Config(format!(
                "{NODE_BUDGET_ENV} must be an unsigned integer, found {text:?}"
            ))
        })?,
        Err(_) => hedge_core::knapsack::DEFAULT_NODE_BUDGET,
    };

    let text = std::fs::read_to_string(&config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
    let config = RunConfig::from_json(&text).map_err(CliError::Config)?;

    let options = Options {
        problem,
        mode,
        oracle,
        levels,
        node_budget,
    };
    let outcome = run::execute(&config, &options)?;

    let rendered = match format {
        FormatArg::Json => outcome.report.to_json(),
        FormatArg::Csv => outcome.report.to_csv(),
    };
    match out {
        Some(path) => std::fs::write(&path, rendered)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{rendered}"),
    }
    Ok(outcome.exit_code as u8)
}

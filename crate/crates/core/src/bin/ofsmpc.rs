use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ofsmpc::cli::{self, CliError, Outcome, Overrides};
use ofsmpc::scenario::ControllerKind;

#[derive(Parser)]
#[command(name = "ofsmpc", version, about = "Output-feedback stochastic MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute bounds, confidence sets and tightened constraints.
    Synth(Common),
    /// Simulate one closed-loop run and write its trace.
    Simulate(Common),
    /// Run a Monte-Carlo campaign.
    Montecarlo(Common),
    /// Check bounds, coverage, tube structure and recursive feasibility.
    Verify(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Proposed,
    Baseline,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "proposed")]
    controller: Controller,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cmd: Command) -> Result<Outcome, CliError> {
    let (Command::Synth(c) | Command::Simulate(c) | Command::Montecarlo(c) | Command::Verify(c)) = &cmd;
    let overrides = Overrides { seed: c.seed, runs: c.runs, workers: c.workers };
    let scenario = cli::load_scenario(&c.config, &overrides)?;
    let kind = match c.controller {
        Controller::Proposed => ControllerKind::Proposed,
        Controller::Baseline => ControllerKind::Baseline,
    };
    let out = c.out.as_deref();
    match cmd {
        Command::Synth(_) => cli::cmd_synth(&scenario, out),
        Command::Simulate(_) => cli::cmd_simulate(&scenario, kind, scenario.mc.base_seed, out),
        Command::Montecarlo(_) => cli::cmd_montecarlo(&scenario, kind, out),
        Command::Verify(_) => cli::cmd_verify(&scenario),
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.command) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod args;
mod commands;
mod load;

use std::process::ExitCode;

use clap::Parser;
use qsynth_core::synth::Outcome;

use args::{Cli, Command};
use commands::Status;

fn exit_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Sol => 0,
        Outcome::Unk => 10,
        Outcome::NoSol => 11,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Abstract(a) => commands::cmd_abstract(a),
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Codegen(a) => commands::cmd_codegen(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Report(a) => commands::cmd_report(a),
        Command::Worker(a) => commands::cmd_worker(a),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Outcome(o)) => ExitCode::from(exit_code(o)),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<load::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

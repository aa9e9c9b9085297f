mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{ReplayMismatch, Usage};

const EXIT_USAGE: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_RESOURCE: u8 = 4;
const EXIT_INVARIANT: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    use mfmdp::Error as E;
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    if err.downcast_ref::<ReplayMismatch>().is_some() {
        return EXIT_INVARIANT;
    }
    match err.downcast_ref::<E>() {
        Some(E::Contract(_)) => EXIT_USAGE,
        Some(E::Resource(_)) | Some(E::Io(_)) => EXIT_RESOURCE,
        Some(E::Invariant(_)) | Some(E::Convergence(_)) => EXIT_INVARIANT,
        Some(_) => EXIT_MODEL,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_RESOURCE,
        None => EXIT_MODEL,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Solve(a) => commands::cmd_solve(a).map(drop),
        Command::Simulate(a) => commands::cmd_simulate(a).map(drop),
        Command::Converge(a) => commands::cmd_converge(a).map(drop),
        Command::Evaluate(a) => commands::cmd_evaluate(a).map(drop),
        Command::Examples(c) => commands::cmd_examples(c),
        Command::Replay(a) => commands::cmd_replay(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match mfmdp::exec::with_threads(threads, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

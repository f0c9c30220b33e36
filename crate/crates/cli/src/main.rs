mod args;
mod commands;
mod support;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    let result = match &cli.command {
        args::Command::Train(a) => commands::train(a),
        args::Command::Embed(a) => commands::embed(a),
        args::Command::Rank(a) => commands::rank(a),
        args::Command::Choice(a) => commands::choice(a),
        args::Command::ProbeProp(a) => commands::probe_prop(a),
        args::Command::ProbeGed(a) => commands::probe_ged(a),
        args::Command::GedExact(a) => commands::ged_exact(a),
        args::Command::Gen(a) => commands::gen(a),
        args::Command::Check(a) => commands::check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

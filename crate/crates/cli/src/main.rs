mod cli;
mod commands;
mod config;

use clap::Parser;

use cli::{Cli, Command};
use config::Resolver;

fn main() {
    let parsed = Cli::parse();
    if let Err(e) = run(parsed) {
        // User errors get one diagnostic line, never a backtrace.
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(parsed: Cli) -> anyhow::Result<()> {
    let mut resolver = Resolver::from_file(parsed.config.as_deref())?;
    match parsed.command {
        Command::Synth(args) => commands::run_synth(args, &mut resolver),
        Command::Clean(args) => commands::run_clean(args, &mut resolver),
        Command::Train(args) => commands::run_train(args, &mut resolver),
        Command::Predict(args) => commands::run_predict(args, &mut resolver),
        Command::Evaluate(args) => commands::run_evaluate(args, &mut resolver),
        Command::Ablate(args) => commands::run_ablate(args, &mut resolver),
        Command::Gradcheck(args) => commands::run_gradcheck(args, &mut resolver),
    }
}

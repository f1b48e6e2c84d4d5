mod args;
mod estimate;
mod fail;
mod ingest;
mod output;
mod prior;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use fail::{Failure, Outcome};

fn run(cli: &Cli) -> Outcome<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    let out = &cli.out_dir;
    match &cli.command {
        Command::Estimate(a) => estimate::estimate(a, out).map(drop),
        Command::Bh(a) => report::bh(a, out).map(drop),
        Command::Simulate(a) => report::simulate(a, out).map(drop),
        Command::Curves(a) => report::curves(a, out).map(drop),
        Command::FitGradients(a) => estimate::fit_gradients(a, out).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("chisq-eb: error: {f}");
            ExitCode::from(f.code)
        }
    }
}

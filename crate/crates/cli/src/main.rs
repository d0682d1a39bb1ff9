//! `ghostgrid` command-line tool.

mod args;
mod bench;
mod config;
mod data;
mod error;
mod eval;
mod fuse;
mod io;
mod manifest;
mod train;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GHOSTGRID_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("GHOSTGRID_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    let argv = config::expand_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // Help and version output.
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.render().to_string())),
    };
    init_threads()?;
    match &cli.command {
        Command::Gen(a) => data::gen(a),
        Command::Ingest(a) => data::ingest(a),
        Command::Map(a) => data::map(a),
        Command::Train(a) => train::train(a),
        Command::Infer(a) => fuse::infer(a),
        Command::Fuse(a) => fuse::fuse(a),
        Command::Eval(a) => eval::eval(a),
        Command::Render(a) => eval::render(a),
        Command::Bench(a) => bench::bench(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ghostgrid: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

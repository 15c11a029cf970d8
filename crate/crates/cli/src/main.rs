//! `gph` — train and query learned binary hash codes.
//!
//! Subcommand pipeline: `gen-data` makes a labeled synthetic dataset,
//! `train` fits a hash model, `encode` packs features into codes, `search`
//! answers Hamming-distance queries, `eval` scores an index against
//! ground-truth labels.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure. stdout carries only data (CSV or `key = value` lines);
//! everything human-facing goes to stderr.

mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use gph_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "gph",
    version,
    about = "Learned binary hashing: generate data, train, encode, search, evaluate",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic clustered dataset (features.csv + labels.csv)
    GenData(commands::GenDataArgs),
    /// Train a hash model from features and pairwise-similarity labels
    Train(commands::TrainArgs),
    /// Hash feature vectors into a packed code index
    Encode(commands::EncodeArgs),
    /// Query a code index by Hamming distance (top-k or within-radius)
    Search(commands::SearchArgs),
    /// Score a code index against ground-truth labels (mAP, PR curve)
    Eval(commands::EvalArgs),
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 1,
        Error::Format { .. } | Error::Io(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout and errors to stderr.
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Encode(args) => commands::encode(args),
        Command::Search(args) => commands::search(args),
        Command::Eval(args) => commands::eval(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

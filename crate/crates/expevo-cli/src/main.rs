//! Command-line driver: ingest, train, predict, rank-users, synth, report.
//!
//! Every command reads its inputs, writes its outputs atomically, and drops
//! a run manifest beside the primary output. All randomness flows from
//! `--seed`; reruns with identical inputs and seed reproduce identical
//! artifacts (manifests record timings and are exempt).

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

/// Exit codes by failure class.
mod exit_code {
    pub const INTERNAL: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const IO: i32 = 3;
    pub const VERSION: i32 = 4;
    pub const MALFORMED: i32 = 5;
}

fn code_for(err: &expevo::Error) -> i32 {
    use expevo::Error::*;
    match err {
        InvalidArgument(_) | Domain(_) | Singular(_) => exit_code::INVALID,
        Io { .. } => exit_code::IO,
        VersionMismatch { .. } | Incompatible(_) => exit_code::VERSION,
        Parse { .. } | EmptyVocabulary | Json(_) => exit_code::MALFORMED,
        NonFinite { .. } | Internal(_) => exit_code::INTERNAL,
    }
}

#[derive(Parser)]
#[command(
    name = "expevo",
    version,
    about = "Continuous experience-aware language modeling over review corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read JSON-lines reviews and write an indexed corpus checkpoint.
    Ingest(commands::IngestArgs),
    /// Train a model on a corpus checkpoint.
    Train(commands::TrainArgs),
    /// Hold out each user's most recent reviews and score rating prediction.
    Predict(commands::PredictArgs),
    /// Rank users by inferred experience against relevance labels.
    RankUsers(commands::RankUsersArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(commands::SynthArgs),
    /// Export the qualitative report bundle from a model checkpoint.
    Report(commands::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::RankUsers(args) => commands::rank_users(args),
        Command::Synth(args) => commands::synth(args),
        Command::Report(args) => commands::report(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(code_for(&err));
    }
}

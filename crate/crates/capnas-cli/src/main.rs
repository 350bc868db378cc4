//! `capnas`: score Transformer architecture candidates with the data-free
//! capacity proxy, evaluate ranking quality against benchmarks, tune the
//! attention/FFN balance alpha, run NSGA-II searches, and generate space
//! files and synthetic benchmarks.
//!
//! Exit codes: 0 success, 1 IO error, 2 validation/usage error,
//! 3 numerical degeneracy.

mod commands;

use clap::{Parser, Subcommand};

use commands::{eval, gen, score, search, tune};

#[derive(Parser)]
#[command(name = "capnas", version, about = "Data-free capacity proxy toolkit for Transformer architecture search")]
struct Cli {
    /// Worker threads for architecture scoring (default: CAPNAS_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score architectures: per-arch attention/FFN capacity, proxy, params, TFLOPs.
    Score(score::ScoreArgs),
    /// Correlate a proxy against benchmark ground truth (SPR / KT).
    Eval(eval::EvalArgs),
    /// Tune the balance parameter alpha (benchmark sampling or heuristic).
    TuneAlpha(tune::TuneAlphaArgs),
    /// NSGA-II search: maximize proxy, minimize TFLOPs, bounded params.
    Search(search::SearchArgs),
    /// Generate canonical space files or synthetic benchmarks.
    Gen(gen::GenArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(args) => score::run(args, cli.workers),
        Command::Eval(args) => eval::run(args, cli.workers),
        Command::TuneAlpha(args) => tune::run(args, cli.workers),
        Command::Search(args) => search::run(args, cli.workers),
        Command::Gen(args) => gen::run(args, cli.workers),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

#[allow(dead_code)]
fn assert_cli_parses() {
    use clap::CommandFactory;
    Cli::command().debug_assert();
}

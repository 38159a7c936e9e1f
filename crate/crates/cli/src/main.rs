//! `jere`: train, predict, evaluate, generate synthetic data, inspect corpora.

mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "jere", version, about = "Joint entity and relation extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on DIR/train.jsonl with model selection on DIR/valid.jsonl.
    Train {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Independent runs with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        ensemble: usize,
        /// Pretrained word vectors, one `word v1 ... vd` line each.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Extract tuples for every sentence of a JSON-lines file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold tuples.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Prediction files of independent runs to combine by voting.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        ensemble_threshold: usize,
    },
    /// Write a seeded synthetic corpus split into train/valid/test.
    GenSynth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus statistics.
    Inspect {
        #[arg(long)]
        data: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("JERE_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("JERE_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Train { model, data, config, seed, out, ensemble, vectors } => {
            commands::train(commands::TrainArgs { model, data, config, seed, out, ensemble, vectors })
        }
        Command::Predict { checkpoint, input, out } => commands::predict(&checkpoint, &input, &out),
        Command::Eval { pred, gold, runs, ensemble_threshold } => {
            commands::eval(&pred, &gold, &runs, ensemble_threshold)
        }
        Command::GenSynth { config, seed, out } => commands::gen_synth(config.as_deref(), seed, &out),
        Command::Inspect { data } => commands::inspect(&data),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

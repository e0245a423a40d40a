mod commands;
mod error;
mod experiment;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frozenfeat::partition::Family;
use frozenfeat::trainer::{DEFAULT_C, FEW_SHOT_GRID};

use crate::commands::{AuditArgs, BaselineArgs, CleanArgs, CoverageArgs, ResplitArgs};
use crate::error::{CliError, Result};

/// Frozen-feature classification heads for hate speech detection.
#[derive(Debug, Parser)]
#[command(name = "frozenfeat", version)]
struct Cli {
    /// Log at info level (twice for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean a tweet TSV and write corpus statistics.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory with contractions.tsv, abbreviations.tsv and emoji.tsv.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Statistics JSON; defaults to `<out>.stats.json`.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Drop tweets with more words than this before cleaning.
        #[arg(long)]
        max_words: Option<usize>,
    },
    /// Per-phrase hate ratio of each split, and optionally false positives.
    Audit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        phrases: Option<PathBuf>,
        #[arg(long)]
        precedence: Option<Family>,
        /// TSV of `id<TAB>prediction` for the test split.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Clean texts before matching phrases.
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Stratified train/validation/test resplit.
    Resplit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Train, validation and test weights, e.g. `0.7,0.1,0.2`.
        #[arg(long, value_parser = commands::parse_ratios)]
        ratios: Option<[f64; 3]>,
        #[arg(long)]
        phrases: Option<PathBuf>,
        #[arg(long)]
        precedence: Option<Family>,
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Train and evaluate one head from an experiment file.
    Run {
        #[arg(long)]
        experiment: PathBuf,
        /// Overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the file's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One few-shot run per percentage.
    Sweep {
        #[arg(long)]
        experiment: PathBuf,
        /// Comma-separated percentages; defaults to 0,1,5,10,25,50,100.
        #[arg(long)]
        pcts: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vocabulary coverage of a corpus by a word embedding table.
    Coverage {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Tf-idf with a linear SVM, trained on the train split.
    Baseline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Clean {
            input,
            out,
            rules,
            stats,
            max_words,
        } => commands::clean(CleanArgs {
            input: &input,
            out: &out,
            rules: rules.as_deref(),
            stats: stats.as_deref(),
            max_words,
        }),
        Command::Audit {
            input,
            splits,
            phrases,
            precedence,
            predictions,
            clean,
            rules,
            json,
        } => commands::audit(AuditArgs {
            input: &input,
            splits: &splits,
            phrases: phrases.as_deref(),
            precedence,
            predictions: predictions.as_deref(),
            clean,
            rules: rules.as_deref(),
            json: json.as_deref(),
        }),
        Command::Resplit {
            input,
            out,
            seed,
            ratios,
            phrases,
            precedence,
            clean,
            rules,
        } => commands::resplit(ResplitArgs {
            input: &input,
            out: &out,
            ratios,
            seed,
            phrases: phrases.as_deref(),
            precedence,
            clean,
            rules: rules.as_deref(),
        }),
        Command::Run { experiment, seed, out } => experiment::run(&experiment, seed, out.as_deref()).map(|_| ()),
        Command::Sweep {
            experiment,
            pcts,
            seed,
            out,
        } => {
            let pcts = match pcts {
                Some(text) => experiment::parse_pcts(&text).map_err(CliError::Usage)?,
                None => FEW_SHOT_GRID.to_vec(),
            };
            experiment::sweep(&experiment, &pcts, seed, out.as_deref()).map(|_| ())
        }
        Command::Coverage {
            input,
            emb,
            clean,
            rules,
            json,
        } => commands::coverage(CoverageArgs {
            input: &input,
            emb: &emb,
            clean,
            rules: rules.as_deref(),
            json: json.as_deref(),
        })
        .map(|_| ()),
        Command::Baseline {
            input,
            splits,
            c,
            clean,
            rules,
            json,
        } => commands::baseline(BaselineArgs {
            input: &input,
            splits: &splits,
            c,
            clean,
            rules: rules.as_deref(),
            json: json.as_deref(),
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                CliError::Usage(_) => "usage error",
                CliError::Schema { .. } => "invalid experiment",
                CliError::Data(_) => "error",
            };
            eprintln!("{kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

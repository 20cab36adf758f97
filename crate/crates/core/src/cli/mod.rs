//! Command-line front end. The binary is a thin wrapper around [`run`].

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Result;
use crate::sensitivity::VariedPos;

pub use config::{Loaded, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "megalign",
    version,
    about = "Encoding models from word-in-context features to MEG responses"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(short, long, default_value = "megalign.toml")]
    pub config: PathBuf,
    /// Override the configured worker thread count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write SVG plots for eval, sensitivity and augment.
    #[arg(long, global = true)]
    pub emit_plots: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average repetitions and window epochs into responses.
    Prep,
    /// Fit one encoder per feature matrix on all responses.
    Fit,
    /// Cross-validated 2v2 accuracy per layer, region and subset.
    Eval {
        /// Add a label-permutation chance distribution with N permutations.
        #[arg(long, value_name = "N")]
        permute: Option<usize>,
    },
    /// Micro-context test on sentence pairs differing in one earlier word.
    Sensitivity {
        #[arg(long = "type", value_enum)]
        varied: Option<VariedArg>,
    },
    /// Predict responses for generated sentences with a trained encoder.
    Synth,
    /// Compare word-vector decoders trained with and without synthetic data.
    Augment,
    /// Template corpus tools.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Write a simulated experiment: epochs, stimuli, lexicon and features.
    Simulate,
    /// Summarize existing reports as markdown.
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariedArg {
    Noun,
    Verb,
    Det,
    Adj,
}

impl From<VariedArg> for VariedPos {
    fn from(v: VariedArg) -> Self {
        match v {
            VariedArg::Noun => VariedPos::Noun,
            VariedArg::Verb => VariedPos::Verb,
            VariedArg::Det => VariedPos::Determiner,
            VariedArg::Adj => VariedPos::Adjective,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum CorpusAction {
    /// Filter triples and expand them into active and passive sentences.
    Gen,
    /// Find template matches in tagged sentences.
    Extract,
    /// Counts over template matches in tagged sentences.
    Stats,
}

/// Parse arguments and run. Returns the process exit code: 0 on success,
/// 1 for usage errors, 2 for invalid data or config, 3 for numeric failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut loaded = Loaded::from_file(&cli.config)?;
    if let Some(t) = cli.threads {
        loaded.config.threads = t;
    }
    with_threads(loaded.config.threads, || commands::dispatch(&loaded, cli))
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::error::Error::invalid(format!("cannot start thread pool: {e}")))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: usize, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f()
}

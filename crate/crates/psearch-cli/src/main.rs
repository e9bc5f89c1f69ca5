//! Operator CLI: build an index, run queries, simulate epochs, audit the
//! privacy accounting and time the homomorphic primitives.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<psearch::Error> for CliError {
    fn from(e: psearch::Error) -> Self {
        use psearch::Error::*;
        match e {
            InvalidModulus(..) | InvalidParams(_) | Usage(_) | Dimension { .. } | DropBound(..) | EmptyBasis => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "psearch", version, about = "Private nearest-neighbour search with DP traffic shaping")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (embeddings, queries, ground truth).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        entries: Option<usize>,
    },
    /// Cluster, encode and persist a database.
    Init {
        #[arg(long)]
        out: PathBuf,
        /// Embedding file; a synthetic corpus is generated when absent.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// One metadata record per line.
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// One encrypted query round trip against a built index.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Embedding file holding the query vector.
        #[arg(long)]
        vector: PathBuf,
        #[arg(long, default_value_t = 0)]
        row: usize,
        #[arg(long)]
        delta: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write each serialized request and response here.
        #[arg(long)]
        wire: Option<PathBuf>,
    },
    /// Simulate one epoch.
    Epoch {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Server view as slot,cluster,count rows.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Privacy accounting report.
    Audit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency of the homomorphic primitives.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        psearch::par::set_threads(t);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Validation(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}

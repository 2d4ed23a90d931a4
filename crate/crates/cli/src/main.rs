use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use strata_core::Error;

#[derive(Parser, Debug)]
#[command(name = "strata", version, about = "Tiered agent memory: store, retrieve, consolidate, train, evaluate")]
pub struct Cli {
    /// TOML config file. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory holding `memory/` (overrides `workspace` in the config).
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,

    /// Human-readable output instead of JSON lines.
    #[arg(long, global = true)]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RetrievalFlags {
    /// Entries kept after Stage 2.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sessions passed from Stage 1 (a number or `inf`).
    #[arg(long)]
    pub k1: Option<String>,
    /// Token budget of the packed context.
    #[arg(long)]
    pub budget: Option<u64>,
    /// raw, log1p, minmax, zscore or zscore_equal_fusion.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Append an episodic entry and optionally credit an outcome.
    Append {
        #[arg(long)]
        project: String,
        #[arg(long)]
        session: String,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        content: String,
        /// Credit this outcome to the session's earlier entries.
        #[arg(long)]
        outcome: Option<String>,
        /// Entry id (random when omitted).
        #[arg(long)]
        id: Option<String>,
        /// RFC 3339 timestamp (now when omitted).
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Rank memory entries for a query.
    Retrieve {
        #[arg(long)]
        project: String,
        #[arg(long)]
        query: String,
        /// Restrict to one agent's private entries.
        #[arg(long)]
        agent: Option<String>,
        /// bm25, dense or hybrid.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        retrieval: RetrievalFlags,
        /// Include the per-entry score breakdown.
        #[arg(long)]
        explain: bool,
    },
    /// Promote unconsolidated sessions into semantic facts.
    Consolidate {
        #[arg(long)]
        project: String,
        /// Keep running on the configured interval.
        #[arg(long)]
        watch: bool,
        /// Stop watching after this many passes.
        #[arg(long, requires = "watch")]
        max_passes: Option<u64>,
    },
    /// Apply an outcome to specific entries.
    Attribute {
        #[arg(long)]
        project: String,
        /// Entry ids, in retrieval order.
        #[arg(long = "entry", required = true)]
        entries: Vec<String>,
        /// The answer the entries supported.
        #[arg(long)]
        answer: String,
        #[arg(long)]
        outcome: String,
    },
    /// Train retrieval weights on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Training log path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// oracle, echo or http.
        #[arg(long)]
        reader: Option<String>,
        /// task_success or cw_proxy.
        #[arg(long, default_value = "task_success")]
        reward: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        questions: Option<usize>,
        /// bm25, dense or hybrid.
        #[arg(long)]
        retrieval_mode: Option<String>,
        #[command(flatten)]
        retrieval: RetrievalFlags,
    },
    /// Evaluate on a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// no_retrieval, retrieval or oracle.
        #[arg(long, default_value = "retrieval")]
        mode: String,
        /// bm25, dense or hybrid.
        #[arg(long)]
        retrieval_mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reader: Option<String>,
        /// Credit correct answers to the retrieved entries.
        #[arg(long)]
        attribute: bool,
        #[command(flatten)]
        retrieval: RetrievalFlags,
    },
    /// Run an ablation grid.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reader: Option<String>,
        #[command(flatten)]
        retrieval: RetrievalFlags,
    },
    /// Write the synthetic QA corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of independently seeded copies.
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_) => 2,
        Error::Storage { .. } | Error::NotFound(_) | Error::Data(_) => 3,
        Error::External(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("strata: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

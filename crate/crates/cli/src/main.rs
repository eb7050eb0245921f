//! `proofgraph`: command-line access to a proofgraph store.
//!
//! Machine output is canonical JSON (sorted keys, one document per line) on
//! stdout; diagnostics go to stderr. Exit codes: 0 success, 1 domain error
//! (conflict, validation failure, halted pipeline), 2 usage error, 3
//! corruption.

mod commands;
mod error;
mod state;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::Exit;

#[derive(Parser, Debug)]
#[command(name = "proofgraph", version, about = "Versioned, provenance-tracked financial models")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "PROOFGRAPH_STORE", default_value = "./.proofgraph")]
    pub store: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommitArgs {
    #[arg(long)]
    pub author: String,
    #[arg(long)]
    pub message: String,
    /// Seconds since the epoch (UTC). Required so commit ids are reproducible.
    #[arg(long, allow_negative_numbers = true)]
    pub timestamp: i64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create an empty store.
    Init,
    /// Edit or check models in the staged workspace.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Commit the staged workspace.
    Commit {
        #[command(flatten)]
        info: CommitArgs,
        /// Ref to advance.
        #[arg(long = "ref", default_value = "main")]
        ref_name: String,
        /// Explicit parents (at most two). Defaults to the ref's current commit.
        #[arg(long = "parent")]
        parents: Vec<String>,
    },
    /// Replace the staged workspace with a commit's.
    Checkout { rev: String },
    /// Commit history, newest first.
    Log {
        #[arg(default_value = "main")]
        rev: String,
    },
    /// Models forced into a clone of MODEL by shared nodes.
    Chain {
        model: String,
        /// Read the workspace of this commit instead of the staged one.
        #[arg(long)]
        rev: Option<String>,
    },
    /// Clone a model together with its whole clone chain.
    Clone {
        model: String,
        /// OLD=NEW for every model in the chain.
        #[arg(long = "rename", required = true)]
        renames: Vec<String>,
        #[command(flatten)]
        info: CommitArgs,
        #[arg(long, default_value = "main")]
        rev: String,
        /// Ref to point at the new commit.
        #[arg(long = "ref", default_value = "main")]
        ref_name: String,
    },
    /// Three-way merge of two commits against a base.
    Merge {
        base: String,
        ours: String,
        theirs: String,
        #[command(flatten)]
        info: CommitArgs,
        /// Ref to point at the merge commit.
        #[arg(long = "ref")]
        ref_name: Option<String>,
    },
    /// Record a contribution in the provenance log.
    Record {
        #[arg(long)]
        author: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        node: String,
        /// Evidence payload file; stored as a blob.
        #[arg(long)]
        payload: PathBuf,
        #[arg(long = "upstream")]
        upstream: Vec<String>,
        #[arg(long, default_value = "main")]
        rev: String,
    },
    /// Collaboration metrics over the provenance log.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Check or run proof pipelines.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Object store size.
    Stats {
        #[arg(long)]
        by_kind: bool,
    },
    /// Check every object, ref, the staged workspace and the log.
    Verify,
    /// Commit the shared-node example workspace and record a sample log.
    Fixtures,
}

#[derive(Subcommand, Debug)]
pub enum ModelCommand {
    /// Stage a model from a definition file.
    Add {
        file: PathBuf,
        /// Model id; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        /// Replace an existing model of the same id.
        #[arg(long)]
        replace: bool,
    },
    /// Report invariant violations in a definition file.
    Validate {
        file: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
    /// Tag a staged model with a subject.
    Tag { model: String, subject: String },
    /// Set (or with --unset, remove) a facet on a staged node.
    Facet {
        node: String,
        key: String,
        value: Option<String>,
        #[arg(long, conflicts_with = "value")]
        unset: bool,
    },
    /// Summarise the staged workspace.
    List,
}

#[derive(Subcommand, Debug)]
pub enum MetricsCommand {
    /// In-degree of contributions.
    Quality {
        #[arg(long)]
        contribution: Option<String>,
    },
    /// Per participant and subject.
    Relevancy {
        #[arg(long)]
        participant: Option<String>,
        #[arg(long)]
        subject: Option<String>,
    },
    /// Per participant.
    Influence {
        #[arg(long)]
        participant: Option<String>,
    },
    /// Participants by influence, or by relevancy for one subject.
    Rank {
        #[arg(long)]
        subject: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum PipelineCommand {
    Validate { file: PathBuf },
    Run {
        file: PathBuf,
        /// Input record (a flat JSON object).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        author: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage as u8 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(out) => {
            println!("{}", out.json);
            ExitCode::from(out.exit as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}

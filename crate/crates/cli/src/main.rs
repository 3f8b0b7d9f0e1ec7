//! `tripmem` command-line front end.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "tripmem",
    version,
    about = "Triple memory with read/write calls for language models"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Engine configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Memory snapshot to read and update. Defaults to the config's `snapshot_path`.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Threshold profile, replacing the one from the config file.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long, global = true)]
    pub tau_e: Option<f64>,
    #[arg(long, global = true)]
    pub tau_t: Option<f64>,
    #[arg(long, global = true)]
    pub tau_r: Option<f64>,
    #[arg(long, global = true)]
    pub q_thr: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    /// One JSON object per line.
    Records,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Default,
    Editing,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Insert `subject<TAB>relation<TAB>object[<TAB>provenance]` lines.
    Ingest {
        file: PathBuf,
        /// Report malformed lines and keep going.
        #[arg(long)]
        continue_on_error: bool,
    },
    /// Run `subject>>relation>>` or `>>relation>>object` queries (`;`-separated).
    Query {
        query: String,
        /// Do not consult the ambiguity list.
        #[arg(long)]
        no_ambiguity_filter: bool,
    },
    /// Write-scan a text file with one sentence per line into memory.
    Scan {
        file: PathBuf,
        /// `scripted:<path>`
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 512)]
        max_new_tokens: usize,
    },
    /// Decode with memory reads from a prompt.
    Read {
        #[arg(
            long,
            conflicts_with = "prompt_file",
            required_unless_present = "prompt_file"
        )]
        prompt: Option<String>,
        #[arg(long)]
        prompt_file: Option<PathBuf>,
        #[arg(long)]
        generator: String,
        /// Text forced right after the prompt, e.g. a read-call opening.
        #[arg(long, default_value = "")]
        force: String,
        /// Stop once the output ends with this text (repeatable).
        #[arg(long = "stop")]
        stop: Vec<String>,
        #[arg(long, default_value_t = 256)]
        max_new_tokens: usize,
    },
    /// Build write and read training examples from annotated documents (JSONL).
    Datagen {
        documents: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ExampleKind::All)]
        kind: ExampleKind,
        /// Keep queries whose relation is on the ambiguity list.
        #[arg(long)]
        keep_ambiguous: bool,
    },
    /// Apply edit cases to memory and score reliability, generalization and locality.
    EditEval {
        cases: PathBuf,
        /// Generator answering the QA prompts (`scripted:<path>`).
        #[arg(long)]
        generator: String,
        /// Generator extracting edit triples; defaults to `--generator`.
        #[arg(long)]
        write_generator: Option<String>,
        /// Evaluate without applying the edits.
        #[arg(long)]
        withhold_edits: bool,
        /// Persist the edited memory to the store.
        #[arg(long)]
        save: bool,
    },
    /// Print memory statistics.
    Stats,
    #[command(subcommand)]
    Snapshot(SnapshotCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleKind {
    Write,
    Read,
    All,
}

#[derive(Debug, Subcommand)]
pub enum SnapshotCommand {
    /// Copy the store to `path`.
    Save { path: PathBuf },
    /// Replace the store with the snapshot at `path`.
    Load { path: PathBuf },
    /// Check a snapshot file and print its statistics.
    Verify { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

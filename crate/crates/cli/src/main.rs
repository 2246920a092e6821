mod commands;
mod config;
mod http;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "safetune", version, about = "Instruction-data, fine-tuning plan and evaluation toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling and splitting (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format for printed results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// One record object per line with all seven fields.
    RecordLines,
    /// A JSON array of bare instruction/input/output objects.
    InstructionArray,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn guidebook entry blocks into human-labeled records.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Expand seed records with a chat model.
    Generate {
        #[arg(long)]
        seeds: PathBuf,
        #[command(flatten)]
        seeds_format: DatasetInput,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        max_requests: Option<usize>,
        /// Serve replies from a replay file instead of the network.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Count records by source, task type and provenance.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        format: DatasetInput,
    },
    /// Stratified train/test split.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        format: DatasetInput,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Fraction of records in the train half (overrides the config file).
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Score one candidate against one reference.
    Score {
        #[arg(long)]
        candidate: String,
        #[arg(long)]
        reference: String,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Score system outputs against an evaluation set.
    Eval {
        #[arg(long)]
        items: PathBuf,
        /// Record-lines files of system outputs.
        #[arg(long = "outputs")]
        outputs: Vec<PathBuf>,
        /// Query the chat endpoint for answers under this system name.
        #[arg(long)]
        collect: Option<String>,
        /// Replay file for --collect.
        #[arg(long, requires = "collect")]
        replay: Option<PathBuf>,
        /// Where collected answers are written.
        #[arg(long, requires = "collect")]
        save_outputs: Option<PathBuf>,
        /// Write the structured report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score missing answers as empty strings.
        #[arg(long)]
        strict_missing: bool,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Freeze plans, training configuration and freeze verification.
    Trainplan {
        #[command(subcommand)]
        action: TrainplanAction,
    },
    /// Re-render a saved structured report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum TrainplanAction {
    /// Compute the freeze plan and emit the training configuration.
    Plan {
        #[command(flatten)]
        manifest: ManifestSource,
        /// Where to write the training configuration JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Hyperparameter override as key=value (value parsed as JSON).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check that only trainable layers changed between two manifests.
    Verify {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
    },
    /// Write a synthetic decoder manifest.
    Manifest {
        #[arg(long, default_value_t = 32)]
        blocks: usize,
        #[arg(long)]
        final_norm: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ManifestSource {
    /// Tab-separated layer manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use a synthetic decoder with this many blocks.
    #[arg(long)]
    synthetic_blocks: Option<usize>,
}

#[derive(Debug, Args)]
struct DatasetInput {
    #[arg(long = "input-format", value_enum, default_value_t = InputFormat::RecordLines)]
    input_format: InputFormat,
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// Replay file of embedding responses.
    #[arg(long)]
    embedding_replay: Option<PathBuf>,
    /// Replay file of BLEURT responses.
    #[arg(long)]
    bleurt_replay: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

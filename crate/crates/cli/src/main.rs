//! `iotrisk` command-line tool.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "iotrisk", version, about = "Risk assessment for networked embedded devices")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Knowledge base directory [default: ./data]
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Device store file [default: <data-dir>/state/store.json]
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Service config file (TOML or JSON); flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add data to the knowledge base
    Ingest {
        #[command(subcommand)]
        what: IngestKind,
    },
    /// Identify a device from a web corpus and/or a timestamp trace
    Identify(IdentifyArgs),
    /// Assess a registered (or demo) device and print the assessment
    Assess {
        #[arg(long)]
        device: String,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print the guided or rich view of a device
    View {
        #[arg(long)]
        device: String,
        #[arg(long, value_enum, default_value_t = ViewArg::Guided)]
        version: ViewArg,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare every catalog model of a category
    Compare {
        #[arg(long)]
        category: String,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run the HTTP service
    Serve {
        /// Overrides the listen address from the config
        #[arg(long)]
        listen: Option<String>,
    },
    /// Register and assess the six demo devices
    Demo {
        /// Defaults to the date recorded in demo.json
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Debug, Subcommand)]
enum IngestKind {
    /// Vulnerability feed (JSON array)
    Feed { path: PathBuf },
    /// Firmware manifest file, or a directory of them
    Manifests {
        path: PathBuf,
        /// Treat PATH as a sidecar component list for this raw image
        #[arg(long)]
        blob: Option<PathBuf>,
    },
    /// Web fingerprint signatures (JSON array)
    Signatures { path: PathBuf },
    /// Clock-skew profiles (JSON array)
    Profiles { path: PathBuf },
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    #[arg(long, required_unless_present_any = ["trace", "live"])]
    corpus: Option<PathBuf>,
    /// JSON trace, or CSV with a `.meta.json` sidecar
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Fetch a few common pages from this base URL instead of reading a corpus
    #[arg(long, conflicts_with = "corpus")]
    live: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ViewArg {
    Guided,
    Rich,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<iotrisk_service::ServiceError> for CliError {
    fn from(e: iotrisk_service::ServiceError) -> Self {
        if e.is_data_error() || matches!(e, iotrisk_service::ServiceError::Config(_)) {
            CliError::Data(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<iotrisk_core::kb::KbError> for CliError {
    fn from(e: iotrisk_core::kb::KbError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iotrisk_core::identify::IdentifyError> for CliError {
    fn from(e: iotrisk_core::identify::IdentifyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iotrisk_core::enrich::EnrichError> for CliError {
    fn from(e: iotrisk_core::enrich::EnrichError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_filter = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_filter)))
        .with_writer(std::io::stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

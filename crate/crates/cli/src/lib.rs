//! The `attnblend` command line, callable in-process through [`run`].

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{caof::CaofArgs, metrics::MetricsArgs, sasf::SasfArgs, synth::SynthArgs};
pub use error::CliError;

/// Attention fusion for text-guided object blending and style injection.
#[derive(Debug, Parser)]
#[command(name = "attnblend", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Blend cross-attention outputs through an entropic transport plan
    Caof(CaofArgs),
    /// AdaIN with high-frequency detail injection, optional key/value swap
    Sasf(SasfArgs),
    /// BOM / BOSM from score tables, LV / GC / HFS from images
    Metrics(MetricsArgs),
    /// Write a deterministic synthetic fixture set
    GenSynthetic(SynthArgs),
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        let msg = e.to_string();
        let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
        CliError::validation("USAGE", first)
    })?;
    match cli.command {
        Command::Caof(a) => commands::caof::run(a),
        Command::Sasf(a) => commands::sasf::run(a),
        Command::Metrics(a) => commands::metrics::run(a),
        Command::GenSynthetic(a) => commands::synth::run(a),
    }
}

pub fn main_entry() -> ExitCode {
    // help and version go to stdout with a zero exit
    if let Err(e) = Cli::try_parse() {
        if !e.use_stderr() {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    }
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit)
        }
    }
}

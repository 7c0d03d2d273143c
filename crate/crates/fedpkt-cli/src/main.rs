//! `fedpkt`: converts captures, summarizes traces, and runs training,
//! federation, sweep, crowdsourcing, and distillation experiments from a
//! single TOML config.
//!
//! Exit codes: 0 success, 1 validation problems (bad config or flags,
//! incompatible artifacts), 2 data problems (malformed traces, unreadable
//! inputs, failed writes).

mod commands;
mod config;
mod convert;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use fedpkt_core::trace::Strictness;
use fedpkt_core::Error as CoreError;

use commands::{InputFormat, ReportFormat};

#[derive(Parser)]
#[command(name = "fedpkt", version, about = "Packet classification experiments: featurize, train, federate")]
struct Cli {
    /// Bound the worker thread pool (default: one thread per core).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Print progress detail to stderr (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file; paths inside are relative to it.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override a config key, e.g. -O fed.rounds_max=50 -O hyper.batch=inf.
    #[arg(short = 'O', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Validate the config and echo its resolved form without running.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum StrictnessArg {
    /// Fail on the first malformed record.
    Strict,
    /// Drop malformed records with a warning.
    SkipInvalid,
}

impl From<StrictnessArg> for Strictness {
    fn from(value: StrictnessArg) -> Strictness {
        match value {
            StrictnessArg::Strict => Strictness::Strict,
            StrictnessArg::SkipInvalid => Strictness::SkipInvalid,
        }
    }
}

#[derive(Args)]
struct ConvertArgs {
    /// Capture file to convert.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Layout of the input file.
    #[arg(long, value_enum, default_value = "antmonitor")]
    format: InputFormat,
    /// Canonical trace to write.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "strict")]
    strictness: StrictnessArg,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Canonical trace to summarize.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Emit the summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long, value_enum, default_value = "strict")]
    strictness: StrictnessArg,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json produced by train, federate, or transfer.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a foreign capture into the canonical trace format.
    Convert(ConvertArgs),
    /// Print corpus statistics for a canonical trace.
    Summarize(SummarizeArgs),
    /// Build the vocabulary and encoded examples for a config.
    Featurize(ConfigArgs),
    /// Materialize per-client train/test datasets.
    Split(ConfigArgs),
    /// Train local, centralized, or tree models and write a report.
    Train(ConfigArgs),
    /// Run federated averaging and write round logs plus a report.
    Federate(ConfigArgs),
    /// Measure rounds-to-target across a participation/batch/epoch grid.
    Sweep(ConfigArgs),
    /// Grow the federation client by client and chart union-test F1.
    Crowdsource(ConfigArgs),
    /// Distill a trained model into a decision tree and compare the two.
    Transfer(ConfigArgs),
    /// Re-render a report artifact as csv, markdown, or json.
    Report(ReportArgs),
}

/// Loads the config and stops early under --dry-run, echoing the resolved
/// form. Returns None when the run should end successfully without work.
fn resolve(args: &ConfigArgs) -> Result<Option<config::Resolved>> {
    let resolved = config::load(&args.config, &args.overrides)?;
    if args.dry_run {
        print!("{}", config::echo_toml(&resolved.file)?);
        if let Some(trace) = &resolved.trace {
            if !trace.exists() {
                eprintln!("warning: trace {} does not exist yet", trace.display());
            }
        }
        return Ok(None);
    }
    Ok(Some(resolved))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Convert(a) => {
            commands::convert(&a.input, a.format, &a.output, a.strictness.into())
        }
        Command::Summarize(a) => commands::summarize_cmd(&a.input, a.json, a.strictness.into()),
        Command::Featurize(a) => match resolve(a)? {
            Some(r) => commands::featurize(&r),
            None => Ok(()),
        },
        Command::Split(a) => match resolve(a)? {
            Some(r) => commands::split(&r),
            None => Ok(()),
        },
        Command::Train(a) => match resolve(a)? {
            Some(r) => commands::train(&r, cli.verbose),
            None => Ok(()),
        },
        Command::Federate(a) => match resolve(a)? {
            Some(r) => commands::federate(&r, cli.verbose),
            None => Ok(()),
        },
        Command::Sweep(a) => match resolve(a)? {
            Some(r) => commands::sweep(&r),
            None => Ok(()),
        },
        Command::Crowdsource(a) => match resolve(a)? {
            Some(r) => commands::crowdsource(&r),
            None => Ok(()),
        },
        Command::Transfer(a) => match resolve(a)? {
            Some(r) => commands::transfer(&r, cli.verbose),
            None => Ok(()),
        },
        Command::Report(a) => commands::report(&a.input, a.format, a.output.as_ref()),
    }
}

/// Maps a failure to the documented exit codes. Data problems carry a typed
/// trace/io/json cause in their chain; config problems are flattened into
/// plain messages when they are built, so they fall through to 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::MalformedRecord { .. }
                | CoreError::Io(_)
                | CoreError::Json(_)
                | CoreError::EmptyInput(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Some(workers) = cli.workers {
        let built = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("cannot size the worker pool");
        if let Err(e) = built {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

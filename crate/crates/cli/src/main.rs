mod args;
mod commands;
mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use args::{ConvertMetaArgs, CvArgs, GridArgs, PredictArgs, ProbeArgs, SweepArgs, SynthArgs, TrainArgs};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format_version ", "1", ")");

#[derive(Parser, Debug)]
#[command(
    name = "shiftrf",
    version = VERSION,
    about = "Random cosine features and SVMs for shift-invariant kernels",
    args_override_self = true
)]
struct Cli {
    /// Worker threads for folds, Gram matrices and feature maps (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// File of `key = value` lines supplying flags for the subcommand; flags on the command line win
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<std::path::PathBuf>,

    /// Leave wall-clock timings out of reports and stdout
    #[arg(long, global = true)]
    no_timing: bool,

    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure random-feature approximation error against the exact kernel
    KernelProbe(ProbeArgs),
    /// Train on every row of a feature file and save a model
    Train(TrainArgs),
    /// Predict labels for a feature file with a saved model
    Predict(PredictArgs),
    /// Cross-validate one or more kernels and print class-wise accuracy
    Cv(CvArgs),
    /// Cross-validate random-feature models over a list of M values
    Sweep(SweepArgs),
    /// Cross-validated grid search over gamma and C
    Grid(GridArgs),
    /// Write a synthetic Gaussian-blob dataset and its fold manifest
    Synth(SynthArgs),
    /// Convert a tab-separated `path<TAB>label` meta file into a feature skeleton
    ConvertMeta(ConvertMetaArgs),
}

fn single_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Finds `--config PATH` or `--config=PATH` without a full parse, since the
/// file may supply flags that are otherwise required.
fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(t) = it.next() {
        if t == "--" {
            break;
        }
        if t == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = t.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn parse(argv: Vec<String>) -> Result<Cli, clap::Error> {
    let argv = match config_path(&argv) {
        Some(path) => config_file::merge(&Cli::command(), &argv, &path)
            .map_err(|e| Cli::command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}")))?,
        None => argv,
    };
    Cli::try_parse_from(argv)
}

/// Clap's message without the usage and help hints, on one line.
fn clap_message(e: &clap::Error) -> String {
    let text = e.render().to_string();
    let body: Vec<&str> = text
        .lines()
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    body.join(" ").trim_start_matches("error: ").to_string()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let timing = !cli.no_timing;
    match cli.command {
        Command::KernelProbe(a) => commands::kernel_probe(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Cv(a) => commands::cv(&a, timing),
        Command::Sweep(a) => commands::sweep(&a, timing),
        Command::Grid(a) => commands::grid(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::ConvertMeta(a) => commands::convert_meta(&a),
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                return ExitCode::from(2);
            }
            eprintln!("error: {}", clap_message(&e));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", single_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

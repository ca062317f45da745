//! `cidn`: train, enhance, evaluate, simulate corruptions, serve.
//!
//! Exit status is 0 on success, 1 for user errors (bad flags, configs or
//! inputs) and 2 for internal failures such as unreadable checkpoints.
//! Diagnostics go to stderr; logging verbosity follows `CIDN_LOG`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cidn", version, about = "Guidance-driven low-light image enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train from a run configuration; prints the final checkpoint path.
    Train(TrainArgs),
    /// Enhance one image with the brightness of a guidance image.
    Enhance(EnhanceArgs),
    /// Score a checkpoint on the evaluation pairs of a configuration.
    Eval(EvalArgs),
    /// Write misaligned and noisy copies of a paired dataset.
    Simulate(SimulateArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    guidance: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Reflect-pad inputs whose sides are not multiples of 4, then crop back.
    #[arg(long)]
    pad: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stub {
    Oracle,
    Identity,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, required_unless_present = "stub")]
    checkpoint: Option<PathBuf>,
    /// Report file; defaults to eval.csv in the configured output directory.
    #[arg(long)]
    report: Option<PathBuf>,
    /// One guidance image for every pair instead of the paired ground truth.
    #[arg(long)]
    guidance: Option<PathBuf>,
    #[arg(long, hide = true, value_enum)]
    stub: Option<Stub>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Dataset root with `low/` and `normal/` subdirectories.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Largest misalignment of normal-light images, in pixels.
    #[arg(long, default_value_t = 0)]
    shift: usize,
    /// Gaussian noise on low-light images, std in 8-bit units.
    #[arg(long, conflicts_with = "poisson")]
    gaussian: Option<f64>,
    /// Poisson noise on low-light images with this photon scale.
    #[arg(long)]
    poisson: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory of guidance images; a procedural set is used when absent.
    #[arg(long)]
    gallery: Option<PathBuf>,
    /// Largest accepted upload, in pixels.
    #[arg(long, default_value_t = 4096 * 4096)]
    max_pixels: u64,
    #[arg(long, default_value_t = 2)]
    max_concurrent: usize,
    /// Origin allowed by CORS; any origin when absent.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn init_logging() {
    let level = match std::env::var("CIDN_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") | Err(_) => log::LevelFilter::Info,
        Ok(other) => {
            eprintln!("warning: CIDN_LOG={other:?} is not one of quiet, info, debug; using info");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp_secs()
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Enhance(a) => commands::enhance(a),
        Command::Eval(a) => commands::eval(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

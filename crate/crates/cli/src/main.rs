//! `laimpute` command-line tool.
//!
//! Every subcommand prints one `key=value` summary line on stdout; logs go
//! to stderr. Exit codes: 0 success, 1 error, 2 usage, 3 when a requested
//! method or check failed outright.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "laimpute",
    version,
    about = "Gap filling of sparse LAI series from dense SAR VH/VV series"
)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Flat key=value config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Config override, repeatable; wins over the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_pair)]
    set: Vec<String>,

    /// Seed for every random choice of the command; wins over `seed=` in config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Errors only.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
}

fn parse_pair(s: &str) -> Result<String, String> {
    match s.split_once('=') {
        Some((k, _)) if !k.trim().is_empty() => Ok(s.to_string()),
        _ => Err(format!("expected KEY=VALUE, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic gapped/truth corpus and optionally a speckle stack.
    Simulate {
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Multitemporal speckle filtering of a raster stack.
    Denoise {
        /// Input stack header (.hdr).
        #[arg(long)]
        input: PathBuf,
        /// Output directory for denoised.hdr and variance.hdr.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an LSTM or BiLSTM imputer.
    Train {
        /// Series CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "bilstm")]
        arch: laimpute::Arch,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch loss CSV.
        #[arg(long)]
        loss_trace: Option<PathBuf>,
    },
    /// Fill LAI gaps with a trained checkpoint.
    Impute {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill LAI gaps with a per-series regression on VH/VV.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "poly")]
        method: laimpute::baselines::Method,
        #[arg(long)]
        out: PathBuf,
        /// Optional key=value dump of the fitted models.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Benchmark imputation methods against a truth corpus.
    Evaluate {
        #[arg(long)]
        gapped: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated subset of bilstm,lstm,poly,exp.
        #[arg(long, default_value = "bilstm,lstm,poly,exp")]
        methods: String,
        /// Report file (key=value).
        #[arg(long)]
        report: PathBuf,
        /// Directory for per-series plot CSVs.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck,
}

fn init_logging(g: &Global) {
    let level = if g.quiet {
        log::LevelFilter::Error
    } else {
        match g.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.global);
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build_global()
        {
            log::warn!("cannot size thread pool: {e}");
        }
    }
    match commands::run(&cli.global, cli.command) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Failed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

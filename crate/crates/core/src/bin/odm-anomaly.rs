use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use odm_anomaly::bench::BenchParams;
use odm_anomaly::cli::{cmd_bench, cmd_detect, cmd_generate, cmd_ingest, EXIT_ERROR};
use odm_anomaly::RunConfig;

#[derive(Parser)]
#[command(name = "odm-anomaly", version, about = "Detect excess flows and drops in origin-destination matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the configuration keys; unset flags fall back to the
/// config file, then to defaults.
#[derive(Args, Default)]
struct ConfigFlags {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    th: Option<u64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    quantile: Option<f64>,
    /// daily | weekly
    #[arg(long)]
    stride: Option<String>,
    /// clamped | paper_literal
    #[arg(long)]
    bounds_mode: Option<String>,
    #[arg(long)]
    store_root: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// jsonl | csv
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    expected_windows_per_day: Option<u32>,
    #[arg(long)]
    emit_below_eligibility: Option<bool>,
}

impl ConfigFlags {
    fn resolve(&self) -> odm_anomaly::Result<RunConfig> {
        let mut o: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("th", self.th.map(|v| v.to_string()));
        push("p", self.p.map(|v| v.to_string()));
        push("quantile", self.quantile.map(|v| v.to_string()));
        push("stride", self.stride.clone());
        push("bounds_mode", self.bounds_mode.clone());
        push("store_root", self.store_root.as_ref().map(|p| p.display().to_string()));
        push("output", self.output.as_ref().map(|p| p.display().to_string()));
        push("format", self.format.clone());
        push("workers", self.workers.map(|v| v.to_string()));
        push("expected_windows_per_day", self.expected_windows_per_day.map(|v| v.to_string()));
        push("emit_below_eligibility", self.emit_below_eligibility.map(|v| v.to_string()));
        RunConfig::load(self.config.as_deref(), &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse CSV files and store their snapshots
    Ingest {
        #[arg(long)]
        source: String,
        #[command(flatten)]
        config: ConfigFlags,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run detection over every stored window of a date
    Detect {
        #[arg(long)]
        source: String,
        #[arg(long)]
        date: NaiveDate,
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Write synthetic days and labels from a JSON spec
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time detection on an in-memory workload
    Bench {
        #[arg(long, default_value_t = 1000)]
        areas: usize,
        #[arg(long, default_value_t = 50_000)]
        nnz: usize,
        #[arg(long, default_value_t = 25)]
        windows: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also run at twice the nonzeros and print the time ratio
        #[arg(long)]
        scaling: bool,
        #[command(flatten)]
        config: ConfigFlags,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr();
    let config = |flags: &ConfigFlags| match flags.resolve() {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("{e}");
            None
        }
    };
    let code = match cli.command {
        Command::Ingest { source, config: flags, files } => match config(&flags) {
            Some(cfg) => cmd_ingest(&files, &source, &cfg, &mut out, &mut err),
            None => EXIT_ERROR,
        },
        Command::Detect { source, date, config: flags } => match config(&flags) {
            Some(cfg) => cmd_detect(&source, date, &cfg, &mut out, &mut err),
            None => EXIT_ERROR,
        },
        Command::Generate { spec, out: dir } => cmd_generate(&spec, &dir, &mut err),
        Command::Bench { areas, nnz, windows, seed, scaling, config: flags } => match config(&flags) {
            Some(cfg) => {
                let params = BenchParams {
                    n_areas: areas,
                    nnz_per_window: nnz,
                    windows,
                    p: cfg.detector.p,
                    seed,
                    ..BenchParams::default()
                };
                cmd_bench(&params, scaling, &cfg, &mut out, &mut err)
            }
            None => EXIT_ERROR,
        },
    };
    ExitCode::from(code as u8)
}

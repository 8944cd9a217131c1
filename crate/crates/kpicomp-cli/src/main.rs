//! `kpicomp`: lossy compression and task-level evaluation of cellular KPI
//! time series. Exit codes: 0 success, 2 usage error, 1 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kpicomp_cli::commands::{self, CommandConfig};
use kpicomp_core::kpi_model::KpiKind;

#[derive(Parser)]
#[command(
    name = "kpicomp",
    version,
    about = "Lossy compression and rate-distortion analysis for cellular KPI time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic KPI dataset as a long-format CSV
    Synth(SynthArgs),
    /// Rate-distortion sweep: SNR vs entropy rate per codec and step size
    Rd(RdArgs),
    /// Aggregate-traffic fidelity over random cell subsets
    Aggregate(AggregateArgs),
    /// Median-Weekly-Signature forecasting from compressed history
    Forecast(ForecastArgs),
    /// Encode to the binary artifact format, decode back and verify
    Roundtrip(RoundtripArgs),
    /// Re-execute a previous run from its manifest
    Rerun(RerunArgs),
}

fn parse_kpi(s: &str) -> Result<KpiKind, String> {
    KpiKind::parse(s).ok_or_else(|| format!("unknown KPI {s:?}; expected volume, prb or users"))
}

fn parse_codec(s: &str) -> Result<String, String> {
    if commands::CODEC_NAMES.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!(
            "unknown codec {s:?}; expected one of {}",
            commands::CODEC_NAMES.join(", ")
        ))
    }
}

#[derive(Args)]
struct SynthArgs {
    /// KPI to generate: volume, prb or users
    #[arg(long, value_parser = parse_kpi, default_value = "volume")]
    kpi: KpiKind,
    /// Number of cells
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    cells: u64,
    /// Number of whole weeks (168 hourly samples each)
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    weeks: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative amplitude of the diurnal pattern
    #[arg(long, default_value_t = 0.6)]
    daily_amplitude: f64,
    /// Relative amplitude of the weekly modulation
    #[arg(long, default_value_t = 0.2)]
    weekly_amplitude: f64,
    /// Relative white-noise standard deviation
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    /// Log-normal sigma of the per-cell scale spread
    #[arg(long, default_value_t = 0.5)]
    scale_sigma: f64,
    /// Weight of the shared city-wide pattern, in [0, 1]
    #[arg(long, default_value_t = 0.7)]
    correlation: f64,
    /// Output CSV path
    #[arg(short = 'o', long = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct RdArgs {
    /// Input dataset CSV
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_kpi, default_value = "volume")]
    kpi: KpiKind,
    /// Comma-separated codec list
    #[arg(long, value_delimiter = ',', default_value = "pcm,dpcm,dct,klt", value_parser = parse_codec)]
    codecs: Vec<String>,
    /// Strictly decreasing quantization steps; defaults to a ladder from
    /// the pooled standard deviation
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Fraction of cells used to train the KLT
    #[arg(long, default_value_t = 0.1)]
    klt_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also render an SVG chart
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_kpi, default_value = "volume")]
    kpi: KpiKind,
    /// Codec applied to each cell before aggregation
    #[arg(long, default_value = "klt", value_parser = parse_codec)]
    codec: String,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Comma-separated subset sizes N
    #[arg(long = "n", value_delimiter = ',', default_value = "10,100,1000", value_parser = clap::value_parser!(u64).range(1..))]
    n_values: Vec<u64>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    klt_fraction: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_kpi, default_value = "volume")]
    kpi: KpiKind,
    /// History codec; klt per the evaluation design, others for exploration
    #[arg(long, default_value = "klt", value_parser = parse_codec)]
    codec: String,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    klt_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clip reconstructed history at zero before forecasting
    #[arg(long)]
    clip: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_kpi, default_value = "volume")]
    kpi: KpiKind,
    #[arg(long, value_parser = parse_codec)]
    codec: String,
    /// Quantization step size
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    klt_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output artifact path
    #[arg(short = 'o', long = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest of the run to reproduce
    manifest: PathBuf,
    /// Redirect outputs to this directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("kpicomp: usage error: {msg}");
    ExitCode::from(2)
}

fn validate_deltas(deltas: &Option<Vec<f64>>) -> Result<(), String> {
    if let Some(d) = deltas {
        if d.is_empty() {
            return Err("--deltas needs at least one value".into());
        }
        if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err("--deltas values must be positive and finite".into());
        }
        if d.windows(2).any(|w| w[1] >= w[0]) {
            return Err("--deltas must be strictly decreasing".into());
        }
    }
    Ok(())
}

fn validate_fraction(fraction: f64) -> Result<(), String> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(format!("--klt-fraction must lie in (0, 1], got {fraction}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Ok(threads) = std::env::var("KPICOMP_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => return usage_error(&format!("KPICOMP_THREADS must be a positive integer, got {threads:?}")),
        }
    }

    let config = match cli.command {
        Command::Synth(args) => CommandConfig::Synth(commands::SynthCmd {
            kpi: args.kpi,
            cells: args.cells as usize,
            weeks: args.weeks as usize,
            seed: args.seed,
            daily_amplitude: args.daily_amplitude,
            weekly_amplitude: args.weekly_amplitude,
            noise_std: args.noise_std,
            scale_sigma: args.scale_sigma,
            correlation: args.correlation,
            output: args.output,
        }),
        Command::Rd(args) => {
            if let Err(msg) = validate_deltas(&args.deltas).and(validate_fraction(args.klt_fraction)) {
                return usage_error(&msg);
            }
            CommandConfig::Rd(commands::RdCmd {
                input: args.input,
                kpi: args.kpi,
                codecs: args.codecs,
                deltas: args.deltas,
                klt_fraction: args.klt_fraction,
                seed: args.seed,
                out_dir: args.out_dir,
                svg: args.svg,
            })
        }
        Command::Aggregate(args) => {
            if let Err(msg) = validate_deltas(&args.deltas).and(validate_fraction(args.klt_fraction)) {
                return usage_error(&msg);
            }
            CommandConfig::Aggregate(commands::AggregateCmd {
                input: args.input,
                kpi: args.kpi,
                codec: args.codec,
                deltas: args.deltas,
                n_values: args.n_values.iter().map(|&n| n as usize).collect(),
                replicates: args.replicates as usize,
                seed: args.seed,
                klt_fraction: args.klt_fraction,
                out_dir: args.out_dir,
                svg: args.svg,
            })
        }
        Command::Forecast(args) => {
            if let Err(msg) = validate_deltas(&args.deltas).and(validate_fraction(args.klt_fraction)) {
                return usage_error(&msg);
            }
            CommandConfig::Forecast(commands::ForecastCmd {
                input: args.input,
                kpi: args.kpi,
                codec: args.codec,
                deltas: args.deltas,
                klt_fraction: args.klt_fraction,
                seed: args.seed,
                clip: args.clip,
                out_dir: args.out_dir,
                svg: args.svg,
            })
        }
        Command::Roundtrip(args) => {
            if !(args.delta.is_finite() && args.delta > 0.0) {
                return usage_error(&format!("--delta must be positive and finite, got {}", args.delta));
            }
            if let Err(msg) = validate_fraction(args.klt_fraction) {
                return usage_error(&msg);
            }
            CommandConfig::Roundtrip(commands::RoundtripCmd {
                input: args.input,
                kpi: args.kpi,
                codec: args.codec,
                delta: args.delta,
                klt_fraction: args.klt_fraction,
                seed: args.seed,
                output: args.output,
            })
        }
        Command::Rerun(args) => {
            return match commands::rerun(&args.manifest, args.out_dir.as_deref()) {
                Ok((manifest, matches)) => {
                    for output in &manifest.outputs {
                        println!("wrote {}", output.file);
                    }
                    println!("outputs match manifest: {matches}");
                    if matches {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("kpicomp: error: re-run outputs differ from the manifest");
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("kpicomp: error: {e:#}");
                    ExitCode::from(1)
                }
            };
        }
    };

    match commands::run(config) {
        Ok(manifest) => {
            for output in &manifest.outputs {
                println!("wrote {}", output.file);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("kpicomp: error: {e:#}");
            ExitCode::from(1)
        }
    }
}

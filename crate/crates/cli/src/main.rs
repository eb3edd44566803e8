//! `bola360-lab`: run experiments, compute offline bounds and generate inputs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bola360::experiment::{ExperimentConfig, OutputFormat};
use bola360::head::{profile_probs, table3_profiles};
use bola360::report::{fmt_sig, write_buffer_csv, write_cdf_csv, write_json, write_rows_csv, write_summary_csv};
use bola360::trace::{synth_trace, TraceShape};
use bola360::{dp_off, run_experiment, Error};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bola360-lab", version, about = "Tiled 360-degree video bitrate adaptation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Constant,
    Square,
    Ramp,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm over all trials.
    Run {
        config: PathBuf,
        /// Output file; CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Offline upper bound for the configured instance (first trace).
    Oracle {
        config: PathBuf,
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Write a synthetic bandwidth trace as CSV.
    GenTrace {
        #[arg(long, value_enum)]
        kind: Shape,
        #[arg(long, default_value_t = 10.0)]
        mbps: f64,
        #[arg(long, default_value_t = 2.0)]
        low: f64,
        #[arg(long, default_value_t = 10.0)]
        high: f64,
        #[arg(long, default_value_t = 20.0)]
        period: f64,
        #[arg(long, default_value_t = 1.0)]
        start: f64,
        #[arg(long, default_value_t = 0.1)]
        slope: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the twelve reference probability profiles as CSV.
    GenProfiles {
        #[arg(long, default_value_t = 8)]
        tiles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file, including referenced files.
    Validate { config: PathBuf },
}

fn open_out(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn run(config: &Path, out: Option<PathBuf>, format: Option<Format>) -> bola360::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let format = match (format, cfg.run.format) {
        (Some(Format::Json), _) | (None, Some(OutputFormat::Json)) => Format::Json,
        _ => Format::Csv,
    };
    let out = out.or_else(|| cfg.run.output.as_ref().map(|p| cfg.base_dir.join(p)));
    let results = run_experiment(&cfg)?;
    log::info!("{} rows", results.rows.len());
    match format {
        Format::Json => {
            let mut w = open_out(out.as_deref())?;
            write_json(&results, &mut w)?;
            w.flush()?;
        }
        Format::Csv => {
            let mut w = open_out(out.as_deref())?;
            write_rows_csv(&results.rows, &mut w)?;
            w.flush()?;
            if let Some(path) = &out {
                write_summary_csv(&results.summary, File::create(sibling(path, "summary"))?)?;
                write_cdf_csv(&results.cdf, File::create(sibling(path, "cdf"))?)?;
                if !results.buffer_series.is_empty() {
                    write_buffer_csv(&results.buffer_series, File::create(sibling(path, "buffer"))?)?;
                }
            }
        }
    }
    Ok(())
}

fn oracle(config: &Path, t0: Option<f64>) -> bola360::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    let video = cfg.video.build()?;
    let trace = cfg.trace[0].load(&cfg.base_dir, 4.0 * video.duration())?;
    let head = cfg.head.build(&video, &cfg.base_dir, cfg.run.base_seed)?;
    let mut oc = cfg.oracle_config();
    if let Some(t0) = t0 {
        oc.t0 = t0;
    }
    let r = dp_off(&video, &trace, &head, &oc)?;
    println!("bound,t0,states_visited,peak_states");
    println!("{},{},{},{}", fmt_sig(r.bound), oc.t0, r.states_visited, r.peak_states);
    Ok(())
}

fn gen_profiles(tiles: usize, out: Option<PathBuf>) -> bola360::Result<()> {
    let mut w = csv::Writer::from_writer(open_out(out.as_deref())?);
    let mut header = vec!["profile".to_string(), "positive_tiles".into(), "alpha".into()];
    header.extend((1..=tiles).map(|d| format!("p{d}")));
    w.write_record(&header)?;
    for (i, spec) in table3_profiles().iter().enumerate() {
        let probs = profile_probs(spec, tiles)?;
        let mut rec = vec![(i + 1).to_string(), spec.positive_tiles.to_string(), spec.alpha.to_string()];
        rec.extend(probs.iter().map(|&p| fmt_sig(p)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> bola360::Result<()> {
    match cli.command {
        Command::Run { config, out, format } => run(&config, out, format),
        Command::Oracle { config, t0 } => oracle(&config, t0),
        Command::GenTrace { kind, mbps, low, high, period, start, slope, step, duration, out } => {
            let shape = match kind {
                Shape::Constant => TraceShape::Constant { mbps },
                Shape::Square => TraceShape::Square { low, high, period },
                Shape::Ramp => TraceShape::Ramp { start, slope, step },
            };
            let trace = synth_trace(&shape, duration).map_err(|e| Error::Config(e.to_string()))?;
            let mut w = open_out(out.as_deref())?;
            trace.to_csv_writer(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::GenProfiles { tiles, out } => gen_profiles(tiles, out),
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?.validate()?;
            println!("ok");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

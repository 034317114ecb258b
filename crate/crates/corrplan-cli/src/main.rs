//! `corrplan`: synthesize, apply, stream, classify, bench.
//!
//! Exit codes: 0 success, 1 input problem (bad flags, unreadable or
//! malformed files, mismatched shapes), 2 broken internal invariant.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use corrplan::bench::{bench_sweep_jobs, rows_to_csv, BenchConfig};
use corrplan::classify::run_detection;
use corrplan::error::{Error, ErrorKind};
use corrplan::exact::{exact_from_f64, exact_to_f64};
use corrplan::exec::evaluate_plan;
use corrplan::io;
use corrplan::plan::CostPolicy;
use corrplan::quantize::{normalize_rows, QuantizedMatrix};
use corrplan::stream::stream_init;
use corrplan::synth::synthesize_plan;

#[derive(Parser)]
#[command(
    name = "corrplan",
    version,
    about = "Shift-add correlation plans: synthesis, evaluation, streaming, classification, benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignalFormat {
    /// Text: samples separated by newlines or commas, `#` comments.
    Csv,
    /// Raw little-endian f64 samples.
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a matrix CSV and synthesize a multiplication plan.
    Synth {
        /// Template matrix CSV, one row per template.
        #[arg(long)]
        matrix: PathBuf,
        /// Output path for the plan JSON.
        #[arg(long)]
        out: PathBuf,
        /// Arithmetic base; 2 or 10.
        #[arg(long, default_value_t = 10)]
        base: u32,
        /// Fractional digits kept after quantization.
        #[arg(long)]
        digits: u32,
        /// Normalize rows to unit Euclidean norm before quantization.
        #[arg(long)]
        normalize: bool,
        /// Report shifts folded into the multiply count.
        #[arg(long)]
        count_shifts_as_mults: bool,
    },
    /// Evaluate a plan on one window-length vector.
    Apply {
        #[arg(long)]
        plan: PathBuf,
        /// Input vector (CSV), exactly m samples.
        #[arg(long)]
        signal: PathBuf,
        /// Output CSV: one record of K correlations.
        #[arg(long)]
        out: PathBuf,
    },
    /// Slide a plan over a signal; emit per-window correlations and stats.
    ///
    /// Each record is `step,c_1,...,c_K` where step is the absolute index
    /// (0-based) of the window's newest sample; the correlation fields for
    /// a signal of exactly m samples match `apply` output exactly.
    Stream {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long, value_enum, default_value_t = SignalFormat::Csv)]
        format: SignalFormat,
        /// Per-window correlation CSV; omit to print to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the operation-count summary instead of window records.
        #[arg(long)]
        summary: bool,
    },
    /// Detect template occurrences in a signal.
    Classify {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long, value_enum, default_value_t = SignalFormat::Csv)]
        format: SignalFormat,
        /// Acceptance threshold on the normalized correlation, in [-1, 1].
        #[arg(long)]
        threshold: f64,
        /// Suppression span after an event, in steps; defaults to the
        /// window length.
        #[arg(long)]
        refractory: Option<u64>,
        /// Event CSV; omit to print to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep matrix sizes, measuring plan and streaming costs per trial.
    Bench {
        /// Sizes as KxM pairs, e.g. `--sizes 4x16,16x16,64x16`.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<String>,
        /// Fractional digit counts to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u32])]
        digits: Vec<u32>,
        #[arg(long, default_value_t = 3)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Arithmetic base; 2 or 10.
        #[arg(long, default_value_t = 10)]
        base: u32,
        /// Worker threads for trials.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output CSV; omit to print to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        count_shifts_as_mults: bool,
    },
}

fn input_error(message: String) -> Error {
    Error::Parse {
        path: PathBuf::from("arguments"),
        line: 0,
        message,
    }
}

fn check_base(base: u32) -> Result<(), Error> {
    if base == 2 || base == 10 {
        Ok(())
    } else {
        Err(input_error(format!("--base must be 2 or 10, got {base}")))
    }
}

fn read_signal(path: &Path, format: SignalFormat) -> Result<Vec<f64>, Error> {
    match format {
        SignalFormat::Csv => io::read_vector_csv(path),
        SignalFormat::F64 => io::read_signal_f64le(path),
    }
}

fn emit(out: Option<&PathBuf>, contents: &str) -> Result<(), Error> {
    match out {
        Some(path) => io::write_text_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            matrix,
            out,
            base,
            digits,
            normalize,
            count_shifts_as_mults,
        } => {
            check_base(base)?;
            let mut rows = io::read_matrix_csv(&matrix)?;
            if normalize {
                rows = normalize_rows(&rows)?;
            }
            let quantized = QuantizedMatrix::from_rows_f64(&rows, base, digits)?;
            let policy = CostPolicy {
                count_shifts_as_multiplies: count_shifts_as_mults,
                ..CostPolicy::default()
            };
            let plan = synthesize_plan(&quantized, &policy);
            io::write_plan_json(&out, &plan)?;
            let cost = plan.plan_cost(&policy);
            println!(
                "multiplies={} adds={} shifts={}",
                cost.multiplies, cost.adds, cost.shifts
            );
            Ok(())
        }
        Command::Apply { plan, signal, out } => {
            let plan = io::read_plan_json(&plan)?;
            let samples = io::read_vector_csv(&signal)?;
            let exact: Vec<_> = samples
                .iter()
                .map(|&x| exact_from_f64(x))
                .collect::<Result<_, _>>()?;
            let result = evaluate_plan(&plan, &exact)?;
            let values: Vec<f64> = result.values().iter().map(exact_to_f64).collect();
            io::write_vector_csv(&out, &values)?;
            Ok(())
        }
        Command::Stream {
            plan,
            signal,
            format,
            out,
            summary,
        } => {
            let plan = io::read_plan_json(&plan)?;
            let samples = read_signal(&signal, format)?;
            let mut state = stream_init(&plan);
            let mut windows = String::new();
            for &sample in &samples {
                if let Some(step) = state.push_f64(sample)? {
                    let values: Vec<f64> = step.raw.iter().map(exact_to_f64).collect();
                    windows.push_str(&format!("{},", step.window_end));
                    windows.push_str(&io::vector_to_csv(&values));
                }
            }
            if summary {
                let s = state.cost_summary()?;
                println!("windows={}", s.windows);
                println!("per_step_multiplies={}", s.per_step_multiplies);
                println!("per_step_adds={}", s.per_step_adds);
                println!("per_step_shifts={}", s.per_step_shifts);
                println!("cache_hit_rate={}", s.cache_hit_rate);
                println!("post_warmup_windows={}", s.post_warmup_windows);
                if s.post_warmup_windows > 0 {
                    println!(
                        "post_warmup_per_step_multiplies={}",
                        s.post_warmup.multiplies as f64 / s.post_warmup_windows as f64
                    );
                }
                println!(
                    "normalization_multiplies={} normalization_adds={} normalization_divisions={}",
                    s.normalization.multiplies, s.normalization.adds, s.normalization.divisions
                );
                if let Some(path) = out {
                    io::write_text_atomic(&path, &windows)?;
                }
            } else {
                emit(out.as_ref(), &windows)?;
            }
            Ok(())
        }
        Command::Classify {
            plan,
            signal,
            format,
            threshold,
            refractory,
            out,
        } => {
            if !(-1.0..=1.0).contains(&threshold) {
                return Err(input_error(format!(
                    "--threshold must lie in [-1, 1], got {threshold}"
                )));
            }
            let plan = io::read_plan_json(&plan)?;
            let samples = read_signal(&signal, format)?;
            let refractory = refractory.unwrap_or(plan.m as u64);
            let events = run_detection(&plan, &samples, threshold, refractory)?;
            emit(out.as_ref(), &io::events_to_csv(&events))?;
            eprintln!("{} event(s)", events.len());
            Ok(())
        }
        Command::Bench {
            sizes,
            digits,
            trials,
            seed,
            base,
            jobs,
            out,
            count_shifts_as_mults,
        } => {
            check_base(base)?;
            if trials == 0 {
                return Err(input_error("--trials must be at least 1".into()));
            }
            let sizes = sizes
                .iter()
                .map(|s| parse_size(s))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = BenchConfig {
                sizes,
                digits,
                trials,
                seed,
                base,
                policy: CostPolicy {
                    count_shifts_as_multiplies: count_shifts_as_mults,
                    ..CostPolicy::default()
                },
            };
            let rows = bench_sweep_jobs(&cfg, jobs)?;
            emit(out.as_ref(), &rows_to_csv(&rows))?;
            Ok(())
        }
    }
}

/// Parses `KxM` (also accepting a unicode multiplication sign).
fn parse_size(text: &str) -> Result<(usize, usize), Error> {
    let normalized = text.replace('×', "x");
    let mut parts = normalized.split(['x', 'X']);
    let bad = || input_error(format!("size {text:?} is not of the form KxM"));
    let k = parts
        .next()
        .and_then(|p| p.trim().parse::<usize>().ok())
        .ok_or_else(bad)?;
    let m = parts
        .next()
        .and_then(|p| p.trim().parse::<usize>().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() || k == 0 || m == 0 {
        return Err(bad());
    }
    Ok((k, m))
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e.kind() {
            ErrorKind::Input => 1,
            ErrorKind::Internal => 2,
        };
        std::process::exit(code);
    }
}

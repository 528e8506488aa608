use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use knn_bench::{
    emit_report, run_baseline, run_on_workload, BenchError, DatasetSpec, QuerySpec, ReportFormat,
    Workload, DEFAULT_RUNS,
};
use knn_dataflow::data_io::DEFAULT_PARTITION_CAPACITY;
use knn_dataflow::distance::{DEFAULT_ACC_WIDTH, DEFAULT_CHUNK_WIDTH};
use knn_dataflow::{DistanceStagingParams, EngineConfig, Mode};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Fqsd,
    Fdsq,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

/// Benchmarks exact kNN search in the FQ-SD or FD-SQ configuration.
#[derive(Debug, Parser)]
#[command(name = "knn-bench", version)]
#[command(group(ArgGroup::new("data").required(true).args(["dataset", "synthetic"])))]
#[command(group(ArgGroup::new("query_source").required(true).args(["queries", "synthetic_queries"])))]
struct Cli {
    #[arg(long, value_enum)]
    mode: ModeArg,

    /// Neighbors per query.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Query lanes (fqsd) or partition workers (fdsq).
    #[arg(long)]
    workers: Option<usize>,

    /// Queries answered together; fqsd only, equal to the lane count.
    #[arg(long)]
    batch: Option<usize>,

    #[arg(long, default_value_t = DEFAULT_PARTITION_CAPACITY)]
    partition_capacity: usize,

    /// Components per partial-distance chunk (w).
    #[arg(long, default_value_t = DEFAULT_CHUNK_WIDTH)]
    chunk_width: usize,

    /// Vector-adder accumulator width (m).
    #[arg(long, default_value_t = DEFAULT_ACC_WIDTH)]
    acc_width: usize,

    /// Total queue nodes available; rejects workers * k above it.
    #[arg(long)]
    budget: Option<usize>,

    /// fvecs or bvecs base vectors.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,

    /// Synthetic uniform dataset.
    #[arg(long, value_name = "N,D,SEED", value_parser = parse_triple)]
    synthetic: Option<(usize, usize, u64)>,

    /// fvecs query vectors.
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,

    /// Synthetic queries with the dataset's dimensionality.
    #[arg(long, value_name = "N,SEED", value_parser = parse_pair)]
    synthetic_queries: Option<(usize, u64)>,

    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,

    /// Check every result against the brute-force oracle.
    #[arg(long)]
    verify: bool,

    /// Add a single-threaded brute-force row and report scale-ups against it.
    #[arg(long)]
    baseline: bool,

    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,

    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Map inner-product search onto L2 by appending one dimension.
    #[arg(long)]
    mips_transform: bool,
}

fn parse_triple(s: &str) -> Result<(usize, usize, u64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [n, d, seed] => Ok((
            n.parse().map_err(|e| format!("N: {e}"))?,
            d.parse().map_err(|e| format!("D: {e}"))?,
            seed.parse().map_err(|e| format!("SEED: {e}"))?,
        )),
        _ => Err("expected N,D,SEED".into()),
    }
}

fn parse_pair(s: &str) -> Result<(usize, u64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [n, seed] => Ok((
            n.parse().map_err(|e| format!("N: {e}"))?,
            seed.parse().map_err(|e| format!("SEED: {e}"))?,
        )),
        _ => Err("expected N,SEED".into()),
    }
}

fn engine_config(cli: &Cli) -> Result<EngineConfig, BenchError> {
    let mode = match cli.mode {
        ModeArg::Fqsd => Mode::FqSd,
        ModeArg::Fdsq => Mode::FdSq,
    };
    let workers = match (mode, cli.workers, cli.batch) {
        (Mode::FqSd, Some(w), Some(b)) if w != b => {
            return Err(BenchError::ConfigInvalid(format!(
                "fqsd runs one lane per query: --workers {w} and --batch {b} differ"
            )))
        }
        (Mode::FqSd, w, b) => w.or(b).unwrap_or(1),
        (Mode::FdSq, _, Some(b)) if b != 1 => {
            return Err(BenchError::ConfigInvalid(
                "fdsq streams queries one at a time; --batch must be 1".into(),
            ))
        }
        (Mode::FdSq, w, _) => w.unwrap_or(1),
    };
    let staging = DistanceStagingParams::new(cli.chunk_width, cli.acc_width)
        .map_err(|e| BenchError::ConfigInvalid(e.to_string()))?;
    let mut config = EngineConfig::new(mode, cli.k, workers)
        .with_partition_capacity(cli.partition_capacity)
        .with_staging(staging);
    config.budget = cli.budget;
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    let config = engine_config(cli)?;
    if cli.runs == 0 {
        return Err(BenchError::ConfigInvalid(
            "--runs must be at least 1".into(),
        ));
    }
    let dataset = match (&cli.dataset, cli.synthetic) {
        (Some(path), _) => DatasetSpec::File(path.clone()),
        (None, Some((n, d, seed))) => DatasetSpec::Synthetic { n, d, seed },
        (None, None) => unreachable!("clap requires one dataset source"),
    };
    let queries = match (&cli.queries, cli.synthetic_queries) {
        (Some(path), _) => QuerySpec::File(path.clone()),
        (None, Some((n, seed))) => QuerySpec::Synthetic { n, seed },
        (None, None) => unreachable!("clap requires one query source"),
    };
    let workload = Workload::load(&dataset, &queries, cli.mips_transform)?;

    let mut reports = Vec::new();
    if cli.baseline {
        reports.push(run_baseline(&workload, config.k, cli.runs)?);
    }
    reports.push(run_on_workload(&workload, &config, cli.runs, cli.verify)?);

    let format = match cli.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    let baseline = cli.baseline.then_some(0);
    match &cli.out {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            emit_report(&reports, baseline, format, &mut out)?;
            out.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            emit_report(&reports, baseline, format, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("knn-bench: {e}");
            match e {
                BenchError::ConfigInvalid(_) => ExitCode::from(2),
                BenchError::VerificationFailed { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

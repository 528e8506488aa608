//! Benchmark harness for the knn-dataflow engines.
//!
//! A [`BenchmarkRun`] names a dataset, a query set and an engine
//! configuration. [`run_benchmark`] executes it `runs` times on identical
//! inputs, optionally checks every result against the brute-force oracle, and
//! returns a [`MetricsReport`] of mean latency and throughput.

pub mod report;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use knn_dataflow::data_io::{
    generate_synthetic, generate_synthetic_queries, load_bvecs, load_fvecs, mips_to_l2,
    partition_dataset, DataError, PartitionedDataset,
};
use knn_dataflow::engine::{run_fqsd, with_fdsq_session};
use knn_dataflow::oracle::{brute_force_knn, match_distances};
use knn_dataflow::types::{validate_dataset, validate_queries};
use knn_dataflow::{EngineConfig, EngineError, KnnResult, Mode, Query, VectorRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{emit_report, format_scale_up, scale_up, ReportFormat};

/// Relative tolerance between engine and oracle distances.
pub const VERIFY_TOLERANCE: f32 = 1e-5;

/// Repetitions when none are requested.
pub const DEFAULT_RUNS: usize = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("verification failed for query {query_id}: {detail}")]
    VerificationFailed { query_id: u32, detail: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Engine(EngineError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}

impl From<EngineError> for BenchError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::WrongMode(_)
            | EngineError::BatchSizeMismatch { .. }
            | EngineError::IndivisibleK { .. }
            | EngineError::BudgetExceeded { .. }
            | EngineError::InvalidConfig(_) => BenchError::ConfigInvalid(e.to_string()),
            other => BenchError::Engine(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// fvecs, or bvecs when the extension says so.
    File(PathBuf),
    Synthetic {
        n: usize,
        d: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuerySpec {
    File(PathBuf),
    /// Dimensionality follows the dataset.
    Synthetic {
        n: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub config: EngineConfig,
    pub dataset: DatasetSpec,
    pub queries: QuerySpec,
    pub runs: usize,
    pub verify: bool,
    pub mips_transform: bool,
}

/// Loaded, validated inputs shared by every repetition.
#[derive(Debug, Clone)]
pub struct Workload {
    pub vectors: Vec<VectorRecord>,
    pub queries: Vec<Query>,
    pub d: usize,
}

impl Workload {
    pub fn new(vectors: Vec<VectorRecord>, queries: Vec<Query>) -> Result<Self, BenchError> {
        let d = vectors
            .first()
            .map(VectorRecord::dim)
            .ok_or_else(|| BenchError::ConfigInvalid("dataset is empty".into()))?;
        validate_dataset(&vectors, d).map_err(|e| BenchError::ConfigInvalid(e.to_string()))?;
        validate_queries(&queries, d).map_err(|e| BenchError::ConfigInvalid(e.to_string()))?;
        if queries.is_empty() {
            return Err(BenchError::ConfigInvalid("no queries".into()));
        }
        Ok(Self {
            vectors,
            queries,
            d,
        })
    }

    pub fn load(
        dataset: &DatasetSpec,
        queries: &QuerySpec,
        mips_transform: bool,
    ) -> Result<Self, BenchError> {
        let (d, vectors) = match dataset {
            DatasetSpec::File(path) => load_vectors(path)?,
            DatasetSpec::Synthetic { n, d, seed } => {
                if *n == 0 || *d == 0 {
                    return Err(BenchError::ConfigInvalid(
                        "synthetic dataset needs n >= 1 and d >= 1".into(),
                    ));
                }
                (*d, generate_synthetic(*n, *d, *seed))
            }
        };
        let queries = match queries {
            QuerySpec::File(path) => load_vectors(path)?
                .1
                .into_iter()
                .map(|r| Query::new(r.id.0, r.values))
                .collect(),
            QuerySpec::Synthetic { n, seed } => generate_synthetic_queries(*n, d, *seed),
        };
        if mips_transform {
            let (vectors, queries) = mips_to_l2(&vectors, &queries)?;
            return Self::new(vectors, queries);
        }
        Self::new(vectors, queries)
    }
}

fn load_vectors(path: &PathBuf) -> Result<(usize, Vec<VectorRecord>), DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bvecs") => load_bvecs(path),
        _ => load_fvecs(path),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `fqsd`, `fdsq`, or `sequential` for the brute-force baseline.
    pub mode: String,
    pub workers: usize,
    pub batch: usize,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub runs: usize,
    pub partition_capacity: usize,
    pub chunk_width: usize,
    pub acc_width: usize,
    pub budget: Option<usize>,
    pub mean_latency_ms: f64,
    pub throughput_qps: f64,
    /// Per run, per query latency.
    pub latency_samples_ms: Vec<Vec<f64>>,
    /// Per run throughput.
    pub run_throughput_qps: Vec<f64>,
    /// FNV-1a over each query's `(id, distance bits)` list, first run.
    pub checksums: Vec<u64>,
    /// `None` when verification was not requested.
    pub verified: Option<bool>,
    /// Always `"n/a"`: no portable energy measurement exists.
    pub energy: String,
}

impl MetricsReport {
    pub fn median_latency_ms(&self) -> f64 {
        let mut all: Vec<f64> = self.latency_samples_ms.iter().flatten().copied().collect();
        if all.is_empty() {
            return 0.0;
        }
        all.sort_by(f64::total_cmp);
        let mid = all.len() / 2;
        if all.len() % 2 == 1 {
            all[mid]
        } else {
            (all[mid - 1] + all[mid]) / 2.0
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self.mode.as_str() {
            "fqsd" => "FQ-SD",
            "fdsq" => "FD-SQ",
            _ => "SequentialQ-CPU",
        }
    }
}

pub fn checksum(result: &KnnResult) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for p in &result.neighbors {
        for b in
            p.id.0
                .to_le_bytes()
                .into_iter()
                .chain(p.distance.to_bits().to_le_bytes())
        {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Results and timings of one repetition.
struct RunOutcome {
    results: Vec<KnnResult>,
    latencies_ms: Vec<f64>,
    wall: Duration,
}

fn run_once(
    workload: &Workload,
    dataset: &PartitionedDataset,
    config: &EngineConfig,
) -> Result<RunOutcome, BenchError> {
    let mut results = Vec::with_capacity(workload.queries.len());
    let mut latencies_ms = Vec::with_capacity(workload.queries.len());
    let wall = match config.mode {
        Mode::FdSq => with_fdsq_session(dataset, config, |session| {
            let start = Instant::now();
            for q in &workload.queries {
                let t = Instant::now();
                results.push(session.search(q)?);
                latencies_ms.push(ms(t.elapsed()));
            }
            Ok::<_, EngineError>(start.elapsed())
        })??,
        Mode::FqSd => {
            let mut wall = Duration::ZERO;
            for batch in workload.queries.chunks(config.workers) {
                let cfg = EngineConfig {
                    workers: batch.len(),
                    ..config.clone()
                };
                let t = Instant::now();
                results.extend(run_fqsd(batch, dataset, &cfg)?);
                let elapsed = t.elapsed();
                wall += elapsed;
                // The whole batch completes together.
                latencies_ms.extend(std::iter::repeat_n(ms(elapsed), batch.len()));
            }
            wall
        }
    };
    Ok(RunOutcome {
        results,
        latencies_ms,
        wall,
    })
}

fn oracle_results(workload: &Workload, k: usize) -> Vec<KnnResult> {
    workload
        .queries
        .iter()
        .map(|q| brute_force_knn(&workload.vectors, q, k).expect("dimensions validated"))
        .collect()
}

fn verify(
    results: &[KnnResult],
    expected: &[KnnResult],
    k: usize,
    n: usize,
) -> Result<(), BenchError> {
    for (got, want) in results.iter().zip(expected) {
        got.check_invariants(k, n)
            .and_then(|_| match_distances(got, want, VERIFY_TOLERANCE))
            .map_err(|detail| BenchError::VerificationFailed {
                query_id: got.query_id,
                detail,
            })?;
    }
    Ok(())
}

fn check_config(config: &EngineConfig, runs: usize) -> Result<(), BenchError> {
    if runs == 0 {
        return Err(BenchError::ConfigInvalid("runs must be at least 1".into()));
    }
    config.validate().map_err(BenchError::from)
}

/// Runs `config` over an already loaded workload.
pub fn run_on_workload(
    workload: &Workload,
    config: &EngineConfig,
    runs: usize,
    verify_results: bool,
) -> Result<MetricsReport, BenchError> {
    check_config(config, runs)?;
    let dataset = partition_dataset(&workload.vectors, config.partition_capacity, workload.d)?;
    let expected = verify_results.then(|| oracle_results(workload, config.k));

    let mut samples = Vec::with_capacity(runs);
    let mut throughputs = Vec::with_capacity(runs);
    let mut checksums = Vec::new();
    for run in 0..runs {
        let outcome = run_once(workload, &dataset, config)?;
        if let Some(expected) = &expected {
            verify(&outcome.results, expected, config.k, workload.vectors.len())?;
        }
        if run == 0 {
            checksums = outcome.results.iter().map(checksum).collect();
        }
        throughputs.push(outcome.results.len() as f64 / outcome.wall.as_secs_f64());
        samples.push(outcome.latencies_ms);
    }

    let per_run_means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let batch = match config.mode {
        Mode::FqSd => config.workers,
        Mode::FdSq => 1,
    };
    Ok(MetricsReport {
        mode: config.mode.as_str().to_string(),
        workers: config.workers,
        batch,
        k: config.k,
        n: workload.vectors.len(),
        d: workload.d,
        runs,
        partition_capacity: config.partition_capacity,
        chunk_width: config.staging.chunk_width(),
        acc_width: config.staging.acc_width(),
        budget: config.budget,
        mean_latency_ms: mean(&per_run_means),
        throughput_qps: mean(&throughputs),
        latency_samples_ms: samples,
        run_throughput_qps: throughputs,
        checksums,
        verified: expected.map(|_| true),
        energy: "n/a".to_string(),
    })
}

/// Loads the inputs of `run` and executes it.
pub fn run_benchmark(run: &BenchmarkRun) -> Result<MetricsReport, BenchError> {
    check_config(&run.config, run.runs)?;
    let workload = Workload::load(&run.dataset, &run.queries, run.mips_transform)?;
    run_on_workload(&workload, &run.config, run.runs, run.verify)
}

/// Single-threaded brute-force scan, one query at a time: the baseline row.
pub fn run_baseline(
    workload: &Workload,
    k: usize,
    runs: usize,
) -> Result<MetricsReport, BenchError> {
    if runs == 0 || k == 0 {
        return Err(BenchError::ConfigInvalid(
            "runs and k must be at least 1".into(),
        ));
    }
    let mut samples = Vec::with_capacity(runs);
    let mut throughputs = Vec::with_capacity(runs);
    let mut checksums = Vec::new();
    for run in 0..runs {
        let mut lat = Vec::with_capacity(workload.queries.len());
        let start = Instant::now();
        let mut results = Vec::with_capacity(workload.queries.len());
        for q in &workload.queries {
            let t = Instant::now();
            results.push(brute_force_knn(&workload.vectors, q, k).expect("dimensions validated"));
            lat.push(ms(t.elapsed()));
        }
        let wall = start.elapsed();
        if run == 0 {
            checksums = results.iter().map(checksum).collect();
        }
        throughputs.push(results.len() as f64 / wall.as_secs_f64());
        samples.push(lat);
    }
    let per_run_means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    Ok(MetricsReport {
        mode: "sequential".to_string(),
        workers: 1,
        batch: 1,
        k,
        n: workload.vectors.len(),
        d: workload.d,
        runs,
        partition_capacity: workload.vectors.len(),
        chunk_width: 1,
        acc_width: 1,
        budget: None,
        mean_latency_ms: mean(&per_run_means),
        throughput_qps: mean(&throughputs),
        latency_samples_ms: samples,
        run_throughput_qps: throughputs,
        checksums,
        verified: None,
        energy: "n/a".to_string(),
    })
}

//! The two search configurations.
//!
//! * **FQ-SD** (fixed queries, streamed dataset): a batch of `M` queries stays
//!   resident while partitions stream through a double buffer. One queue of
//!   `M * k` nodes is split into `M` lanes, one per query.
//! * **FD-SQ** (fixed dataset, streamed queries): the partitions stay resident
//!   and are divided among `N` workers. Each query is scanned by all workers
//!   at once and their candidates are combined into one top-k.

mod fdsq;
mod fqsd;
mod stream;

use std::env;

use thiserror::Error;

use crate::data_io::DEFAULT_PARTITION_CAPACITY;
use crate::distance::DistanceStagingParams;
use crate::topk::QueueError;

pub use fdsq::{run_fdsq, run_fdsq_collect, with_fdsq_session, FdsqSession};
pub use fqsd::{run_fqsd, run_fqsd_batches, run_fqsd_from, run_fqsd_traced, PartitionSource};
pub use stream::{double_buffer_stream, Phase, StreamError, StreamEvent, StreamTrace};

/// Largest operating point of the reference hardware (24 workers x k = 72).
pub const DEFAULT_QUEUE_BUDGET: usize = 1_728;

/// Caps the number of OS threads backing the logical workers.
pub const THREADS_ENV: &str = "KNN_DATAFLOW_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FqSd,
    FdSq,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FqSd => "fqsd",
            Mode::FdSq => "fdsq",
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine run with a {0:?} configuration")]
    WrongMode(Mode),
    #[error("batch of {actual} queries for {expected} query lanes")]
    BatchSizeMismatch { expected: usize, actual: usize },
    #[error("query {query} has dimension {actual}, dataset has {expected}")]
    DimensionMismatch {
        query: u32,
        expected: usize,
        actual: usize,
    },
    #[error("queue of {k} nodes cannot be split into {lanes} lanes")]
    IndivisibleK { k: usize, lanes: usize },
    #[error("dataset has no partitions")]
    NoPartitions,
    #[error("queue budget exceeded: {required} nodes required, {available} available")]
    BudgetExceeded { required: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("producer failed on partition {index}: {message}")]
    ProducerFailure { index: usize, message: String },
    #[error(transparent)]
    Queue(#[from] QueueError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub mode: Mode,
    /// Neighbors returned per query.
    pub k: usize,
    /// Query lanes `M` in FQ-SD, partition workers `N` in FD-SQ.
    pub workers: usize,
    pub partition_capacity: usize,
    pub staging: DistanceStagingParams,
    /// Total queue nodes available, if modelled.
    pub budget: Option<usize>,
}

impl EngineConfig {
    pub fn new(mode: Mode, k: usize, workers: usize) -> Self {
        Self {
            mode,
            k,
            workers,
            partition_capacity: DEFAULT_PARTITION_CAPACITY,
            staging: DistanceStagingParams::default(),
            budget: None,
        }
    }

    pub fn fqsd(k: usize, lanes: usize) -> Self {
        Self::new(Mode::FqSd, k, lanes)
    }

    pub fn fdsq(k: usize, workers: usize) -> Self {
        Self::new(Mode::FdSq, k, workers)
    }

    pub fn with_partition_capacity(mut self, capacity: usize) -> Self {
        self.partition_capacity = capacity;
        self
    }

    pub fn with_staging(mut self, staging: DistanceStagingParams) -> Self {
        self.staging = staging;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    /// Total queue nodes this configuration occupies.
    pub fn queue_nodes(&self) -> usize {
        self.workers.saturating_mul(self.k)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k == 0 {
            return Err(EngineError::InvalidConfig("k must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(EngineError::InvalidConfig(
                "workers must be at least 1".into(),
            ));
        }
        if self.partition_capacity == 0 {
            return Err(EngineError::InvalidConfig(
                "partition capacity must be at least 1".into(),
            ));
        }
        if let Some(total) = self.budget {
            validate_budget(self.k, self.workers, total)?;
        }
        Ok(())
    }

    fn expect_mode(&self, mode: Mode) -> Result<(), EngineError> {
        if self.mode != mode {
            return Err(EngineError::WrongMode(self.mode));
        }
        self.validate()
    }
}

/// Linear resource model: `workers` queues of `k` nodes must fit in `total`.
pub fn validate_budget(k: usize, workers: usize, total: usize) -> Result<(), EngineError> {
    let required = k.saturating_mul(workers);
    if required > total {
        return Err(EngineError::BudgetExceeded {
            required,
            available: total,
        });
    }
    Ok(())
}

/// OS threads used for `workers` logical workers, honouring [`THREADS_ENV`].
pub fn thread_count(workers: usize) -> usize {
    let cap = env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|c| *c >= 1)
        .unwrap_or(workers);
    workers.min(cap).max(1)
}

//! Getting vectors in: fvecs/bvecs files, synthetic corpora, partitioning
//! and the inner-product to L2 reduction.

mod fvecs;
mod mips;
mod partition;
mod synthetic;

use std::io;

use thiserror::Error;

/// Vectors per partition when none is configured.
pub const DEFAULT_PARTITION_CAPACITY: usize = 4096;

pub use fvecs::{load_bvecs, load_fvecs, read_bvecs, read_fvecs, write_fvecs};
pub use mips::mips_to_l2;
pub use partition::{partition_dataset, Partition, PartitionedDataset};
pub use synthetic::{generate_synthetic, generate_synthetic_queries};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("truncated record at byte offset {0}")]
    TruncatedRecord(u64),
    #[error("record {0} declares a different dimensionality than record 0")]
    InconsistentDimension(usize),
    #[error("invalid dimension header {dim} at byte offset {offset}")]
    InvalidDimension { offset: u64, dim: i32 },
    #[error("file contains no records")]
    EmptyFile,
    #[error("file holds more vectors than the id space allows")]
    TooManyVectors,
    #[error("partition capacity must be at least 1")]
    InvalidCapacity,
    #[error("collection is empty")]
    EmptyCollection,
    #[error("vector {id} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        id: u32,
        expected: usize,
        actual: usize,
    },
    #[error("vector {0} has a non-finite component")]
    NonFinite(u32),
}

use super::DataError;
use crate::types::{VectorId, VectorRecord};

/// A fixed-capacity block of vectors stored row-major.
///
/// Slots past `valid` are padding: all-zero components with the sentinel id.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    ids: Vec<VectorId>,
    data: Vec<f32>,
    valid: usize,
    d: usize,
}

impl Partition {
    /// An all-padding block, used as a staging buffer.
    pub fn empty(capacity: usize, d: usize) -> Self {
        Self {
            ids: vec![VectorId::SENTINEL; capacity],
            data: vec![0.0; capacity * d],
            valid: 0,
            d,
        }
    }

    pub fn capacity(&self) -> usize {
        self.ids.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Every slot, padding included, as `(id, components)`.
    pub fn slots(&self) -> impl Iterator<Item = (VectorId, &[f32])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.d))
    }

    /// Overwrites this block with `other`, reusing the allocation.
    pub fn copy_from(&mut self, other: &Partition) {
        self.ids.clone_from(&other.ids);
        self.data.clone_from(&other.data);
        self.valid = other.valid;
        self.d = other.d;
    }
}

/// The collection split into equal-capacity partitions in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    partitions: Vec<Partition>,
    capacity: usize,
    d: usize,
    total_valid: usize,
}

impl PartitionedDataset {
    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition_capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of real (non-padding) vectors.
    pub fn total_valid(&self) -> usize {
        self.total_valid
    }

    pub fn valid_counts(&self) -> Vec<usize> {
        self.partitions.iter().map(Partition::valid_count).collect()
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

/// Splits `vectors` into `ceil(n / capacity)` blocks, padding the last one.
/// Vectors must already be in id order with dimension `d`.
pub fn partition_dataset(
    vectors: &[VectorRecord],
    partition_capacity: usize,
    d: usize,
) -> Result<PartitionedDataset, DataError> {
    if partition_capacity == 0 {
        return Err(DataError::InvalidCapacity);
    }
    let mut partitions = Vec::with_capacity(vectors.len().div_ceil(partition_capacity));
    for block in vectors.chunks(partition_capacity) {
        let mut part = Partition::empty(partition_capacity, d);
        for (slot, v) in block.iter().enumerate() {
            if v.dim() != d {
                return Err(DataError::DimensionMismatch {
                    id: v.id.0,
                    expected: d,
                    actual: v.dim(),
                });
            }
            part.ids[slot] = v.id;
            part.data[slot * d..(slot + 1) * d].copy_from_slice(&v.values);
        }
        part.valid = block.len();
        partitions.push(part);
    }
    Ok(PartitionedDataset {
        partitions,
        capacity: partition_capacity,
        d,
        total_valid: vectors.len(),
    })
}

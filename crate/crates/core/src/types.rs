//! Domain types shared by every stage of the search pipeline.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Dense 0-based index of a vector in its collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VectorId(pub u32);

impl VectorId {
    /// Reserved id for padding slots and empty queue nodes. Never part of a result.
    pub const SENTINEL: VectorId = VectorId(u32::MAX);

    pub fn is_sentinel(self) -> bool {
        self == Self::SENTINEL
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_sentinel() {
            f.write_str("SENTINEL")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// One point of the searched collection.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub id: VectorId,
    pub values: Vec<f32>,
}

impl VectorRecord {
    pub fn new(id: u32, values: Vec<f32>) -> Self {
        Self {
            id: VectorId(id),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A search request. Shares the dimensionality of the collection it is run against.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: u32,
    pub values: Vec<f32>,
}

impl Query {
    pub fn new(id: u32, values: Vec<f32>) -> Self {
        Self { id, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `(distance, id)` pair flowing through the top-k pipeline.
///
/// `distance` is a squared Euclidean distance. Empty slots hold
/// `(+inf, SENTINEL)`. The `solution` flag is only ever raised while the
/// queue drains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborPair {
    pub distance: f32,
    pub id: VectorId,
    pub solution: bool,
}

impl NeighborPair {
    pub const EMPTY: NeighborPair = NeighborPair {
        distance: f32::INFINITY,
        id: VectorId::SENTINEL,
        solution: false,
    };

    pub fn new(distance: f32, id: VectorId) -> Self {
        Self {
            distance,
            id,
            solution: false,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.id.is_sentinel()
    }
}

/// The neighbors found for one query, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    pub query_id: u32,
    pub neighbors: Vec<NeighborPair>,
}

impl KnnResult {
    pub fn distances(&self) -> Vec<f32> {
        self.neighbors.iter().map(|p| p.distance).collect()
    }

    pub fn ids(&self) -> Vec<VectorId> {
        self.neighbors.iter().map(|p| p.id).collect()
    }

    /// Checks the structural guarantees every engine must give: expected
    /// length, ascending distances, no sentinel and no repeated id.
    pub fn check_invariants(&self, k: usize, n: usize) -> Result<(), String> {
        let expected = k.min(n);
        if self.neighbors.len() != expected {
            return Err(format!(
                "query {}: {} neighbors, expected {}",
                self.query_id,
                self.neighbors.len(),
                expected
            ));
        }
        let mut seen = HashSet::with_capacity(self.neighbors.len());
        for (pos, pair) in self.neighbors.iter().enumerate() {
            if pair.is_sentinel() {
                return Err(format!("query {}: sentinel at {}", self.query_id, pos));
            }
            if !pair.distance.is_finite() || pair.distance < 0.0 {
                return Err(format!(
                    "query {}: bad distance {} at {}",
                    self.query_id, pair.distance, pos
                ));
            }
            if !seen.insert(pair.id) {
                return Err(format!("query {}: duplicate id {}", self.query_id, pair.id));
            }
        }
        if let Some(pos) = self
            .neighbors
            .windows(2)
            .position(|w| w[0].distance > w[1].distance)
        {
            return Err(format!(
                "query {}: distances decrease at {}",
                self.query_id,
                pos + 1
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("vector {0} does not have the declared dimensionality")]
    DimensionMismatch(VectorId),
    #[error("vector {0} has a non-finite component at position {1}")]
    NonFiniteComponent(VectorId, usize),
    #[error("vector id {0} is repeated or out of the dense 0..n range")]
    DuplicateId(VectorId),
    #[error("dimensionality must be at least 1")]
    ZeroDimension,
}

/// Confirms uniform dimensionality, finite components and ids forming exactly `0..n`.
pub fn validate_dataset(vectors: &[VectorRecord], d: usize) -> Result<(), ValidationError> {
    if d == 0 {
        return Err(ValidationError::ZeroDimension);
    }
    let mut seen = vec![false; vectors.len()];
    for v in vectors {
        if v.dim() != d {
            return Err(ValidationError::DimensionMismatch(v.id));
        }
        if let Some(pos) = v.values.iter().position(|x| !x.is_finite()) {
            return Err(ValidationError::NonFiniteComponent(v.id, pos));
        }
        match seen.get_mut(v.id.index()) {
            Some(slot) if !*slot => *slot = true,
            _ => return Err(ValidationError::DuplicateId(v.id)),
        }
    }
    Ok(())
}

/// Same checks as [`validate_dataset`] for a query set (ids are free-form).
pub fn validate_queries(queries: &[Query], d: usize) -> Result<(), ValidationError> {
    for q in queries {
        let id = VectorId(q.id);
        if q.dim() != d {
            return Err(ValidationError::DimensionMismatch(id));
        }
        if let Some(pos) = q.values.iter().position(|x| !x.is_finite()) {
            return Err(ValidationError::NonFiniteComponent(id, pos));
        }
    }
    Ok(())
}

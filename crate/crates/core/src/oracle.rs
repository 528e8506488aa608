//! Brute-force exact kNN: the correctness reference for every engine, and the
//! single-threaded sequential baseline in benchmarks.

use crate::distance::{direct_sq_l2, DistanceError};
use crate::types::{KnnResult, NeighborPair, Query, VectorRecord};

/// Scores every vector with [`direct_sq_l2`], sorts by `(distance, id)` and
/// keeps the first `min(k, n)`.
pub fn brute_force_knn(
    vectors: &[VectorRecord],
    query: &Query,
    k: usize,
) -> Result<KnnResult, DistanceError> {
    let mut scored = vectors
        .iter()
        .map(|v| {
            Ok(NeighborPair::new(
                direct_sq_l2(&query.values, &v.values)?,
                v.id,
            ))
        })
        .collect::<Result<Vec<_>, DistanceError>>()?;
    scored.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    scored.truncate(k);
    Ok(KnnResult {
        query_id: query.id,
        neighbors: scored,
    })
}

/// Compares an engine result with the oracle's as distance multisets: same
/// length, and the `i`-th smallest distances agree within `rel_tol`
/// relative. Ids are not compared, since engines may order exact ties
/// differently.
pub fn match_distances(got: &KnnResult, want: &KnnResult, rel_tol: f32) -> Result<(), String> {
    if got.neighbors.len() != want.neighbors.len() {
        return Err(format!(
            "query {}: {} neighbors, oracle has {}",
            got.query_id,
            got.neighbors.len(),
            want.neighbors.len()
        ));
    }
    let mut a = got.distances();
    let mut b = want.distances();
    a.sort_by(f32::total_cmp);
    b.sort_by(f32::total_cmp);
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        if (x - y).abs() > rel_tol * x.abs().max(y.abs()) {
            return Err(format!(
                "query {}: rank {} distance {} vs oracle {}",
                got.query_id, i, x, y
            ));
        }
    }
    Ok(())
}

use super::DataError;
use crate::types::{Query, VectorRecord};

/// Reduces maximum inner product search to nearest-neighbor search under L2.
///
/// With `phi` the largest document norm, each document `x` gains the extra
/// component `sqrt(phi^2 - |x|^2)` and each query gains `0`. Then
/// `|q' - x'|^2 = |q|^2 + phi^2 - 2 q.x`, so ascending distance is descending
/// inner product. Norms are computed in `f64`; a radicand that rounds below
/// zero is clamped to zero.
pub fn mips_to_l2(
    documents: &[VectorRecord],
    queries: &[Query],
) -> Result<(Vec<VectorRecord>, Vec<Query>), DataError> {
    let first = documents.first().ok_or(DataError::EmptyCollection)?;
    let d = first.dim();

    let mut norms_sq = Vec::with_capacity(documents.len());
    for doc in documents {
        check(doc.id.0, &doc.values, d)?;
        norms_sq.push(sq_norm(&doc.values));
    }
    for q in queries {
        check(q.id, &q.values, d)?;
    }
    let phi_sq = norms_sq.iter().copied().fold(0.0f64, f64::max);

    let docs = documents
        .iter()
        .zip(&norms_sq)
        .map(|(doc, norm_sq)| {
            let mut values = Vec::with_capacity(d + 1);
            values.extend_from_slice(&doc.values);
            values.push((phi_sq - norm_sq).max(0.0).sqrt() as f32);
            VectorRecord { id: doc.id, values }
        })
        .collect();
    let queries = queries
        .iter()
        .map(|q| {
            let mut values = Vec::with_capacity(d + 1);
            values.extend_from_slice(&q.values);
            values.push(0.0);
            Query::new(q.id, values)
        })
        .collect();
    Ok((docs, queries))
}

fn sq_norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64) * (*x as f64)).sum()
}

fn check(id: u32, values: &[f32], d: usize) -> Result<(), DataError> {
    if values.len() != d {
        return Err(DataError::DimensionMismatch {
            id,
            expected: d,
            actual: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFinite(id));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::direct_sq_l2;

    #[test]
    fn equal_norms_get_zero_extra_component() {
        let docs = vec![
            VectorRecord::new(0, vec![3.0, 4.0]),
            VectorRecord::new(1, vec![0.0, 5.0]),
            VectorRecord::new(2, vec![5.0, 0.0]),
        ];
        let (aug, _) = mips_to_l2(&docs, &[]).unwrap();
        assert!(aug.iter().all(|d| d.values[2] == 0.0));
    }

    #[test]
    fn hand_computed_ranking() {
        // Inner products with (3, 1): 3 for (1, 0) and 2 for (0, 2).
        let docs = vec![
            VectorRecord::new(0, vec![1.0, 0.0]),
            VectorRecord::new(1, vec![0.0, 2.0]),
        ];
        let q = vec![Query::new(0, vec![3.0, 1.0])];
        let (aug, qs) = mips_to_l2(&docs, &q).unwrap();
        // phi = 2: doc0 -> (1, 0, sqrt 3), doc1 -> (0, 2, 0); query -> (3, 1, 0)
        assert_eq!(aug[1].values, vec![0.0, 2.0, 0.0]);
        assert_eq!(qs[0].values, vec![3.0, 1.0, 0.0]);
        let d0 = direct_sq_l2(&qs[0].values, &aug[0].values).unwrap();
        let d1 = direct_sq_l2(&qs[0].values, &aug[1].values).unwrap();
        // |q|^2 + phi^2 - 2 q.x = 10 + 4 - 6 = 8 and 10 + 4 - 4 = 10
        assert!((d0 - 8.0).abs() < 1e-5);
        assert!((d1 - 10.0).abs() < 1e-5);
        assert!(d0 < d1);
    }

    #[test]
    fn adds_one_dimension() {
        let docs = crate::data_io::generate_synthetic(3, 768, 3);
        let qs = crate::data_io::generate_synthetic_queries(2, 768, 4);
        let (aug, augq) = mips_to_l2(&docs, &qs).unwrap();
        assert!(aug.iter().all(|d| d.dim() == 769));
        assert!(augq.iter().all(|q| q.dim() == 769 && q.values[768] == 0.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            mips_to_l2(&[], &[]),
            Err(DataError::EmptyCollection)
        ));
        let docs = vec![VectorRecord::new(0, vec![1.0, 0.0])];
        assert!(matches!(
            mips_to_l2(&docs, &[Query::new(0, vec![1.0])]),
            Err(DataError::DimensionMismatch { .. })
        ));
        let bad = vec![VectorRecord::new(0, vec![f32::INFINITY, 0.0])];
        assert!(matches!(
            mips_to_l2(&bad, &[]),
            Err(DataError::NonFinite(0))
        ));
    }
}

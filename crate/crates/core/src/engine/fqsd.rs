use std::convert::Infallible;
use std::fmt::Display;
use std::sync::{mpsc, Arc};
use std::thread;

use super::stream::{double_buffer_stream, StreamError, StreamTrace};
use super::{thread_count, EngineConfig, EngineError, Mode};
use crate::data_io::{Partition, PartitionedDataset};
use crate::distance::{staged_distance_unchecked, DistanceStagingParams};
use crate::topk::{QueueError, QueueLane, TopKQueue};
use crate::types::{KnnResult, NeighborPair, Query};

/// Where the streamed partitions come from. The source is driven from the
/// producer thread of the double buffer.
pub trait PartitionSource: Send {
    type Error: Display + Send;

    fn num_partitions(&self) -> usize;
    fn partition_capacity(&self) -> usize;
    fn dim(&self) -> usize;
    /// Stages partition `index` into `slot`.
    fn fill(&mut self, index: usize, slot: &mut Partition) -> Result<(), Self::Error>;
}

impl PartitionSource for &PartitionedDataset {
    type Error = Infallible;

    fn num_partitions(&self) -> usize {
        self.len()
    }

    fn partition_capacity(&self) -> usize {
        PartitionedDataset::partition_capacity(self)
    }

    fn dim(&self) -> usize {
        PartitionedDataset::dim(self)
    }

    fn fill(&mut self, index: usize, slot: &mut Partition) -> Result<(), Infallible> {
        slot.copy_from(&self.partitions()[index]);
        Ok(())
    }
}

/// Answers a batch of `config.workers` queries over a streamed dataset.
pub fn run_fqsd(
    queries: &[Query],
    dataset: &PartitionedDataset,
    config: &EngineConfig,
) -> Result<Vec<KnnResult>, EngineError> {
    run_fqsd_from(queries, dataset, config, None)
}

/// [`run_fqsd`] recording fill and scan intervals into `trace`.
pub fn run_fqsd_traced(
    queries: &[Query],
    dataset: &PartitionedDataset,
    config: &EngineConfig,
    trace: &StreamTrace,
) -> Result<Vec<KnnResult>, EngineError> {
    run_fqsd_from(queries, dataset, config, Some(trace))
}

/// Splits `queries` into consecutive batches of `config.workers` lanes. A
/// shorter final batch runs with as many lanes as it has queries.
pub fn run_fqsd_batches(
    queries: &[Query],
    dataset: &PartitionedDataset,
    config: &EngineConfig,
) -> Result<Vec<KnnResult>, EngineError> {
    config.expect_mode(Mode::FqSd)?;
    let mut out = Vec::with_capacity(queries.len());
    for batch in queries.chunks(config.workers) {
        let cfg = EngineConfig {
            workers: batch.len(),
            ..config.clone()
        };
        out.extend(run_fqsd(batch, dataset, &cfg)?);
    }
    Ok(out)
}

struct LaneJob<'q, 'n> {
    query: &'q Query,
    lane: QueueLane<'n>,
}

impl LaneJob<'_, '_> {
    fn scan(&mut self, part: &Partition, staging: DistanceStagingParams) {
        let q = &self.query.values;
        for (id, x) in part.slots() {
            if id.is_sentinel() {
                continue;
            }
            let d = staged_distance_unchecked(q, x, staging);
            self.lane.push_unchecked(NeighborPair::new(d, id));
        }
    }
}

/// Generic form of [`run_fqsd`] over any partition source.
pub fn run_fqsd_from<S: PartitionSource>(
    queries: &[Query],
    source: S,
    config: &EngineConfig,
    trace: Option<&StreamTrace>,
) -> Result<Vec<KnnResult>, EngineError> {
    config.expect_mode(Mode::FqSd)?;
    let lanes = config.workers;
    if queries.len() != lanes {
        return Err(EngineError::BatchSizeMismatch {
            expected: lanes,
            actual: queries.len(),
        });
    }
    let d = source.dim();
    for q in queries {
        if q.dim() != d {
            return Err(EngineError::DimensionMismatch {
                query: q.id,
                expected: d,
                actual: q.dim(),
            });
        }
    }
    let partitions = source.num_partitions();
    if partitions == 0 {
        return Err(EngineError::NoPartitions);
    }

    let total_k = lanes
        .checked_mul(config.k)
        .ok_or_else(|| EngineError::InvalidConfig("queue length overflows".into()))?;
    let mut queue = TopKQueue::new(total_k)?;
    queue.partition(lanes).map_err(|e| match e {
        QueueError::IndivisibleK { k, lanes } => EngineError::IndivisibleK { k, lanes },
        other => EngineError::Queue(other),
    })?;

    let staging = config.staging;
    let capacity = source.partition_capacity();
    let jobs: Vec<LaneJob> = queue
        .lanes_mut()?
        .into_iter()
        .zip(queries)
        .map(|(lane, query)| LaneJob { query, lane })
        .collect();

    let threads = thread_count(lanes);
    if threads == 1 {
        stream_single(source, jobs, capacity, d, staging, trace)?;
    } else {
        stream_pooled(source, jobs, threads, capacity, d, staging, trace)?;
    }

    let results = queue.flush_lanes()?;
    Ok(queries
        .iter()
        .zip(results)
        .map(|(q, neighbors)| KnnResult {
            query_id: q.id,
            neighbors,
        })
        .collect())
}

fn producer_error<E: Display>(err: StreamError<E>) -> EngineError {
    match err {
        StreamError::NoPartitions => EngineError::NoPartitions,
        StreamError::ProducerFailure { index, source } => EngineError::ProducerFailure {
            index,
            message: source.to_string(),
        },
    }
}

fn stream_single<S: PartitionSource>(
    mut source: S,
    mut jobs: Vec<LaneJob>,
    capacity: usize,
    d: usize,
    staging: DistanceStagingParams,
    trace: Option<&StreamTrace>,
) -> Result<(), EngineError> {
    double_buffer_stream(
        source.num_partitions(),
        [Partition::empty(capacity, d), Partition::empty(capacity, d)],
        |i, slot| source.fill(i, slot),
        |_, part| {
            for job in &mut jobs {
                job.scan(part, staging);
            }
        },
        trace,
    )
    .map_err(producer_error)
}

/// Lane `j` is served by thread `j % threads`. Staging buffers travel as
/// `Arc`s so the scanner threads can share the resident partition; all
/// clones are dropped before a scan is acknowledged, which lets the producer
/// reclaim the buffer.
fn stream_pooled<S: PartitionSource>(
    mut source: S,
    jobs: Vec<LaneJob>,
    threads: usize,
    capacity: usize,
    d: usize,
    staging: DistanceStagingParams,
    trace: Option<&StreamTrace>,
) -> Result<(), EngineError> {
    let mut groups: Vec<Vec<LaneJob>> = (0..threads).map(|_| Vec::new()).collect();
    for (j, job) in jobs.into_iter().enumerate() {
        groups[j % threads].push(job);
    }

    thread::scope(|scope| {
        let (done_tx, done_rx) = mpsc::channel::<()>();
        let mut work_txs = Vec::with_capacity(threads);
        for mut group in groups {
            let (work_tx, work_rx) = mpsc::channel::<Arc<Partition>>();
            let done_tx = done_tx.clone();
            work_txs.push(work_tx);
            scope.spawn(move || {
                while let Ok(part) = work_rx.recv() {
                    for job in &mut group {
                        job.scan(&part, staging);
                    }
                    drop(part);
                    if done_tx.send(()).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);

        let slots = [
            Arc::new(Partition::empty(capacity, d)),
            Arc::new(Partition::empty(capacity, d)),
        ];
        let result = double_buffer_stream(
            source.num_partitions(),
            slots,
            |i, slot: &mut Arc<Partition>| {
                let buf = Arc::get_mut(slot).expect("scanners released the slot");
                source.fill(i, buf)
            },
            |_, part| {
                for tx in &work_txs {
                    tx.send(Arc::clone(part)).expect("lane scanner alive");
                }
                for _ in 0..work_txs.len() {
                    done_rx.recv().expect("lane scanner alive");
                }
            },
            trace,
        );
        // Closing the work channels stops the scanners.
        drop(work_txs);
        result.map_err(producer_error)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{generate_synthetic, generate_synthetic_queries, partition_dataset};
    use crate::oracle::brute_force_knn;
    use crate::types::VectorId;

    #[test]
    fn single_lane_full_scan() {
        let v = generate_synthetic(3, 4, 1);
        let ds = partition_dataset(&v, 2, 4).unwrap();
        let q = generate_synthetic_queries(1, 4, 2);
        let out = run_fqsd(&q, &ds, &EngineConfig::fqsd(3, 1)).unwrap();
        let oracle = brute_force_knn(&v, &q[0], 3).unwrap();
        assert_eq!(out[0].ids(), oracle.ids());
        out[0].check_invariants(3, 3).unwrap();
    }

    #[test]
    fn identical_queries_identical_results() {
        let v = generate_synthetic(200, 8, 1);
        let ds = partition_dataset(&v, 16, 8).unwrap();
        let q = generate_synthetic_queries(1, 8, 5);
        let batch = vec![q[0].clone(), Query::new(1, q[0].values.clone())];
        let out = run_fqsd(&batch, &ds, &EngineConfig::fqsd(10, 2)).unwrap();
        assert_eq!(out[0].neighbors, out[1].neighbors);
        assert_eq!(out[1].query_id, 1);
    }

    #[test]
    fn batch_and_dimension_errors() {
        let v = generate_synthetic(10, 4, 1);
        let ds = partition_dataset(&v, 4, 4).unwrap();
        let q = generate_synthetic_queries(3, 4, 2);
        assert!(matches!(
            run_fqsd(&q, &ds, &EngineConfig::fqsd(2, 2)),
            Err(EngineError::BatchSizeMismatch {
                expected: 2,
                actual: 3
            })
        ));
        let wrong = generate_synthetic_queries(2, 5, 2);
        assert!(matches!(
            run_fqsd(&wrong, &ds, &EngineConfig::fqsd(2, 2)),
            Err(EngineError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            run_fqsd(&q[..2], &ds, &EngineConfig::fdsq(2, 2)),
            Err(EngineError::WrongMode(Mode::FdSq))
        ));
    }

    #[test]
    fn batches_cover_every_query() {
        let v = generate_synthetic(300, 6, 1);
        let ds = partition_dataset(&v, 50, 6).unwrap();
        let q = generate_synthetic_queries(7, 6, 9);
        let out = run_fqsd_batches(&q, &ds, &EngineConfig::fqsd(5, 3)).unwrap();
        assert_eq!(out.len(), 7);
        for (r, query) in out.iter().zip(&q) {
            let oracle = brute_force_knn(&v, query, 5).unwrap();
            assert_eq!(r.query_id, query.id);
            assert_eq!(r.ids(), oracle.ids());
        }
    }

    struct Failing<'a>(&'a PartitionedDataset, usize);

    impl PartitionSource for Failing<'_> {
        type Error = String;
        fn num_partitions(&self) -> usize {
            self.0.len()
        }
        fn partition_capacity(&self) -> usize {
            self.0.partition_capacity()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn fill(&mut self, index: usize, slot: &mut Partition) -> Result<(), String> {
            if index == self.1 {
                return Err("read error".into());
            }
            slot.copy_from(&self.0.partitions()[index]);
            Ok(())
        }
    }

    #[test]
    fn producer_failure_is_reported() {
        let v = generate_synthetic(50, 4, 1);
        let ds = partition_dataset(&v, 10, 4).unwrap();
        let q = generate_synthetic_queries(2, 4, 2);
        let err = run_fqsd_from(&q, Failing(&ds, 2), &EngineConfig::fqsd(3, 2), None).unwrap_err();
        assert!(matches!(err, EngineError::ProducerFailure { index: 2, .. }));
    }

    #[test]
    fn padding_never_surfaces() {
        let v = generate_synthetic(5, 3, 4);
        let ds = partition_dataset(&v, 4, 3).unwrap();
        // Query at the origin: padding rows (all zero) would be the nearest.
        let q = vec![Query::new(0, vec![0.0; 3])];
        let out = run_fqsd(&q, &ds, &EngineConfig::fqsd(8, 1)).unwrap();
        assert_eq!(out[0].neighbors.len(), 5);
        assert!(out[0].ids().iter().all(|id| *id != VectorId::SENTINEL));
    }
}

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::ops::Range;
use std::sync::{mpsc, Arc};
use std::thread;

use super::{thread_count, EngineConfig, EngineError, Mode};
use crate::data_io::PartitionedDataset;
use crate::distance::{staged_distance_unchecked, DistanceStagingParams};
use crate::topk::TopKQueue;
use crate::types::{KnnResult, NeighborPair, Query};

/// Contiguous, balanced split of `partitions` among `workers`. Workers beyond
/// the partition count get an empty range.
fn assign(partitions: usize, workers: usize) -> Vec<Range<usize>> {
    (0..workers)
        .map(|j| (j * partitions / workers)..((j + 1) * partitions / workers))
        .collect()
}

/// One partition worker: a private queue of `k` over its own partitions.
fn scan_worker(
    dataset: &PartitionedDataset,
    range: Range<usize>,
    query: &[f32],
    k: usize,
    staging: DistanceStagingParams,
) -> Vec<NeighborPair> {
    let mut queue = TopKQueue::new(k).expect("k validated");
    {
        let mut lanes = queue.lanes_mut().expect("fresh queue");
        let lane = &mut lanes[0];
        for part in &dataset.partitions()[range] {
            for (id, x) in part.slots() {
                if id.is_sentinel() {
                    continue;
                }
                lane.push_unchecked(NeighborPair::new(
                    staged_distance_unchecked(query, x, staging),
                    id,
                ));
            }
        }
    }
    queue.flush().expect("single lane, flushed once")
}

#[derive(Debug, Clone, Copy)]
struct MergeHead {
    pair: NeighborPair,
    list: usize,
    pos: usize,
}

impl MergeHead {
    fn key(&self) -> (f32, u32) {
        (self.pair.distance, self.pair.id.0)
    }
}

impl PartialEq for MergeHead {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MergeHead {}

impl PartialOrd for MergeHead {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MergeHead {
    fn cmp(&self, other: &Self) -> Ordering {
        let (da, ia) = self.key();
        let (db, ib) = other.key();
        da.total_cmp(&db).then(ia.cmp(&ib))
    }
}

/// N-way merge of ascending candidate lists, truncated at `k`. Ties in
/// distance go to the smaller id, so the result does not depend on which
/// worker finished first.
pub(crate) fn merge_candidates(lists: &[Vec<NeighborPair>], k: usize) -> Vec<NeighborPair> {
    let mut heap: BinaryHeap<Reverse<MergeHead>> = lists
        .iter()
        .enumerate()
        .filter_map(|(list, l)| {
            l.first()
                .map(|&pair| Reverse(MergeHead { pair, list, pos: 0 }))
        })
        .collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let Some(Reverse(head)) = heap.pop() else {
            break;
        };
        out.push(head.pair);
        if let Some(&pair) = lists[head.list].get(head.pos + 1) {
            heap.push(Reverse(MergeHead {
                pair,
                list: head.list,
                pos: head.pos + 1,
            }));
        }
    }
    out
}

/// A running FD-SQ engine: the dataset is resident and a fixed pool of
/// partition workers waits for queries.
pub struct FdsqSession<'a> {
    d: usize,
    k: usize,
    workers: usize,
    query_txs: Vec<mpsc::Sender<Arc<Vec<f32>>>>,
    result_rx: mpsc::Receiver<(usize, Vec<NeighborPair>)>,
    _dataset: &'a PartitionedDataset,
}

impl FdsqSession<'_> {
    /// Runs one query across all workers and returns the combined top-k.
    /// Returns only after every worker is done with this query.
    pub fn search(&mut self, query: &Query) -> Result<KnnResult, EngineError> {
        if query.dim() != self.d {
            return Err(EngineError::DimensionMismatch {
                query: query.id,
                expected: self.d,
                actual: query.dim(),
            });
        }
        let values = Arc::new(query.values.clone());
        for tx in &self.query_txs {
            tx.send(Arc::clone(&values))
                .expect("partition worker alive");
        }
        let mut lists = vec![Vec::new(); self.workers];
        for _ in 0..self.workers {
            let (worker, list) = self.result_rx.recv().expect("partition worker alive");
            lists[worker] = list;
        }
        Ok(KnnResult {
            query_id: query.id,
            neighbors: merge_candidates(&lists, self.k),
        })
    }
}

/// Starts the partition workers, hands a session to `body`, and shuts the
/// workers down when `body` returns.
pub fn with_fdsq_session<R>(
    dataset: &PartitionedDataset,
    config: &EngineConfig,
    body: impl FnOnce(&mut FdsqSession<'_>) -> R,
) -> Result<R, EngineError> {
    config.expect_mode(Mode::FdSq)?;
    if dataset.is_empty() {
        return Err(EngineError::NoPartitions);
    }
    let (k, workers, staging) = (config.k, config.workers, config.staging);
    let ranges = assign(dataset.len(), workers);
    let threads = thread_count(workers);

    thread::scope(|scope| {
        let (result_tx, result_rx) = mpsc::channel();
        let mut query_txs = Vec::with_capacity(threads);
        for t in 0..threads {
            let owned: Vec<(usize, Range<usize>)> = ranges
                .iter()
                .cloned()
                .enumerate()
                .filter(|(j, _)| j % threads == t)
                .collect();
            let (query_tx, query_rx) = mpsc::channel::<Arc<Vec<f32>>>();
            let result_tx = result_tx.clone();
            query_txs.push(query_tx);
            scope.spawn(move || {
                while let Ok(query) = query_rx.recv() {
                    for (worker, range) in &owned {
                        let list = scan_worker(dataset, range.clone(), &query, k, staging);
                        if result_tx.send((*worker, list)).is_err() {
                            return;
                        }
                    }
                }
            });
        }
        drop(result_tx);

        let mut session = FdsqSession {
            d: dataset.dim(),
            k,
            workers,
            query_txs,
            result_rx,
            _dataset: dataset,
        };
        let out = body(&mut session);
        // Dropping the session closes the query channels and stops the pool.
        drop(session);
        Ok(out)
    })
}

/// Answers a stream of queries in arrival order, handing each result to
/// `sink` before the next query starts.
pub fn run_fdsq<I>(
    dataset: &PartitionedDataset,
    queries: I,
    config: &EngineConfig,
    mut sink: impl FnMut(KnnResult),
) -> Result<(), EngineError>
where
    I: IntoIterator<Item = Query>,
{
    with_fdsq_session(dataset, config, |session| {
        for query in queries {
            sink(session.search(&query)?);
        }
        Ok(())
    })?
}

pub fn run_fdsq_collect(
    dataset: &PartitionedDataset,
    queries: &[Query],
    config: &EngineConfig,
) -> Result<Vec<KnnResult>, EngineError> {
    let mut out = Vec::with_capacity(queries.len());
    run_fdsq(dataset, queries.iter().cloned(), config, |r| out.push(r))?;
    Ok(out)
}

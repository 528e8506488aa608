//! Two-slot producer/consumer handoff.
//!
//! Partition `i` is always staged in slot `i % 2`. The producer thread fills
//! partition `i + 1` while the calling thread scans partition `i`: the scanner
//! hands out the slot for `i + 1` as scan `i` begins and waits for the
//! producer to report that the fill has started. A slot is handed to the
//! scanner only once its fill has completed, and handed back to the producer
//! only once its scan has completed.

use std::panic;
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError<E> {
    #[error("stream has no partitions")]
    NoPartitions,
    #[error("producer failed on partition {index}")]
    ProducerFailure { index: usize, source: E },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fill,
    Scan,
}

/// One timed fill or scan, relative to the trace's creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamEvent {
    pub phase: Phase,
    pub partition: usize,
    pub slot: usize,
    pub start: Duration,
    pub end: Duration,
}

impl StreamEvent {
    pub fn overlaps(&self, other: &StreamEvent) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Records fill and scan intervals of a stream.
#[derive(Debug)]
pub struct StreamTrace {
    origin: Instant,
    events: Mutex<Vec<StreamEvent>>,
}

impl Default for StreamTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamTrace {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
            events: Mutex::new(Vec::new()),
        }
    }

    fn record(&self, phase: Phase, partition: usize, slot: usize, start: Instant, end: Instant) {
        let event = StreamEvent {
            phase,
            partition,
            slot,
            start: start - self.origin,
            end: end - self.origin,
        };
        self.events.lock().unwrap().push(event);
    }

    pub fn events(&self) -> Vec<StreamEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn event(&self, phase: Phase, partition: usize) -> Option<StreamEvent> {
        self.events()
            .into_iter()
            .find(|e| e.phase == phase && e.partition == partition)
    }

    /// Partitions `i` for which fill of `i + 1` did not overlap scan of `i`.
    pub fn missing_overlaps(&self) -> Vec<usize> {
        let scans = self.count(Phase::Scan);
        (0..scans.saturating_sub(1))
            .filter(
                |&i| match (self.event(Phase::Fill, i + 1), self.event(Phase::Scan, i)) {
                    (Some(fill), Some(scan)) => !fill.overlaps(&scan),
                    _ => true,
                },
            )
            .collect()
    }

    /// Pairs `(fill partition, scan partition)` that used the same slot at
    /// the same time.
    pub fn slot_conflicts(&self) -> Vec<(usize, usize)> {
        let events = self.events();
        let mut conflicts = Vec::new();
        for fill in events.iter().filter(|e| e.phase == Phase::Fill) {
            for scan in events.iter().filter(|e| e.phase == Phase::Scan) {
                if fill.slot == scan.slot && fill.overlaps(scan) {
                    conflicts.push((fill.partition, scan.partition));
                }
            }
        }
        conflicts
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.events
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.phase == phase)
            .count()
    }
}

/// Streams `partitions` partitions through two staging buffers.
///
/// `fill` runs on a producer thread, `scan` on the calling thread. Every
/// partition is scanned exactly once, in order. If `fill` fails on partition
/// `i`, partitions before `i` are still fully scanned and the error is
/// reported as [`StreamError::ProducerFailure`].
pub fn double_buffer_stream<B, E, F, S>(
    partitions: usize,
    slots: [B; 2],
    mut fill: F,
    mut scan: S,
    trace: Option<&StreamTrace>,
) -> Result<(), StreamError<E>>
where
    B: Send,
    E: Send,
    F: FnMut(usize, &mut B) -> Result<(), E> + Send,
    S: FnMut(usize, &B),
{
    if partitions == 0 {
        return Err(StreamError::NoPartitions);
    }

    thread::scope(|scope| {
        let (free_tx, free_rx) = mpsc::channel::<(usize, B)>();
        let (started_tx, started_rx) = mpsc::channel::<usize>();
        let (full_tx, full_rx) = mpsc::sync_channel::<(usize, usize, B)>(1);
        let [first, second] = slots;
        free_tx.send((0, first)).expect("receiver alive");

        let producer = scope.spawn(move || -> Result<(), StreamError<E>> {
            for index in 0..partitions {
                // Buffers come back in scan order, so this is slot index % 2.
                let Ok((slot, mut buffer)) = free_rx.recv() else {
                    return Ok(());
                };
                debug_assert_eq!(slot, index % 2);
                let start = Instant::now();
                let _ = started_tx.send(index);
                fill(index, &mut buffer)
                    .map_err(|source| StreamError::ProducerFailure { index, source })?;
                if let Some(t) = trace {
                    t.record(Phase::Fill, index, slot, start, Instant::now());
                }
                if full_tx.send((index, slot, buffer)).is_err() {
                    return Ok(());
                }
            }
            Ok(())
        });

        // Slot 1 starts out with the scanner, so every fill of i + 1, the
        // first one included, is released by the start of scan i.
        let mut scanned: Option<(usize, B)> = Some((1, second));
        while let Ok((index, slot, buffer)) = full_rx.recv() {
            let start = Instant::now();
            if let Some(done) = scanned.take() {
                if index + 1 < partitions && free_tx.send(done).is_ok() {
                    // Skips the start of partition 0; an error means the
                    // producer has stopped.
                    while let Ok(started) = started_rx.recv() {
                        if started == index + 1 {
                            break;
                        }
                    }
                }
            }
            scan(index, &buffer);
            if let Some(t) = trace {
                t.record(Phase::Scan, index, slot, start, Instant::now());
            }
            scanned = Some((slot, buffer));
        }
        drop(scanned);

        match producer.join() {
            Ok(result) => result,
            Err(payload) => panic::resume_unwind(payload),
        }
    })
}

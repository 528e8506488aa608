//! Systolic top-k selection.
//!
//! The queue is a chain of `k` queue nodes between a reader and a writer.
//! Each node keeps the smallest pair it has seen so far:
//!
//! * **A**: if the incoming distance is strictly smaller than the stored one,
//!   the node stores the incoming pair and forwards the old one;
//! * **B**: otherwise the incoming pair is forwarded unchanged.
//!
//! Anything that falls off the last node reaches the writer unmarked and is
//! dropped. On end-of-stream the stored minima drain toward the writer in two
//! phases, and the writer reverses what it receives, which yields the
//! neighbors in ascending order.
//!
//! The chain can be logically split into `M` lanes of `k / M` nodes, each an
//! independent queue. Lanes can be handed to separate threads with
//! [`TopKQueue::lanes_mut`].

use std::mem;

use thiserror::Error;

use crate::types::NeighborPair;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("cutoff k must be at least 1")]
    InvalidK,
    #[error("queue already flushed; build a new one")]
    PushAfterFlush,
    #[error("queue already flushed")]
    DoubleFlush,
    #[error("k={k} is not divisible into {lanes} lanes")]
    IndivisibleK { k: usize, lanes: usize },
    #[error("a queue can only be partitioned before the first push")]
    PartitionAfterPush,
    #[error("lane {lane} out of range for {lanes} lanes")]
    LaneOutOfRange { lane: usize, lanes: usize },
    #[error("queue is split into {0} lanes; address a lane explicitly")]
    LaneRequired(usize),
    #[error("pushed pairs must have a finite distance and no solution mark")]
    InvalidPair,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueNodeState {
    pub stored: NeighborPair,
    pub terminated: bool,
}

impl QueueNodeState {
    const EMPTY: QueueNodeState = QueueNodeState {
        stored: NeighborPair::EMPTY,
        terminated: false,
    };
}

/// How many times each node ran each termination phase during a flush.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlushTrace {
    /// Solution pairs received (phase 1), per node.
    pub phase_one: Vec<usize>,
    /// End-of-stream markers received (phase 2), per node.
    pub phase_two: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TopKQueue {
    k: usize,
    lane_len: usize,
    nodes: Vec<QueueNodeState>,
    pushed: bool,
    flushed: bool,
}

impl TopKQueue {
    pub fn new(k: usize) -> Result<Self, QueueError> {
        if k == 0 {
            return Err(QueueError::InvalidK);
        }
        Ok(Self {
            k,
            lane_len: k,
            nodes: vec![QueueNodeState::EMPTY; k],
            pushed: false,
            flushed: false,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lanes(&self) -> usize {
        self.k / self.lane_len
    }

    /// Cutoff of each lane, `k / M`.
    pub fn lane_len(&self) -> usize {
        self.lane_len
    }

    pub fn nodes(&self) -> &[QueueNodeState] {
        &self.nodes
    }

    pub fn is_flushed(&self) -> bool {
        self.flushed
    }

    /// Splits the chain into `lanes` independent queues of `k / lanes` nodes.
    pub fn partition(&mut self, lanes: usize) -> Result<(), QueueError> {
        if self.flushed {
            return Err(QueueError::PushAfterFlush);
        }
        if self.pushed {
            return Err(QueueError::PartitionAfterPush);
        }
        if lanes == 0 || !self.k.is_multiple_of(lanes) {
            return Err(QueueError::IndivisibleK { k: self.k, lanes });
        }
        self.lane_len = self.k / lanes;
        Ok(())
    }

    /// Pushes into an unpartitioned queue.
    pub fn push(&mut self, pair: NeighborPair) -> Result<(), QueueError> {
        if self.lanes() != 1 {
            return Err(QueueError::LaneRequired(self.lanes()));
        }
        self.push_lane(0, pair)
    }

    pub fn push_lane(&mut self, lane: usize, pair: NeighborPair) -> Result<(), QueueError> {
        if self.flushed {
            return Err(QueueError::PushAfterFlush);
        }
        let lanes = self.lanes();
        if lane >= lanes {
            return Err(QueueError::LaneOutOfRange { lane, lanes });
        }
        check_pair(&pair)?;
        self.pushed = true;
        let start = lane * self.lane_len;
        cascade(&mut self.nodes[start..start + self.lane_len], pair);
        Ok(())
    }

    /// Mutable handles to every lane, for driving lanes from separate workers.
    pub fn lanes_mut(&mut self) -> Result<Vec<QueueLane<'_>>, QueueError> {
        if self.flushed {
            return Err(QueueError::PushAfterFlush);
        }
        self.pushed = true;
        Ok(self
            .nodes
            .chunks_mut(self.lane_len)
            .map(|nodes| QueueLane { nodes })
            .collect())
    }

    /// Drains an unpartitioned queue; neighbors come back nearest first.
    pub fn flush(&mut self) -> Result<Vec<NeighborPair>, QueueError> {
        if self.lanes() != 1 {
            return Err(QueueError::LaneRequired(self.lanes()));
        }
        Ok(self.flush_lanes()?.pop().unwrap_or_default())
    }

    /// Drains every lane. Element `j` holds lane `j`'s neighbors, nearest first.
    ///
    /// Produces the same neighbors and final node states as
    /// [`TopKQueue::flush_lanes_traced`] without stepping every token through
    /// the chain.
    pub fn flush_lanes(&mut self) -> Result<Vec<Vec<NeighborPair>>, QueueError> {
        if self.flushed {
            return Err(QueueError::DoubleFlush);
        }
        self.flushed = true;
        Ok(self
            .nodes
            .chunks_mut(self.lane_len)
            .map(drain_direct)
            .collect())
    }

    /// Like [`TopKQueue::flush_lanes`], running the two-phase protocol token
    /// by token and reporting per-node phase counts.
    pub fn flush_lanes_traced(
        &mut self,
    ) -> Result<(Vec<Vec<NeighborPair>>, FlushTrace), QueueError> {
        if self.flushed {
            return Err(QueueError::DoubleFlush);
        }
        self.flushed = true;
        let mut trace = FlushTrace {
            phase_one: vec![0; self.k],
            phase_two: vec![0; self.k],
        };
        let lane_len = self.lane_len;
        let out = self
            .nodes
            .chunks_mut(lane_len)
            .zip(trace.phase_one.chunks_mut(lane_len))
            .zip(trace.phase_two.chunks_mut(lane_len))
            .map(|((nodes, p1), p2)| drain(nodes, p1, p2))
            .collect();
        Ok((out, trace))
    }
}

/// One lane of a (possibly partitioned) queue, borrowed for pushing.
#[derive(Debug)]
pub struct QueueLane<'a> {
    nodes: &'a mut [QueueNodeState],
}

impl QueueLane<'_> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn push(&mut self, pair: NeighborPair) -> Result<(), QueueError> {
        check_pair(&pair)?;
        cascade(self.nodes, pair);
        Ok(())
    }

    /// Pushes a freshly computed `(distance, id)` pair. The caller guarantees
    /// a finite distance.
    #[inline]
    pub(crate) fn push_unchecked(&mut self, pair: NeighborPair) {
        debug_assert!(check_pair(&pair).is_ok());
        cascade(self.nodes, pair);
    }
}

fn check_pair(pair: &NeighborPair) -> Result<(), QueueError> {
    if pair.solution || !pair.distance.is_finite() {
        return Err(QueueError::InvalidPair);
    }
    Ok(())
}

/// Runs one pair through the nodes with operations A and B.
#[inline]
fn cascade(nodes: &mut [QueueNodeState], mut carry: NeighborPair) {
    // Stored distances are non-decreasing along the chain, so a pair that is
    // not below the tail takes B at every node and the writer drops it.
    match nodes.last() {
        Some(tail) if carry.distance < tail.stored.distance => {}
        _ => return,
    }
    for node in nodes.iter_mut() {
        if carry.distance < node.stored.distance {
            mem::swap(&mut node.stored, &mut carry);
        }
    }
}

enum Token {
    Pair(NeighborPair),
    EndOfStream,
}

/// Two-phase termination of one lane, followed by the writer.
fn drain(
    nodes: &mut [QueueNodeState],
    phase_one: &mut [usize],
    phase_two: &mut [usize],
) -> Vec<NeighborPair> {
    // The reader only emits the end-of-stream marker.
    let mut stream = vec![Token::EndOfStream];
    let mut next = Vec::with_capacity(nodes.len() + 1);
    for (i, node) in nodes.iter_mut().enumerate() {
        next.clear();
        for token in stream.drain(..) {
            let mut current = node.stored;
            current.solution = true;
            next.push(Token::Pair(current));
            match token {
                Token::Pair(received) => {
                    debug_assert!(received.solution);
                    node.stored = received;
                    phase_one[i] += 1;
                }
                Token::EndOfStream => {
                    next.push(Token::EndOfStream);
                    node.stored.solution = true;
                    node.terminated = true;
                    phase_two[i] += 1;
                }
            }
        }
        mem::swap(&mut stream, &mut next);
    }

    let mut kept: Vec<NeighborPair> = stream
        .into_iter()
        .filter_map(|t| match t {
            Token::Pair(p) if p.solution && !p.is_sentinel() => Some(p),
            _ => None,
        })
        .collect();
    kept.reverse();
    for p in &mut kept {
        p.solution = false;
    }
    kept
}

/// Outcome of [`drain`] computed directly: the writer receives the stored
/// pairs front to back, and every node is left holding the head's pair.
fn drain_direct(nodes: &mut [QueueNodeState]) -> Vec<NeighborPair> {
    let out = nodes
        .iter()
        .map(|n| n.stored)
        .filter(|p| !p.is_sentinel())
        .collect();
    let mut head = nodes[0].stored;
    head.solution = true;
    for node in nodes.iter_mut() {
        node.stored = head;
        node.terminated = true;
    }
    out
}

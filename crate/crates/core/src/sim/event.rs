//! Time-ordered event queue; equal times pop in insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dispatch::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    ServiceComplete { request: usize, generation: u64 },
    RequestTimeout { request: usize },
    /// `process` marks events driven by the random restart process, as opposed to scheduled outages.
    RestartDown { tier: Tier, process: bool },
    RestartUp { tier: Tier, process: bool },
    UtilPoll,
    FastTick,
    SlowTick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug)]
struct Entry {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time.is_finite(), "event time must be finite");
        self.heap.push(Entry {
            time,
            seq: self.next_seq,
            kind,
        });
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|e| SimEvent {
            time: e.time,
            kind: e.kind,
        })
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

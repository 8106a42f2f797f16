//! Totally ordered event queue: events fire by time, ties by the order in
//! which they were scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::cache::ExecutionTrail;
use crate::context::DeviceId;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Own trails pushed to neighbours.
    Push(Vec<ExecutionTrail>),
    Request,
    Reply(Vec<ExecutionTrail>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: DeviceId,
    pub to: DeviceId,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    DeviceJoin(DeviceId),
    DeviceLeave(DeviceId),
    /// `epoch` identifies the presence period that started the beacon chain.
    Beacon { device: DeviceId, epoch: u64 },
    MessageDelivery(Message),
    AppStart(usize),
    MethodComplete { run: usize, token: u64 },
    CacheTick { device: DeviceId, epoch: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub at: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at.total_cmp(&other.at).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `kind` at `at`, which must not lie in the past.
    pub fn schedule(&mut self, at: f64, kind: EventKind) {
        debug_assert!(at >= self.now, "event scheduled in the past: {at} < {}", self.now);
        let at = at.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { at, seq, kind }));
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.at)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.at;
        Some(e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_then_sequence_order() {
        let mut q = EventQueue::new();
        q.schedule(5.0, EventKind::AppStart(0));
        q.schedule(1.0, EventKind::AppStart(1));
        q.schedule(5.0, EventKind::AppStart(2));
        q.schedule(1.0, EventKind::AppStart(3));
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::AppStart(i) => i,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, [1, 3, 0, 2]);
        assert_eq!(q.now(), 5.0);
    }
}

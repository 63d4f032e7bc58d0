use std::collections::{BTreeMap, VecDeque};

use crate::{Envelope, Tick};

/// Storage and ordering of in-flight envelopes.
///
/// The bus owns subscription, scheduling and dedup logic; a transport only
/// has to keep each queue in delivery order. [`InProcessTransport`] is the
/// default; a broker-backed implementation would sit behind the same trait.
pub trait Transport: Send {
    /// Appends an envelope that becomes deliverable at `deliver_at`.
    /// Callers guarantee `deliver_at` is non-decreasing per queue.
    fn push(&mut self, envelope: Envelope, deliver_at: Tick);
    /// Removes and returns the head of `queue` if it is due at `now`.
    fn pop_due(&mut self, queue: &str, now: Tick) -> Option<Envelope>;
    /// Earliest delivery time at the head of `queue`.
    fn head_due(&self, queue: &str) -> Option<Tick>;
    /// Drops envelopes enqueued at or before `cutoff`, returning how many.
    fn expire(&mut self, queue: &str, cutoff: Tick) -> usize;
    fn depth(&self, queue: &str) -> usize;
    fn queues(&self) -> Vec<String>;
}

#[derive(Default)]
pub struct InProcessTransport {
    queues: BTreeMap<String, VecDeque<(Tick, Envelope)>>,
}

impl Transport for InProcessTransport {
    fn push(&mut self, envelope: Envelope, deliver_at: Tick) {
        self.queues.entry(envelope.queue.clone()).or_default().push_back((deliver_at, envelope));
    }

    fn pop_due(&mut self, queue: &str, now: Tick) -> Option<Envelope> {
        let q = self.queues.get_mut(queue)?;
        match q.front() {
            Some((at, _)) if *at <= now => q.pop_front().map(|(_, e)| e),
            _ => None,
        }
    }

    fn head_due(&self, queue: &str) -> Option<Tick> {
        self.queues.get(queue)?.front().map(|(at, _)| *at)
    }

    fn expire(&mut self, queue: &str, cutoff: Tick) -> usize {
        let Some(q) = self.queues.get_mut(queue) else { return 0 };
        let before = q.len();
        q.retain(|(_, e)| e.enqueued_at > cutoff);
        before - q.len()
    }

    fn depth(&self, queue: &str) -> usize {
        self.queues.get(queue).map_or(0, VecDeque::len)
    }

    fn queues(&self) -> Vec<String> {
        self.queues.keys().cloned().collect()
    }
}

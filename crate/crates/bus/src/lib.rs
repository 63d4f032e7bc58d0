//! In-process message bus on a logical clock.
//!
//! Agents listen on `agents/<agentId>` queues. Delivery is at-least-once: a
//! seeded scheduler may redeliver any message, and subscriptions drop
//! repeats by message id unless told otherwise. `request` builds
//! request/reply on top of plain queues with a private reply queue per call.

mod chain;
mod transport;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

use intentforge_core::canonical::to_canonical_bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use chain::{run_chain, ChainError, ChainOutput, EnrichmentChain, ProvenanceEntry, StageFailure};
pub use transport::{InProcessTransport, Transport};

pub type Tick = u64;

pub const AGENT_QUEUE_PREFIX: &str = "agents/";
const REPLY_QUEUE_PREFIX: &str = "reply/";

pub fn agent_queue(agent_id: &str) -> String {
    format!("{AGENT_QUEUE_PREFIX}{agent_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MessageKind {
    Task,
    Reply,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub message_id: String,
    pub correlation_id: String,
    pub queue: String,
    pub reply_to: Option<String>,
    pub kind: MessageKind,
    /// Canonical JSON bytes.
    pub payload: Vec<u8>,
    pub attempt: u32,
    pub enqueued_at: Tick,
    pub publisher: String,
}

impl Envelope {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.payload).unwrap_or(Value::Null)
    }
}

/// What a handler does with a delivered message.
#[derive(Debug, Clone, PartialEq)]
pub enum HandlerOutcome {
    Reply(Value),
    /// Handled, nothing to send back.
    Ack,
    Fail(String),
    Veto(String),
}

pub type Handler = Box<dyn FnMut(&Envelope) -> HandlerOutcome + Send>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BusConfig {
    pub seed: u64,
    pub retention_ttl_ticks: Tick,
    /// Extra random delay per delivery, in `0..=jitter`.
    pub delivery_jitter_ticks: Tick,
    pub redelivery_probability: f64,
    pub max_redeliveries: u32,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            seed: 0,
            retention_ttl_ticks: 10_000,
            delivery_jitter_ticks: 0,
            redelivery_probability: 0.0,
            max_redeliveries: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueueStats {
    pub depth: usize,
    pub subscribers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BusStats {
    pub now: Tick,
    pub published: u64,
    pub delivered: u64,
    pub redelivered: u64,
    pub duplicates_discarded: u64,
    pub expired: u64,
    pub replies: u64,
    pub late_replies: u64,
    pub timeouts: u64,
    pub queues: BTreeMap<String, QueueStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("bus is shut down")]
    ShutDown,
    #[error("queue name must not be empty")]
    EmptyQueue,
    #[error("timeout must be positive")]
    InvalidTimeout,
    #[error("request {correlation_id} timed out at tick {at}")]
    Timeout { correlation_id: String, at: Tick },
    #[error("request {correlation_id} failed: {message}")]
    Handler { correlation_id: String, message: String },
    #[error("request {correlation_id} vetoed: {reason}")]
    Veto { correlation_id: String, reason: String },
    #[error("agent `{agent_id}` already has a queue")]
    AlreadyRegistered { agent_id: String },
}

/// A request's reply with its correlation id and arrival tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub correlation_id: String,
    pub payload: Value,
    pub at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentEndpoint {
    pub agent_id: String,
    pub queue: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubscribeOptions {
    /// Drop redelivered messages already seen by this subscription.
    pub dedup: bool,
}

impl Default for SubscribeOptions {
    fn default() -> Self {
        SubscribeOptions { dedup: true }
    }
}

struct Subscription {
    id: u64,
    queue: String,
    dedup: bool,
    seen: HashSet<String>,
    handler: Option<Handler>,
}

enum ReplySlot {
    Waiting,
    Arrived(Tick, Value),
}

struct Inner {
    config: BusConfig,
    now: Tick,
    seq: u64,
    rng: ChaCha8Rng,
    transport: Box<dyn Transport>,
    subs: Vec<Subscription>,
    agents: BTreeSet<String>,
    last_due: HashMap<String, Tick>,
    awaiting: HashMap<String, ReplySlot>,
    closed_replies: HashSet<String>,
    stats: BusStats,
    shut_down: bool,
}

impl Inner {
    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn is_reply_queue(&self, q: &str) -> bool {
        self.awaiting.contains_key(q) || self.closed_replies.contains(q)
    }

    fn has_consumer(&self, q: &str) -> bool {
        self.is_reply_queue(q) || self.subs.iter().any(|s| s.queue == q)
    }

    fn enqueue(&mut self, mut env: Envelope) {
        env.enqueued_at = self.now;
        let jitter = match self.config.delivery_jitter_ticks {
            0 => 0,
            j => self.rng.gen_range(0..=j),
        };
        let floor = self.last_due.get(&env.queue).copied().unwrap_or(0);
        let at = (self.now + 1 + jitter).max(floor);
        self.last_due.insert(env.queue.clone(), at);
        self.transport.push(env, at);
    }

    fn expire(&mut self) {
        let Some(cutoff) = self.now.checked_sub(self.config.retention_ttl_ticks) else { return };
        for q in self.transport.queues() {
            if !self.has_consumer(&q) {
                self.stats.expired += self.transport.expire(&q, cutoff) as u64;
            }
        }
    }

    fn next_due(&self) -> Option<Tick> {
        self.transport.queues().iter().filter(|q| self.has_consumer(q)).filter_map(|q| self.transport.head_due(q)).min()
    }
}

pub struct Bus {
    inner: Mutex<Inner>,
}

impl Bus {
    pub fn new(config: BusConfig) -> Self {
        Self::with_transport(config, Box::new(InProcessTransport::default()))
    }

    pub fn with_transport(config: BusConfig, transport: Box<dyn Transport>) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Bus {
            inner: Mutex::new(Inner {
                config,
                now: 0,
                seq: 0,
                rng,
                transport,
                subs: Vec::new(),
                agents: BTreeSet::new(),
                last_due: HashMap::new(),
                awaiting: HashMap::new(),
                closed_replies: HashSet::new(),
                stats: BusStats::default(),
                shut_down: false,
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("bus lock poisoned")
    }

    pub fn now(&self) -> Tick {
        self.lock().now
    }

    pub fn subscribe(&self, queue: &str, options: SubscribeOptions, handler: Handler) -> Result<u64, BusError> {
        if queue.is_empty() {
            return Err(BusError::EmptyQueue);
        }
        let mut inner = self.lock();
        let id = inner.next_seq();
        inner.subs.push(Subscription {
            id,
            queue: queue.to_string(),
            dedup: options.dedup,
            seen: HashSet::new(),
            handler: Some(handler),
        });
        Ok(id)
    }

    pub fn unsubscribe(&self, subscription: u64) {
        self.lock().subs.retain(|s| s.id != subscription);
    }

    /// Subscribes `handler` to the agent's dedicated queue.
    pub fn register_agent(&self, agent_id: &str, handler: Handler) -> Result<AgentEndpoint, BusError> {
        let queue = agent_queue(agent_id);
        {
            let mut inner = self.lock();
            if !inner.agents.insert(agent_id.to_string()) {
                return Err(BusError::AlreadyRegistered { agent_id: agent_id.to_string() });
            }
        }
        self.subscribe(&queue, SubscribeOptions::default(), handler)?;
        Ok(AgentEndpoint { agent_id: agent_id.to_string(), queue })
    }

    pub fn publish(&self, queue: &str, payload: &Value, correlation_id: Option<&str>) -> Result<String, BusError> {
        self.publish_from("client", queue, payload, correlation_id)
    }

    pub fn publish_from(
        &self,
        publisher: &str,
        queue: &str,
        payload: &Value,
        correlation_id: Option<&str>,
    ) -> Result<String, BusError> {
        self.send(publisher, queue, payload, correlation_id, None, MessageKind::Event)
    }

    fn send(
        &self,
        publisher: &str,
        queue: &str,
        payload: &Value,
        correlation_id: Option<&str>,
        reply_to: Option<String>,
        kind: MessageKind,
    ) -> Result<String, BusError> {
        if queue.is_empty() {
            return Err(BusError::EmptyQueue);
        }
        let mut inner = self.lock();
        if inner.shut_down {
            return Err(BusError::ShutDown);
        }
        let message_id = format!("m-{:06}", inner.next_seq());
        inner.enqueue(Envelope {
            message_id: message_id.clone(),
            correlation_id: correlation_id.map_or_else(|| message_id.clone(), str::to_string),
            queue: queue.to_string(),
            reply_to,
            kind,
            payload: to_canonical_bytes(payload),
            attempt: 1,
            enqueued_at: 0,
            publisher: publisher.to_string(),
        });
        inner.stats.published += 1;
        Ok(message_id)
    }

    /// Delivers every message due at the earliest pending delivery time.
    /// Returns `false` when nothing is deliverable.
    pub fn step(&self) -> bool {
        let batch = {
            let mut inner = self.lock();
            inner.expire();
            let Some(due) = inner.next_due() else { return false };
            inner.now = inner.now.max(due);
            let now = inner.now;
            let mut batch = Vec::new();
            for q in inner.transport.queues() {
                if !inner.has_consumer(&q) {
                    continue;
                }
                while let Some(env) = inner.transport.pop_due(&q, now) {
                    batch.push(env);
                }
            }
            batch
        };
        for env in batch {
            self.deliver(env);
        }
        true
    }

    fn deliver(&self, env: Envelope) {
        let targets: Vec<u64> = {
            let mut inner = self.lock();
            if inner.is_reply_queue(&env.queue) {
                let now = inner.now;
                match inner.awaiting.get_mut(&env.queue) {
                    Some(slot @ ReplySlot::Waiting) => {
                        *slot = ReplySlot::Arrived(now, env.json());
                        inner.stats.replies += 1;
                    }
                    Some(ReplySlot::Arrived(..)) => inner.stats.duplicates_discarded += 1,
                    None => inner.stats.late_replies += 1,
                }
                return;
            }
            let p = inner.config.redelivery_probability.clamp(0.0, 1.0);
            let redeliver = env.attempt <= inner.config.max_redeliveries && p > 0.0 && inner.rng.gen_bool(p);
            if redeliver {
                let mut copy = env.clone();
                copy.attempt += 1;
                inner.stats.redelivered += 1;
                inner.enqueue(copy);
            }
            inner.subs.iter().filter(|s| s.queue == env.queue).map(|s| s.id).collect()
        };
        for id in targets {
            let handler = {
                let mut inner = self.lock();
                let Some(sub) = inner.subs.iter_mut().find(|s| s.id == id) else { continue };
                if sub.handler.is_none() {
                    // Re-entrant delivery while this handler runs: try again later.
                    inner.enqueue(env.clone());
                    continue;
                }
                if sub.dedup && !sub.seen.insert(env.message_id.clone()) {
                    inner.stats.duplicates_discarded += 1;
                    continue;
                }
                let h = sub.handler.take().expect("checked above");
                inner.stats.delivered += 1;
                h
            };
            let mut handler = handler;
            let outcome = handler(&env);
            let mut inner = self.lock();
            if let Some(sub) = inner.subs.iter_mut().find(|s| s.id == id) {
                sub.handler = Some(handler);
            }
            let Some(reply_to) = env.reply_to.clone() else { continue };
            let body = match outcome {
                HandlerOutcome::Reply(v) => serde_json::json!({ "ok": v }),
                HandlerOutcome::Ack => continue,
                HandlerOutcome::Fail(m) => serde_json::json!({ "error": { "kind": "failed", "message": m } }),
                HandlerOutcome::Veto(m) => serde_json::json!({ "error": { "kind": "veto", "message": m } }),
            };
            let message_id = format!("m-{:06}", inner.next_seq());
            inner.enqueue(Envelope {
                message_id,
                correlation_id: env.correlation_id.clone(),
                queue: reply_to,
                reply_to: None,
                kind: MessageKind::Reply,
                payload: to_canonical_bytes(&body),
                attempt: 1,
                enqueued_at: 0,
                publisher: env.queue.clone(),
            });
        }
    }

    /// Runs the scheduler until nothing is deliverable. Returns the number
    /// of scheduler steps taken.
    pub fn run_until_idle(&self) -> usize {
        let mut steps = 0;
        while self.step() {
            steps += 1;
        }
        steps
    }

    /// Delivers everything due up to `tick`, then moves the clock there.
    pub fn advance_to(&self, tick: Tick) {
        loop {
            let due = {
                let inner = self.lock();
                inner.next_due()
            };
            match due {
                Some(t) if t <= tick => {
                    self.step();
                }
                _ => break,
            }
        }
        let mut inner = self.lock();
        inner.now = inner.now.max(tick);
        inner.expire();
    }

    pub fn request(&self, queue: &str, payload: &Value, timeout: Tick) -> Result<Value, BusError> {
        self.request_traced(queue, payload, timeout).map(|r| r.payload)
    }

    /// Sends a task with a fresh reply queue and drives the scheduler until
    /// the first matching reply arrives or the deadline passes.
    pub fn request_traced(&self, queue: &str, payload: &Value, timeout: Tick) -> Result<Reply, BusError> {
        if timeout == 0 {
            return Err(BusError::InvalidTimeout);
        }
        let (correlation_id, reply_queue, deadline) = {
            let mut inner = self.lock();
            if inner.shut_down {
                return Err(BusError::ShutDown);
            }
            let correlation_id = format!("c-{:06}", inner.next_seq());
            let reply_queue = format!("{REPLY_QUEUE_PREFIX}{correlation_id}");
            inner.awaiting.insert(reply_queue.clone(), ReplySlot::Waiting);
            (correlation_id, reply_queue, inner.now + timeout)
        };
        self.send("requester", queue, payload, Some(&correlation_id), Some(reply_queue.clone()), MessageKind::Task)?;
        loop {
            {
                let mut inner = self.lock();
                if let Some(ReplySlot::Arrived(at, body)) = inner.awaiting.get(&reply_queue) {
                    let (at, body) = (*at, body.clone());
                    inner.awaiting.remove(&reply_queue);
                    inner.closed_replies.insert(reply_queue);
                    return decode_reply(correlation_id, at, body);
                }
                let due = inner.next_due();
                if due.is_none_or(|t| t > deadline) {
                    inner.now = inner.now.max(deadline);
                    inner.awaiting.remove(&reply_queue);
                    inner.closed_replies.insert(reply_queue);
                    inner.stats.timeouts += 1;
                    return Err(BusError::Timeout { correlation_id, at: deadline });
                }
            }
            self.step();
        }
    }

    /// Drains deliverable messages, then refuses further publishes.
    pub fn shutdown(&self) {
        self.run_until_idle();
        self.lock().shut_down = true;
    }

    pub fn stats(&self) -> BusStats {
        let inner = self.lock();
        let mut stats = inner.stats.clone();
        stats.now = inner.now;
        let mut names: BTreeSet<String> = inner.transport.queues().into_iter().collect();
        names.extend(inner.subs.iter().map(|s| s.queue.clone()));
        for q in names {
            if q.starts_with(REPLY_QUEUE_PREFIX) {
                continue;
            }
            stats.queues.insert(
                q.clone(),
                QueueStats {
                    depth: inner.transport.depth(&q),
                    subscribers: inner.subs.iter().filter(|s| s.queue == q).count(),
                },
            );
        }
        stats
    }
}

fn decode_reply(correlation_id: String, at: Tick, body: Value) -> Result<Reply, BusError> {
    if let Some(err) = body.get("error") {
        let message = err["message"].as_str().unwrap_or_default().to_string();
        return Err(match err["kind"].as_str() {
            Some("veto") => BusError::Veto { correlation_id, reason: message },
            _ => BusError::Handler { correlation_id, message },
        });
    }
    Ok(Reply { correlation_id, payload: body.get("ok").cloned().unwrap_or(Value::Null), at })
}

//! Append-only push event log with sequence cursors.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    AgentTurn,
    TaskUpdate,
    PlanReady,
    ItemTransition,
    TestTransition,
    RemediationRequest,
    RunReport,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::AgentTurn => "agentTurn",
            EventKind::TaskUpdate => "taskUpdate",
            EventKind::PlanReady => "planReady",
            EventKind::ItemTransition => "itemTransition",
            EventKind::TestTransition => "testTransition",
            EventKind::RemediationRequest => "remediationRequest",
            EventKind::RunReport => "runReport",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PushEvent {
    /// Starts at 1; cursor 0 replays everything.
    pub sequence: u64,
    pub kind: EventKind,
    pub body: Value,
}

pub struct EventLog {
    events: Mutex<Vec<PushEvent>>,
    head: watch::Sender<u64>,
}

impl Default for EventLog {
    fn default() -> Self {
        EventLog { events: Mutex::new(Vec::new()), head: watch::channel(0).0 }
    }
}

impl EventLog {
    pub fn push(&self, kind: EventKind, body: Value) -> u64 {
        let mut events = self.events.lock().expect("event log lock poisoned");
        let sequence = events.len() as u64 + 1;
        events.push(PushEvent { sequence, kind, body });
        self.head.send_replace(sequence);
        sequence
    }

    /// Events with a sequence greater than `cursor`.
    pub fn since(&self, cursor: u64) -> Vec<PushEvent> {
        let events = self.events.lock().expect("event log lock poisoned");
        let from = (cursor as usize).min(events.len());
        events[from..].to_vec()
    }

    pub fn head(&self) -> u64 {
        *self.head.borrow()
    }

    /// Fires whenever the head moves.
    pub fn watch(&self) -> watch::Receiver<u64> {
        self.head.subscribe()
    }
}

//! Session task list and its state machine.

use std::fmt;

use intentforge_core::Scalar;
use serde::{Deserialize, Serialize};

/// The fixed task library, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TaskKind {
    Discovery,
    BundleProposal,
    Reconciliation,
    CostQuote,
    OrderSerialization,
    Confirmation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Discovery,
        TaskKind::BundleProposal,
        TaskKind::Reconciliation,
        TaskKind::CostQuote,
        TaskKind::OrderSerialization,
        TaskKind::Confirmation,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Discovery => "discovery",
            TaskKind::BundleProposal => "bundle-proposal",
            TaskKind::Reconciliation => "reconciliation",
            TaskKind::CostQuote => "cost-quote",
            TaskKind::OrderSerialization => "order-serialization",
            TaskKind::Confirmation => "confirmation",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            TaskKind::Discovery => "Look up the orderable offerings in the catalog",
            TaskKind::BundleProposal => "Propose one offering per required family and quote it",
            TaskKind::Reconciliation => "Fit the proposal to the stated budget and user count",
            TaskKind::CostQuote => "Quote the total cost for the requested period",
            TaskKind::OrderSerialization => "Prepare the order payload with its validity period",
            TaskKind::Confirmation => "Obtain explicit confirmation and submit the order",
        }
    }

    pub fn acceptance_criteria(self) -> Vec<String> {
        let c: &[&str] = match self {
            TaskKind::Discovery => &["a catalog listing was retrieved through a catalog tool"],
            TaskKind::BundleProposal => &[
                "every proposed offering comes from a catalog tool result",
                "a quote for the proposal was computed and shown with its total cost",
            ],
            TaskKind::Reconciliation => &[
                "a budget has been stated",
                "the latest quote postdates the latest budget or user-count change",
                "the quoted total is within budget and capacity covers the user count",
            ],
            TaskKind::CostQuote => &[
                "start date and duration are known",
                "a quote for that duration postdates them and was shown with its total cost",
            ],
            TaskKind::OrderSerialization => {
                &["an order payload was prepared after the latest quote", "the payload was shown with its total cost"]
            }
            TaskKind::Confirmation => &[
                "the operator affirmed the order after it was prepared",
                "the order was submitted through the ordering tool",
            ],
        };
        c.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    InProgress,
    Completed,
    Blocked,
    NeedsInfo,
}

impl TaskState {
    pub fn can_move_to(self, to: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, to),
            (Pending, InProgress)
                | (InProgress, Completed)
                | (InProgress, Blocked)
                | (InProgress, NeedsInfo)
                | (Blocked, InProgress)
                | (NeedsInfo, InProgress)
        )
    }

    /// Waiting for the operator.
    pub fn is_parked(self) -> bool {
        matches!(self, TaskState::Blocked | TaskState::NeedsInfo)
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskState::Pending => "pending",
            TaskState::InProgress => "in_progress",
            TaskState::Completed => "completed",
            TaskState::Blocked => "blocked",
            TaskState::NeedsInfo => "needs_info",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EvidenceKind {
    CatalogEntity,
    CharacteristicValue,
    TranscriptTurn,
    CostComputation,
}

/// `ref` is a catalog id, `turn-<n>`, or `<offeringId>/<characteristic>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePointer {
    pub kind: EvidenceKind,
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Scalar>,
}

impl EvidencePointer {
    pub fn new(kind: EvidenceKind, reference: impl Into<String>) -> Self {
        EvidencePointer { kind, reference: reference.into(), value: None }
    }

    pub fn with_value(mut self, value: Scalar) -> Self {
        self.value = Some(value);
        self
    }
}

pub fn turn_ref(index: usize) -> String {
    format!("turn-{index}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Task {
    pub task_id: String,
    pub kind: TaskKind,
    pub description: String,
    pub acceptance_criteria: Vec<String>,
    pub state: TaskState,
    pub evidence: Vec<EvidencePointer>,
    /// Transcript length when the task last entered `in_progress`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<usize>,
    /// Transcript length when the task was last parked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parked_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskTransition {
    pub task_id: String,
    pub from: TaskState,
    pub to: TaskState,
    /// Transcript length at the time of the move.
    pub at: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("illegal transition of {task_id}: {from} -> {to}")]
    Illegal { task_id: String, from: TaskState, to: TaskState },
    #[error("cannot start {task_id}: {active} is already in progress")]
    AlreadyActive { task_id: String, active: String },
    #[error("cannot complete {task_id} without evidence")]
    NoEvidence { task_id: String },
    #[error("no task of kind {0}")]
    Missing(TaskKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskList {
    pub tasks: Vec<Task>,
    pub log: Vec<TaskTransition>,
}

impl TaskList {
    /// Adds any template task not yet present. Existing tasks keep their state.
    pub fn decompose(&mut self) {
        for (i, kind) in TaskKind::ALL.iter().enumerate() {
            if self.tasks.iter().any(|t| t.kind == *kind) {
                continue;
            }
            self.tasks.push(Task {
                task_id: format!("t{}-{}", i + 1, kind.slug()),
                kind: *kind,
                description: kind.description().to_string(),
                acceptance_criteria: kind.acceptance_criteria(),
                state: TaskState::Pending,
                evidence: Vec::new(),
                started_at: None,
                parked_at: None,
            });
        }
        self.tasks.sort_by_key(|t| t.kind);
    }

    pub fn get(&self, kind: TaskKind) -> Option<&Task> {
        self.tasks.iter().find(|t| t.kind == kind)
    }

    pub fn in_progress(&self) -> Option<&Task> {
        self.tasks.iter().find(|t| t.state == TaskState::InProgress)
    }

    pub fn all_completed(&self) -> bool {
        !self.tasks.is_empty() && self.tasks.iter().all(|t| t.state == TaskState::Completed)
    }

    /// First task not yet completed, if it may start now. Tasks run in
    /// template order; a parked task may restart only after a user turn at
    /// or beyond the point it was parked.
    pub fn next_startable(&self, last_user_turn: Option<usize>) -> Option<TaskKind> {
        let t = self.tasks.iter().find(|t| t.state != TaskState::Completed)?;
        match t.state {
            TaskState::Pending => Some(t.kind),
            s if s.is_parked() => match (t.parked_at, last_user_turn) {
                (Some(p), Some(u)) if u >= p => Some(t.kind),
                _ => None,
            },
            _ => None,
        }
    }

    /// Moves a task, enforcing the transition table, the single
    /// in-progress rule and evidence on completion.
    pub fn transition(&mut self, kind: TaskKind, to: TaskState, at: usize) -> Result<TaskTransition, TaskError> {
        let active = self.in_progress().map(|t| (t.kind, t.task_id.clone()));
        let task = self.tasks.iter_mut().find(|t| t.kind == kind).ok_or(TaskError::Missing(kind))?;
        let from = task.state;
        if !from.can_move_to(to) {
            return Err(TaskError::Illegal { task_id: task.task_id.clone(), from, to });
        }
        if to == TaskState::InProgress {
            if let Some((k, id)) = active {
                if k != kind {
                    return Err(TaskError::AlreadyActive { task_id: task.task_id.clone(), active: id });
                }
            }
            task.started_at = Some(at);
        }
        if to == TaskState::Completed && task.evidence.is_empty() {
            return Err(TaskError::NoEvidence { task_id: task.task_id.clone() });
        }
        if to.is_parked() {
            task.parked_at = Some(at);
        }
        task.state = to;
        let tr = TaskTransition { task_id: task.task_id.clone(), from, to, at };
        self.log.push(tr.clone());
        Ok(tr)
    }

    pub(crate) fn set_evidence(&mut self, kind: TaskKind, evidence: Vec<EvidencePointer>) {
        if let Some(t) = self.tasks.iter_mut().find(|t| t.kind == kind) {
            t.evidence = evidence;
        }
    }
}

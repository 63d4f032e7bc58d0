use intentforge_core::traversal::{ConfirmedIntent, IntentConstraints, OfferingSelection, Period};
use intentforge_core::Money;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::goal::StructuredGoal;
use super::guardrails::GuardrailRule;
use super::tasks::{TaskKind, TaskList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    User,
    Agent,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolRecord {
    pub name: String,
    pub arguments: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ToolRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// A reasoner effect that a guardrail refused. The turn carrying it shows
/// the corrective text instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VetoRecord {
    pub rule: GuardrailRule,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
    /// Reply text, or the tool call as JSON.
    pub original: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub content: String,
    /// Logical clock: the turn index.
    pub timestamp: u64,
    pub token_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veto: Option<VetoRecord>,
    /// Set on engine questions that park a task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_for: Option<TaskKind>,
    /// Set on user turns created by the explicit confirm action.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub explicit_confirmation: bool,
    /// Set on agent turns written by the engine rather than the reasoner.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub system: bool,
}

impl Turn {
    /// A reasoner reply that passed every guardrail.
    pub fn is_presented_reply(&self) -> bool {
        self.role == Role::Agent && !self.system && self.veto.is_none() && self.tool.is_none()
    }

    /// The text the reasoner actually produced, vetoed or not.
    pub fn raw_reply(&self) -> Option<&str> {
        if self.role != Role::Agent || self.system && self.veto.is_none() {
            return None;
        }
        match &self.veto {
            Some(v) if v.rule == GuardrailRule::G2 => None,
            Some(v) => Some(&v.original),
            None => Some(&self.content),
        }
    }
}

/// Whitespace word count times 4/3, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 4).div_ceil(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SessionStatus {
    Active,
    AwaitingUser,
    Finalized,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DraftIntent {
    pub offering_selections: Vec<OfferingSelection>,
    pub constraints: IntentConstraints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Period>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quoted_cost: Option<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quote_days: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quote_turn: Option<usize>,
    pub confirmed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation_turn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_turn: Option<usize>,
}

impl DraftIntent {
    pub fn offering_ids(&self) -> Vec<String> {
        self.offering_selections.iter().map(|s| s.offering_id.clone()).collect()
    }

    /// Drops any confirmation; called whenever the quoted order changes.
    pub(crate) fn unconfirm(&mut self) {
        self.confirmed = false;
        self.confirmation_turn = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FinalizedIntent {
    pub intent: ConfirmedIntent,
    pub record_id: String,
    pub order_payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmittedOrder {
    pub order_id: String,
    pub turn: usize,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub session_id: String,
    pub transcript: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<StructuredGoal>,
    pub task_list: TaskList,
    pub draft: DraftIntent,
    pub status: SessionStatus,
    #[serde(default)]
    pub submitted_orders: Vec<SubmittedOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized: Option<FinalizedIntent>,
    /// Reasoner failures, in order.
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

/// A guardrail hit as reported to callers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuardrailHit {
    pub turn: usize,
    pub rule: GuardrailRule,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        Session {
            session_id: session_id.into(),
            transcript: Vec::new(),
            goal: None,
            task_list: TaskList::default(),
            draft: DraftIntent::default(),
            status: SessionStatus::Active,
            submitted_orders: Vec::new(),
            finalized: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn intent_id(&self) -> String {
        format!("intent-{}", self.session_id)
    }

    pub fn last_user_turn(&self) -> Option<&Turn> {
        self.transcript.iter().rev().find(|t| t.role == Role::User)
    }

    pub fn tool_turns(&self) -> impl Iterator<Item = (&Turn, &ToolRecord)> {
        self.transcript.iter().filter_map(|t| t.tool.as_ref().map(|r| (t, r)))
    }

    /// Successful calls of `name` at or after transcript position `from`.
    pub fn tool_results_since(&self, from: usize, name: &str) -> Vec<(usize, &ToolRecord)> {
        self.tool_turns()
            .filter(|(t, r)| t.index >= from && r.name == name && r.ok())
            .map(|(t, r)| (t.index, r))
            .collect()
    }

    pub fn used_tools(&self) -> bool {
        self.tool_turns().any(|(_, r)| r.ok())
    }

    pub fn used_catalog_tools(&self) -> bool {
        self.tool_turns().any(|(_, r)| r.ok() && r.name.starts_with("catalog."))
    }

    pub fn presented_after(&self, index: usize) -> bool {
        self.transcript.iter().any(|t| t.index > index && t.is_presented_reply())
    }

    /// Total of the newest quote or payload not yet shown to the operator.
    pub fn pending_total(&self) -> Option<String> {
        let (turn, rec) = self
            .tool_turns()
            .filter(|(_, r)| r.ok() && (r.name == "pricing.quote" || r.name == "order.prepare"))
            .last()?;
        if self.presented_after(turn.index) {
            return None;
        }
        rec.result.as_ref()?.get("display")?.as_str().map(str::to_string)
    }

    pub fn guardrail_log(&self) -> Vec<GuardrailHit> {
        self.transcript
            .iter()
            .filter_map(|t| {
                t.veto.as_ref().map(|v| GuardrailHit {
                    turn: t.index,
                    rule: v.rule,
                    detail: v.detail.clone(),
                    names: v.names.clone(),
                })
            })
            .collect()
    }

    pub fn total_tokens(&self) -> u64 {
        self.transcript.iter().map(|t| t.token_count).sum()
    }

    pub(crate) fn push_turn(&mut self, role: Role, content: String, token_count: Option<u64>) -> usize {
        let index = self.transcript.len();
        let token_count = token_count.unwrap_or_else(|| estimate_tokens(&content));
        self.transcript.push(Turn {
            index,
            role,
            content,
            timestamp: index as u64,
            token_count,
            tool: None,
            veto: None,
            question_for: None,
            explicit_confirmation: false,
            system: false,
        });
        index
    }
}

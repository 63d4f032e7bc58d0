use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::session::Session;
use super::tasks::Task;
use super::tools::ToolSpec;

/// The only things a reasoner may ask the engine to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "camelCase")]
pub enum Effect {
    Reply { text: String },
    ToolCall { name: String, arguments: Value },
    Finalize,
}

impl Effect {
    pub fn reply(text: impl Into<String>) -> Self {
        Effect::Reply { text: text.into() }
    }

    pub fn tool(name: &str, arguments: Value) -> Self {
        Effect::ToolCall { name: name.to_string(), arguments }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerOutput {
    pub effect: Effect,
    /// Tokens reported by the backend; the engine estimates when absent.
    pub usage_tokens: Option<u64>,
}

impl From<Effect> for ReasonerOutput {
    fn from(effect: Effect) -> Self {
        ReasonerOutput { effect, usage_tokens: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Capabilities {
    pub tool_calling: bool,
    pub max_turn_tokens: u64,
}

/// Report grouping tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendFamily {
    Reasoning,
    NonReasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReasonerError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// What a reasoner sees when asked for its next effect.
pub struct ReasonerView<'a> {
    pub session: &'a Session,
    /// The task in progress; `None` once every task is completed.
    pub task: Option<&'a Task>,
    pub tools: &'a [ToolSpec],
}

pub trait Reasoner: Send {
    fn id(&self) -> &str;

    fn family(&self) -> BackendFamily;

    fn capabilities(&self) -> Capabilities;

    fn next(&mut self, view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError>;
}

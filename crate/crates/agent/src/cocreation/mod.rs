//! Multi-turn refinement of an operator request into a confirmed intent.
//!
//! A [`CoCreationAgent`] owns one [`Session`]. Each operator message is
//! folded into the structured goal, the fixed task list is advanced one
//! step at a time, and every reasoner effect passes the guardrails before
//! it reaches the transcript, the catalog tools or the ordering tools.

mod engine;
pub mod goal;
pub mod guardrails;
pub mod http;
mod reasoner;
mod reference;
pub mod scripted;
mod session;
pub mod tasks;
pub mod tools;

pub use engine::{
    is_affirmative, AgentConfig, CoCreationAgent, ConfirmPolicy, SessionEffect, SessionError, StepOutcome,
};
pub use goal::{Constraint, ConstraintEntry, StructuredGoal};
pub use guardrails::{check_guardrails, GuardrailRule, Verdict, Vocabulary};
pub use reasoner::{BackendFamily, Capabilities, Effect, Reasoner, ReasonerError, ReasonerOutput, ReasonerView};
pub use reference::ReferenceReasoner;
pub use session::{
    estimate_tokens, DraftIntent, FinalizedIntent, GuardrailHit, Role, Session, SessionStatus, SubmittedOrder,
    ToolRecord, Turn, VetoRecord,
};
pub use tasks::{EvidenceKind, EvidencePointer, Task, TaskKind, TaskList, TaskState, TaskTransition};
pub use tools::{ToolRegistry, ToolSpec};

/// Backend ids accepted by [`backend`], besides `http`.
pub const BUILTIN_BACKENDS: [&str; 4] =
    ["reference", "scripted-hallucinator", "scripted-mixed", "scripted-wrong-duration"];

/// Resolves a backend id. `http` reads its endpoint from the environment.
pub fn backend(id: &str) -> Result<Box<dyn Reasoner>, ReasonerError> {
    match id {
        "reference" => Ok(Box::new(ReferenceReasoner::new())),
        "scripted-hallucinator" => Ok(Box::new(scripted::Hallucinator)),
        "scripted-mixed" => Ok(Box::new(scripted::MixedBackend)),
        "scripted-wrong-duration" => Ok(Box::new(scripted::wrong_duration())),
        "http" => Ok(Box::new(http::HttpReasoner::from_env()?)),
        other => Err(ReasonerError::Config(format!(
            "unknown backend `{other}`; expected one of {}, http",
            BUILTIN_BACKENDS.join(", ")
        ))),
    }
}

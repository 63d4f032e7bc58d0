use std::sync::{Arc, LazyLock};

use intentforge_core::canonical::to_canonical_string;
use intentforge_core::catalog::CatalogGraph;
use intentforge_core::inventory::{record_inventory, InventoryKind, InventoryStore, NewRecord};
use intentforge_core::traversal::{Confirmation, ConfirmedIntent};
use intentforge_core::{Money, Scalar};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::goal::{self, StructuredGoal};
use super::guardrails::{check_guardrails, corrective_text, GuardrailRule, Verdict, Vocabulary};
use super::reasoner::{Effect, Reasoner, ReasonerError, ReasonerOutput, ReasonerView};
use super::session::{estimate_tokens, FinalizedIntent, Role, Session, SessionStatus, ToolRecord, VetoRecord};
use super::tasks::{turn_ref, EvidenceKind, EvidencePointer, TaskError, TaskKind, TaskList, TaskState, TaskTransition};
use super::tools::{ToolContext, ToolRegistry, LIST_OFFERINGS};

/// How an affirmation is recognized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ConfirmPolicy {
    /// An affirmative user message or the explicit confirm action.
    TextAffirmation,
    /// Only the explicit confirm action.
    ExplicitOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    /// Reasoner effects allowed per task attempt before it is blocked.
    pub max_effects_per_attempt: u32,
    /// Steps per operator message before the session yields.
    pub max_steps_per_message: u32,
    pub confirm_policy: ConfirmPolicy,
    /// Consecutive reasoner failures before the session is aborted.
    pub max_consecutive_failures: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_effects_per_attempt: 6,
            max_steps_per_message: 64,
            confirm_policy: ConfirmPolicy::TextAffirmation,
            max_consecutive_failures: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "camelCase")]
pub enum SessionEffect {
    Reply {
        turn: usize,
    },
    ToolCall {
        turn: usize,
        name: String,
        ok: bool,
    },
    #[serde(rename_all = "camelCase")]
    Question {
        turn: usize,
        task: Option<TaskKind>,
    },
    Vetoed {
        turn: usize,
        rule: GuardrailRule,
    },
    #[serde(rename_all = "camelCase")]
    TaskStarted {
        task_id: String,
    },
    #[serde(rename_all = "camelCase")]
    Finalized {
        intent_id: String,
        record_id: String,
    },
    Diagnostic {
        turn: usize,
    },
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepOutcome {
    pub effect: SessionEffect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TaskTransition>,
}

impl StepOutcome {
    fn new(effect: SessionEffect) -> Self {
        StepOutcome { effect, transition: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("session is {0:?}")]
    NotActive(SessionStatus),
    #[error("no goal has been stated yet")]
    NoGoal,
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("cannot finalize: task {task_id} is {state}")]
    Unfinished { task_id: String, state: TaskState },
    #[error("cannot finalize: the draft has not been confirmed")]
    Unconfirmed,
    #[error("cannot finalize: no order has been submitted")]
    NotSubmitted,
    #[error("intent is invalid: {0}")]
    Invalid(String),
    #[error("inventory: {0}")]
    Inventory(String),
}

static AFFIRM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(yes|yep|yeah|sure|ok|okay|confirm(ed)?|approved?|go ahead|proceed)\b|\b(i confirm|confirmed|go ahead|place the order|proceed with the order|please proceed)\b",
    )
    .unwrap()
});
static NEGATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(no|not|don't|do not|cancel|wait|stop|hold)\b").unwrap());

/// Plain-text affirmation without negation.
pub fn is_affirmative(text: &str) -> bool {
    AFFIRM.is_match(text) && !NEGATE.is_match(text)
}

/// One co-creation session bound to a catalog, an inventory and a reasoner.
pub struct CoCreationAgent {
    session: Session,
    graph: Arc<CatalogGraph>,
    inventory: Arc<InventoryStore>,
    reasoner: Box<dyn Reasoner>,
    tools: ToolRegistry,
    vocab: Vocabulary,
    config: AgentConfig,
    attempt_effects: u32,
    consecutive_failures: u32,
    confirmed_by: Option<String>,
}

impl CoCreationAgent {
    pub fn new(
        session_id: impl Into<String>,
        graph: Arc<CatalogGraph>,
        inventory: Arc<InventoryStore>,
        reasoner: Box<dyn Reasoner>,
    ) -> Self {
        let vocab = Vocabulary::from_catalog(&graph);
        CoCreationAgent {
            session: Session::new(session_id),
            graph,
            inventory,
            reasoner,
            tools: ToolRegistry::standard(),
            vocab,
            config: AgentConfig::default(),
            attempt_effects: 0,
            consecutive_failures: 0,
            confirmed_by: None,
        }
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_tools(mut self, tools: ToolRegistry) -> Self {
        self.tools = tools;
        self
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    pub fn reasoner(&self) -> &dyn Reasoner {
        self.reasoner.as_ref()
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Folds `message`, stated at transcript `turn`, into the session goal.
    pub fn interpret_intent(&mut self, message: &str, turn: usize) -> Option<&StructuredGoal> {
        self.session.goal = goal::interpret(self.session.goal.take(), message, turn);
        self.session.goal.as_ref()
    }

    /// Adds the template tasks; idempotent by task kind.
    pub fn decompose_goal(&mut self) -> Result<&TaskList, SessionError> {
        if self.session.goal.is_none() {
            return Err(SessionError::NoGoal);
        }
        self.session.task_list.decompose();
        Ok(&self.session.task_list)
    }

    /// Records an operator message and runs the session until it needs the
    /// operator again.
    pub fn user_message(&mut self, text: &str) -> Result<Vec<StepOutcome>, SessionError> {
        self.ensure_open()?;
        let idx = self.session.push_turn(Role::User, text.to_string(), None);
        self.session.status = SessionStatus::Active;
        if self.interpret_intent(text, idx).is_some() {
            self.decompose_goal()?;
        }
        self.drive()
    }

    /// The explicit confirmation action. Counts as an affirmation under
    /// either policy.
    pub fn confirm(&mut self, confirmed_by: &str) -> Result<Vec<StepOutcome>, SessionError> {
        self.ensure_open()?;
        let idx = self.session.push_turn(Role::User, format!("{confirmed_by} confirmed the order."), None);
        self.session.transcript[idx].explicit_confirmation = true;
        self.confirmed_by = Some(confirmed_by.to_string());
        self.session.status = SessionStatus::Active;
        self.drive()
    }

    pub fn abort(&mut self) {
        if self.session.status != SessionStatus::Finalized {
            self.session.status = SessionStatus::Aborted;
        }
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        match self.session.status {
            SessionStatus::Finalized | SessionStatus::Aborted => Err(SessionError::NotActive(self.session.status)),
            _ => Ok(()),
        }
    }

    fn drive(&mut self) -> Result<Vec<StepOutcome>, SessionError> {
        let mut out = Vec::new();
        let mut steps = 0;
        while self.session.status == SessionStatus::Active {
            if steps == self.config.max_steps_per_message {
                out.push(self.yield_to_user()?);
                break;
            }
            out.push(self.step()?);
            steps += 1;
        }
        Ok(out)
    }

    fn yield_to_user(&mut self) -> Result<StepOutcome, SessionError> {
        match self.session.task_list.in_progress().map(|t| t.kind) {
            Some(kind) => self.park(kind, TaskState::Blocked, generic_question(kind)),
            None => {
                self.session.status = SessionStatus::AwaitingUser;
                Ok(StepOutcome::new(SessionEffect::Idle))
            }
        }
    }

    /// Advances the session by one effect.
    pub fn step(&mut self) -> Result<StepOutcome, SessionError> {
        if self.session.status != SessionStatus::Active {
            return Err(SessionError::NotActive(self.session.status));
        }
        if self.session.goal.is_none() {
            let turn = self.system_turn("Please describe what you would like to order.".into());
            self.session.status = SessionStatus::AwaitingUser;
            return Ok(StepOutcome::new(SessionEffect::Question { turn, task: None }));
        }
        let Some(kind) = self.session.task_list.in_progress().map(|t| t.kind) else {
            return self.step_without_task();
        };

        if let Some(question) = self.precheck(kind) {
            return self.park(kind, TaskState::NeedsInfo, question);
        }
        if self.attempt_effects >= self.config.max_effects_per_attempt {
            return self.park(kind, TaskState::Blocked, generic_question(kind));
        }
        let output = match self.consult() {
            Ok(o) => o,
            Err(outcome) => return outcome,
        };
        self.attempt_effects += 1;
        let (effect, presented) = self.apply(output)?;
        if self.session.status != SessionStatus::Active {
            return Ok(StepOutcome::new(effect));
        }
        if let Some(evidence) = self.criteria_met(kind) {
            self.session.task_list.set_evidence(kind, evidence);
            let tr = self.session.task_list.transition(kind, TaskState::Completed, self.session.transcript.len())?;
            return Ok(StepOutcome { effect, transition: Some(tr) });
        }
        if presented {
            // A reply hands the floor back to the operator.
            let (state, question) = self.gap_after_reply(kind);
            let parked = self.park(kind, state, question)?;
            return Ok(StepOutcome { effect, transition: parked.transition });
        }
        Ok(StepOutcome::new(effect))
    }

    fn step_without_task(&mut self) -> Result<StepOutcome, SessionError> {
        let last_user = self.session.last_user_turn().map(|t| t.index);
        if let Some(kind) = self.session.task_list.next_startable(last_user) {
            let tr = self.session.task_list.transition(kind, TaskState::InProgress, self.session.transcript.len())?;
            self.attempt_effects = 0;
            return Ok(StepOutcome {
                effect: SessionEffect::TaskStarted { task_id: tr.task_id.clone() },
                transition: Some(tr),
            });
        }
        if !self.session.task_list.all_completed() {
            self.session.status = SessionStatus::AwaitingUser;
            return Ok(StepOutcome::new(SessionEffect::Idle));
        }
        if self.attempt_effects >= self.config.max_effects_per_attempt {
            self.session.status = SessionStatus::AwaitingUser;
            return Ok(StepOutcome::new(SessionEffect::Idle));
        }
        let output = match self.consult() {
            Ok(o) => o,
            Err(outcome) => return outcome,
        };
        self.attempt_effects += 1;
        let (effect, presented) = self.apply(output)?;
        if presented && self.session.status == SessionStatus::Active {
            self.session.status = SessionStatus::AwaitingUser;
        }
        Ok(StepOutcome::new(effect))
    }

    /// Asks the reasoner for an effect. On failure the current task is
    /// blocked and a diagnostic written.
    fn consult(&mut self) -> Result<ReasonerOutput, Result<StepOutcome, SessionError>> {
        let view = ReasonerView {
            session: &self.session,
            task: self.session.task_list.in_progress(),
            tools: self.tools.specs(),
        };
        let budget = self.reasoner.capabilities().max_turn_tokens;
        let result = self.reasoner.next(&view).and_then(|o| match &o.effect {
            Effect::Reply { text } if estimate_tokens(text) > budget => {
                Err(ReasonerError::BadResponse(format!("reply exceeds the {budget}-token turn budget")))
            }
            _ => Ok(o),
        });
        match result {
            Ok(o) => {
                self.consecutive_failures = 0;
                Ok(o)
            }
            Err(e) => {
                self.consecutive_failures += 1;
                let message = format!("The reasoning backend failed: {e}");
                self.session.diagnostics.push(e.to_string());
                let turn = self.system_turn(message);
                let kind = self.session.task_list.in_progress().map(|t| t.kind);
                let mut transition = None;
                if let Some(kind) = kind {
                    match self.session.task_list.transition(kind, TaskState::Blocked, self.session.transcript.len()) {
                        Ok(tr) => transition = Some(tr),
                        Err(err) => return Err(Err(err.into())),
                    }
                }
                self.session.status = if self.consecutive_failures >= self.config.max_consecutive_failures {
                    SessionStatus::Aborted
                } else {
                    SessionStatus::AwaitingUser
                };
                Err(Ok(StepOutcome { effect: SessionEffect::Diagnostic { turn }, transition }))
            }
        }
    }

    /// Applies one reasoner effect behind the guardrails. The flag is set
    /// when a reply reached the operator.
    fn apply(&mut self, output: ReasonerOutput) -> Result<(SessionEffect, bool), SessionError> {
        let ReasonerOutput { effect, usage_tokens } = output;
        if let Verdict::Vetoed { rule, detail, names } = check_guardrails(&self.session, &self.vocab, &effect) {
            let original = match &effect {
                Effect::Reply { text } => text.clone(),
                other => to_canonical_string(other),
            };
            let tokens = usage_tokens.unwrap_or_else(|| estimate_tokens(&original));
            let turn = self.session.push_turn(Role::Agent, corrective_text(rule, &detail), Some(tokens));
            let t = &mut self.session.transcript[turn];
            t.system = true;
            t.veto = Some(VetoRecord { rule, detail, names, original });
            return Ok((SessionEffect::Vetoed { turn, rule }, false));
        }
        match effect {
            Effect::Reply { text } => {
                let turn = self.session.push_turn(Role::Agent, text, usage_tokens);
                Ok((SessionEffect::Reply { turn }, true))
            }
            Effect::ToolCall { name, arguments } => {
                let turn = self.session.transcript.len();
                let result = if !self.reasoner.capabilities().tool_calling {
                    Err("this backend has no tool access".to_string())
                } else {
                    let s = &mut self.session;
                    let intent_id = format!("intent-{}", s.session_id);
                    let mut ctx = ToolContext {
                        graph: &self.graph,
                        goal: s.goal.as_ref(),
                        draft: &mut s.draft,
                        submitted: &mut s.submitted_orders,
                        intent_id: &intent_id,
                        turn,
                    };
                    self.tools.call(&name, &arguments, &mut ctx).map_err(|e| e.to_string())
                };
                let ok = result.is_ok();
                let record = match result {
                    Ok(v) => ToolRecord { name: name.clone(), arguments, result: Some(v), error: None },
                    Err(e) => ToolRecord { name: name.clone(), arguments, result: None, error: Some(e) },
                };
                let content = to_canonical_string(&record);
                let idx = self.session.push_turn(Role::Tool, content, usage_tokens);
                self.session.transcript[idx].tool = Some(record);
                Ok((SessionEffect::ToolCall { turn: idx, name, ok }, false))
            }
            Effect::Finalize => {
                if self.session.task_list.all_completed() {
                    let f = match self.finalize_intent() {
                        Ok(f) => f,
                        Err(SessionError::Task(e)) => return Err(e.into()),
                        Err(e) => {
                            let turn = self.system_turn(format!("Finalization refused: {e}."));
                            return Ok((SessionEffect::Diagnostic { turn }, false));
                        }
                    };
                    let order = self.session.submitted_orders.last().map(|o| o.order_id.clone()).unwrap_or_default();
                    self.system_turn(format!(
                        "Order {order} was submitted and intent {} is recorded.",
                        f.intent.intent_id
                    ));
                    return Ok((
                        SessionEffect::Finalized { intent_id: f.intent.intent_id.clone(), record_id: f.record_id },
                        false,
                    ));
                }
                let pending = self
                    .session
                    .task_list
                    .tasks
                    .iter()
                    .find(|t| t.state != TaskState::Completed)
                    .map(|t| t.task_id.clone())
                    .unwrap_or_default();
                let turn = self.system_turn(format!("Finalization refused: {pending} is not completed."));
                Ok((SessionEffect::Diagnostic { turn }, false))
            }
        }
    }

    fn system_turn(&mut self, text: String) -> usize {
        let turn = self.session.push_turn(Role::Agent, text, None);
        self.session.transcript[turn].system = true;
        turn
    }

    fn park(&mut self, kind: TaskKind, state: TaskState, question: String) -> Result<StepOutcome, SessionError> {
        let tr = self.session.task_list.transition(kind, state, self.session.transcript.len())?;
        let turn = self.system_turn(question);
        self.session.transcript[turn].question_for = Some(kind);
        self.session.status = SessionStatus::AwaitingUser;
        Ok(StepOutcome { effect: SessionEffect::Question { turn, task: Some(kind) }, transition: Some(tr) })
    }

    /// Information the reasoner cannot obtain by itself.
    fn precheck(&mut self, kind: TaskKind) -> Option<String> {
        match kind {
            TaskKind::CostQuote => {
                let goal = self.session.goal.as_ref()?;
                goal.period().is_none().then(|| period_question(goal))
            }
            TaskKind::Confirmation => {
                self.try_confirm();
                if self.session.draft.confirmed || self.session.draft.order_payload.is_none() {
                    None
                } else {
                    Some(self.confirmation_question())
                }
            }
            _ => None,
        }
    }

    /// Marks the draft confirmed when the newest operator turn affirms the
    /// prepared order.
    fn try_confirm(&mut self) {
        let draft = &self.session.draft;
        if draft.confirmed {
            return;
        }
        let (Some(p), Some(q)) = (draft.payload_turn, draft.quote_turn) else {
            return;
        };
        let Some(user) = self.session.last_user_turn() else {
            return;
        };
        if user.index <= p.max(q) {
            return;
        }
        let affirmed = user.explicit_confirmation
            || (self.config.confirm_policy == ConfirmPolicy::TextAffirmation && is_affirmative(&user.content));
        if affirmed {
            let idx = user.index;
            self.session.draft.confirmed = true;
            self.session.draft.confirmation_turn = Some(idx);
        }
    }

    fn confirmation_question(&self) -> String {
        let d = &self.session.draft;
        let total = d
            .order_payload
            .as_ref()
            .and_then(|p| p.get("totalCost"))
            .and_then(|v| serde_json::from_value::<Money>(v.clone()).ok())
            .map(|m| m.to_string())
            .unwrap_or_default();
        match d.period {
            Some(p) => format!(
                "Please confirm the order of {} items from {} to {}, total {total}. Reply yes to place it.",
                d.offering_selections.len(),
                p.start_date,
                p.end_date()
            ),
            None => format!("Please confirm the order, total {total}. Reply yes to place it."),
        }
    }

    fn gap_after_reply(&self, kind: TaskKind) -> (TaskState, String) {
        let goal = self.session.goal.as_ref();
        match kind {
            TaskKind::BundleProposal if goal.and_then(StructuredGoal::duration_days).is_none() => {
                (TaskState::NeedsInfo, "For how many days is the order needed?".into())
            }
            TaskKind::Reconciliation if goal.and_then(StructuredGoal::budget).is_none() => (
                TaskState::NeedsInfo,
                "What is the most you can spend, and how many simultaneous users must be supported?".into(),
            ),
            TaskKind::Reconciliation => (
                TaskState::Blocked,
                "No catalog combination fits these limits. Would you like to change the budget or the user count?"
                    .into(),
            ),
            TaskKind::CostQuote if goal.and_then(StructuredGoal::period).is_none() => {
                (TaskState::NeedsInfo, period_question(goal.expect("goal exists while tasks run")))
            }
            TaskKind::Confirmation if !self.session.draft.confirmed => {
                (TaskState::NeedsInfo, self.confirmation_question())
            }
            _ => (TaskState::Blocked, generic_question(kind)),
        }
    }

    /// Evidence for the task's acceptance criteria, when all hold.
    fn criteria_met(&self, kind: TaskKind) -> Option<Vec<EvidencePointer>> {
        let s = &self.session;
        let d = &s.draft;
        match kind {
            TaskKind::Discovery => {
                let (_, rec) = s.tool_turns().filter(|(_, r)| r.ok() && r.name == LIST_OFFERINGS).last()?;
                let ids: Vec<EvidencePointer> = rec
                    .result
                    .as_ref()?
                    .get("offerings")?
                    .as_array()?
                    .iter()
                    .filter_map(|o| o.get("id")?.as_str())
                    .filter(|id| self.graph.offering(id).is_some())
                    .map(|id| EvidencePointer::new(EvidenceKind::CatalogEntity, id))
                    .collect();
                (!ids.is_empty()).then_some(ids)
            }
            TaskKind::BundleProposal => {
                let q = d.quote_turn?;
                if !s.presented_after(q) {
                    return None;
                }
                let mut ev: Vec<EvidencePointer> = d
                    .offering_selections
                    .iter()
                    .map(|sel| EvidencePointer::new(EvidenceKind::CatalogEntity, &sel.offering_id))
                    .collect();
                ev.push(self.cost_evidence(q)?);
                Some(ev)
            }
            TaskKind::Reconciliation => {
                let goal = s.goal.as_ref()?;
                let budget = goal.budget()?;
                let stated = goal.sizing_stated_at()?;
                let q = d.quote_turn?;
                let quoted = d.quoted_cost.as_ref()?;
                if q <= stated || quoted.amount > budget.amount || !s.presented_after(q) {
                    return None;
                }
                let mut ev = vec![EvidencePointer::new(EvidenceKind::TranscriptTurn, turn_ref(stated))];
                if let Some(users) = goal.min_users() {
                    let (id, cap) = d
                        .offering_selections
                        .iter()
                        .filter_map(|sel| {
                            self.graph
                                .offering(&sel.offering_id)
                                .and_then(|o| o.capacity())
                                .map(|c| (&sel.offering_id, c))
                        })
                        .min_by_key(|(_, c)| *c)?;
                    if cap < users {
                        return None;
                    }
                    ev.push(
                        EvidencePointer::new(EvidenceKind::CharacteristicValue, format!("{id}/maxConcurrentUsers"))
                            .with_value(Scalar::int(cap)),
                    );
                }
                ev.push(self.cost_evidence(q)?);
                Some(ev)
            }
            TaskKind::CostQuote => {
                let goal = s.goal.as_ref()?;
                let period = goal.period()?;
                let stated = goal.period_stated_at()?;
                let q = d.quote_turn?;
                if q <= stated || d.quote_days != Some(period.days) || !s.presented_after(q) {
                    return None;
                }
                Some(vec![EvidencePointer::new(EvidenceKind::TranscriptTurn, turn_ref(stated)), self.cost_evidence(q)?])
            }
            TaskKind::OrderSerialization => {
                let p = d.payload_turn?;
                if p <= d.quote_turn? || !s.presented_after(p) {
                    return None;
                }
                let mut ev = vec![EvidencePointer::new(EvidenceKind::TranscriptTurn, turn_ref(p))];
                for sel in &d.offering_selections {
                    for (name, value) in &sel.characteristic_values {
                        ev.push(
                            EvidencePointer::new(
                                EvidenceKind::CharacteristicValue,
                                format!("{}/{}", sel.offering_id, name),
                            )
                            .with_value(value.clone()),
                        );
                    }
                }
                Some(ev)
            }
            TaskKind::Confirmation => {
                let c = d.confirmation_turn.filter(|_| d.confirmed)?;
                let order = s.submitted_orders.iter().rev().find(|o| o.turn > c)?;
                Some(vec![
                    EvidencePointer::new(EvidenceKind::TranscriptTurn, turn_ref(c)),
                    EvidencePointer::new(EvidenceKind::TranscriptTurn, turn_ref(order.turn)),
                ])
            }
        }
    }

    fn cost_evidence(&self, quote_turn: usize) -> Option<EvidencePointer> {
        let cost = self.session.draft.quoted_cost.as_ref()?;
        Some(
            EvidencePointer::new(EvidenceKind::CostComputation, turn_ref(quote_turn))
                .with_value(Scalar::str(cost.to_string())),
        )
    }

    /// Builds and persists the confirmed intent. Idempotent.
    pub fn finalize_intent(&mut self) -> Result<FinalizedIntent, SessionError> {
        if let Some(f) = &self.session.finalized {
            return Ok(f.clone());
        }
        let s = &self.session;
        if s.task_list.tasks.is_empty() {
            return Err(SessionError::NoGoal);
        }
        if let Some(t) = s.task_list.tasks.iter().find(|t| t.state != TaskState::Completed) {
            return Err(SessionError::Unfinished { task_id: t.task_id.clone(), state: t.state });
        }
        let d = &s.draft;
        let confirmation_turn = d.confirmation_turn.filter(|_| d.confirmed).ok_or(SessionError::Unconfirmed)?;
        let order = s.submitted_orders.last().ok_or(SessionError::NotSubmitted)?;
        let period = d.period.ok_or_else(|| SessionError::Invalid("no period in the draft".into()))?;
        let intent = ConfirmedIntent {
            intent_id: s.intent_id(),
            offering_selections: d.offering_selections.clone(),
            constraints: d.constraints.clone(),
            period,
            confirmation: Confirmation {
                confirmed_by: self.confirmed_by.clone().unwrap_or_else(|| "operator".into()),
                transcript_ref: turn_ref(confirmation_turn),
            },
        };
        intent.check(&self.graph).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let source = intent
            .offering_selections
            .first()
            .map(|s| s.offering_id.clone())
            .ok_or_else(|| SessionError::Invalid("no offerings selected".into()))?;
        let record_id = record_inventory(
            &self.inventory,
            NewRecord {
                id: intent.intent_id.clone(),
                kind: InventoryKind::Intent,
                source_spec_id: source,
                state: "confirmed".into(),
                payload: json!({ "intent": intent, "orderId": order.order_id }),
                supersedes: None,
            },
        )
        .map_err(|e| SessionError::Inventory(e.to_string()))?;
        let finalized = FinalizedIntent { intent, record_id, order_payload: order.payload.clone() };
        self.session.finalized = Some(finalized.clone());
        self.session.status = SessionStatus::Finalized;
        Ok(finalized)
    }
}

fn period_question(goal: &StructuredGoal) -> String {
    match (goal.start_date(), goal.duration_days()) {
        (None, None) => "When should the order start, and for how many days should it run?".into(),
        (None, Some(d)) => format!("On which date should the {d}-day period start?"),
        _ => "For how many days should the order run?".into(),
    }
}

fn generic_question(kind: TaskKind) -> String {
    format!("I could not finish this step ({}). How would you like to proceed?", kind.description().to_lowercase())
}

//! Gateway state and operations, independent of the HTTP layer.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use intentforge_agent::cocreation::{
    backend, AgentConfig, CoCreationAgent, ConfirmPolicy, GuardrailHit, ReasonerError, Role, SessionError,
    SessionStatus, StepOutcome, TaskList, Turn,
};
use intentforge_assurance::closed_loop::{REMEDIATION_QUEUE, TRANSITIONS_QUEUE};
use intentforge_assurance::orchestrator::OrchestratorError;
use intentforge_assurance::tdd_qa::{RemediationRequest, RequestStatus};
use intentforge_assurance::{ClosedLoop, Engine, LoopEvent, QaConfig, RunConfig, SlaReport, Tick};
use intentforge_bus::{Bus, BusConfig, BusStats, HandlerOutcome, SubscribeOptions};
use intentforge_core::catalog::{find_offerings, fixture, load_catalog, CatalogError, CatalogGraph, OfferingSummary};
use intentforge_core::inventory::InventoryStore;
use intentforge_core::traversal::{build_plan, OrchestrationPlan, TraversalError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::events::{EventKind, EventLog};

pub const DEFAULT_MAX_TICKS: Tick = 500;

/// Where the catalog comes from: the bundled fixture or a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogSource {
    Fixture,
    File(PathBuf),
}

impl FromStr for CatalogSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "fixture" { CatalogSource::Fixture } else { CatalogSource::File(s.into()) })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogLoadError {
    #[error("cannot read {path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

impl CatalogSource {
    pub fn load(&self) -> Result<CatalogGraph, CatalogLoadError> {
        match self {
            CatalogSource::Fixture => Ok(fixture()),
            CatalogSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|error| CatalogLoadError::Io { path: path.display().to_string(), error })?;
                Ok(load_catalog(&text)?)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Backend for sessions that do not name one.
    pub default_backend: String,
    /// Static bearer token; `None` disables the check.
    pub token: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { default_backend: "reference".into(), token: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("plan `{0}` not found")]
    UnknownPlan(String),
    #[error("run `{0}` not found")]
    UnknownRun(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Backend(#[from] ReasonerError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Plan(#[from] TraversalError),
}

impl GatewayError {
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::UnknownSession(_) | GatewayError::UnknownPlan(_) | GatewayError::UnknownRun(_) => 404,
            GatewayError::BadRequest(_) | GatewayError::Backend(_) => 400,
            GatewayError::Conflict(_) | GatewayError::Session(_) => 409,
            GatewayError::Orchestrator(OrchestratorError::DuplicateRun { .. }) => 409,
            GatewayError::Orchestrator(_) | GatewayError::Plan(_) => 422,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::UnknownSession(_) | GatewayError::UnknownPlan(_) | GatewayError::UnknownRun(_) => "notFound",
            GatewayError::BadRequest(_) => "badRequest",
            GatewayError::Backend(_) => "backend",
            GatewayError::Conflict(_) => "conflict",
            GatewayError::Session(_) => "session",
            GatewayError::Orchestrator(_) => "orchestrator",
            GatewayError::Plan(_) => "plan",
        }
    }
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

/// A co-creation session as exposed over the API.
pub struct ApiSession {
    agent: CoCreationAgent,
    backend: String,
    /// Sequence of the newest event emitted for this session.
    event_cursor: u64,
    seen_turns: usize,
    seen_log: usize,
    plan_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub backend: String,
    pub event_cursor: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
    pub transcript: Vec<Turn>,
    pub task_list: TaskList,
    pub draft: Value,
    pub guardrails: Vec<GuardrailHit>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnResponse {
    pub session_id: String,
    pub status: SessionStatus,
    pub outcomes: Vec<StepOutcome>,
    /// Turns added by this request, the operator's own included.
    pub turns: Vec<Turn>,
    pub event_cursor: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub backend: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StartRun {
    pub plan_id: String,
    #[serde(default)]
    pub run_config: Option<RunConfig>,
    #[serde(default)]
    pub qa: Option<QaConfig>,
    /// Overrides the run config seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub max_ticks: Option<Tick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Decision {
    Approve,
    Deny,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Remediate {
    pub request_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub max_ticks: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunView {
    pub run_id: String,
    pub plan_id: String,
    pub now: Tick,
    pub report: SlaReport,
    pub awaiting_approval: Vec<RemediationRequest>,
    pub requests: Vec<RemediationRequest>,
}

struct RunEntry {
    plan_id: String,
    max_ticks: Tick,
    lp: ClosedLoop,
}

pub struct Gateway {
    graph: Arc<CatalogGraph>,
    inventory: Arc<InventoryStore>,
    bus: Arc<Bus>,
    events: EventLog,
    config: GatewayConfig,
    engine: Mutex<Engine>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<ApiSession>>>>,
    plans: Mutex<BTreeMap<String, OrchestrationPlan>>,
    runs: Mutex<BTreeMap<String, Arc<Mutex<RunEntry>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Gateway {
    pub fn new(graph: CatalogGraph, config: GatewayConfig) -> Self {
        let graph = Arc::new(graph);
        let bus = Arc::new(Bus::new(BusConfig::default()));
        // The gateway drains loop traffic so the queues do not grow unbounded.
        for q in [TRANSITIONS_QUEUE, REMEDIATION_QUEUE] {
            bus.subscribe(q, SubscribeOptions::default(), Box::new(|_| HandlerOutcome::Ack))
                .expect("queue names are non-empty");
        }
        Gateway {
            inventory: Arc::new(InventoryStore::in_memory(graph.clone())),
            graph,
            bus,
            events: EventLog::default(),
            config,
            engine: Mutex::new(Engine::new()),
            sessions: Mutex::new(BTreeMap::new()),
            plans: Mutex::new(BTreeMap::new()),
            runs: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn graph(&self) -> &CatalogGraph {
        &self.graph
    }

    pub fn offerings(&self, query: Option<&str>) -> Vec<OfferingSummary> {
        find_offerings(&self.graph, query)
    }

    pub fn bus_stats(&self) -> BusStats {
        self.bus.stats()
    }

    pub fn shutdown(&self) {
        self.bus.shutdown();
    }

    pub fn create_session(&self, req: CreateSession) -> Result<SessionView> {
        let backend_id = req.backend.unwrap_or_else(|| self.config.default_backend.clone());
        let reasoner = backend(&backend_id)?;
        let mut sessions = lock(&self.sessions);
        let session_id = format!("s-{:04}", sessions.len() + 1);
        // Confirmation only arrives through the explicit endpoint.
        let agent = CoCreationAgent::new(session_id.clone(), self.graph.clone(), self.inventory.clone(), reasoner)
            .with_config(AgentConfig { confirm_policy: ConfirmPolicy::ExplicitOnly, ..AgentConfig::default() });
        let api = ApiSession {
            agent,
            backend: backend_id,
            event_cursor: self.events.head(),
            seen_turns: 0,
            seen_log: 0,
            plan_id: None,
        };
        let view = view_of(&api);
        sessions.insert(session_id, Arc::new(Mutex::new(api)));
        Ok(view)
    }

    fn session_entry(&self, id: &str) -> Result<Arc<Mutex<ApiSession>>> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| GatewayError::UnknownSession(id.to_string()))
    }

    pub fn session(&self, id: &str) -> Result<SessionView> {
        let entry = self.session_entry(id)?;
        let api = lock(&entry);
        Ok(view_of(&api))
    }

    pub fn tasks(&self, id: &str) -> Result<TaskList> {
        let entry = self.session_entry(id)?;
        let api = lock(&entry);
        Ok(api.agent.session().task_list.clone())
    }

    pub fn message(&self, id: &str, text: &str) -> Result<TurnResponse> {
        if text.trim().is_empty() {
            return Err(GatewayError::BadRequest("message text must not be empty".into()));
        }
        let entry = self.session_entry(id)?;
        let mut api = lock(&entry);
        let before = api.agent.session().transcript.len();
        let outcomes = api.agent.user_message(text)?;
        self.settle_session(&mut api, before, outcomes)
    }

    /// The explicit confirmation action. Refused until a cost has been quoted.
    pub fn confirm(&self, id: &str, confirmed_by: &str) -> Result<TurnResponse> {
        let entry = self.session_entry(id)?;
        let mut api = lock(&entry);
        if api.agent.session().draft.quoted_cost.is_none() {
            return Err(GatewayError::Conflict("nothing to confirm: no cost has been quoted yet".into()));
        }
        let who = if confirmed_by.trim().is_empty() { "operator" } else { confirmed_by.trim() };
        let before = api.agent.session().transcript.len();
        let outcomes = api.agent.confirm(who)?;
        self.settle_session(&mut api, before, outcomes)
    }

    /// Emits events for what the last operation changed and builds the plan
    /// once the session is finalized.
    fn settle_session(&self, api: &mut ApiSession, before: usize, outcomes: Vec<StepOutcome>) -> Result<TurnResponse> {
        let s = api.agent.session();
        let session_id = s.session_id.clone();
        let turns: Vec<Turn> = s.transcript[before..].to_vec();
        let mut pending = Vec::new();
        for t in s.transcript[api.seen_turns..].iter().filter(|t| t.role != Role::User) {
            pending.push((EventKind::AgentTurn, json!({ "sessionId": session_id, "turn": t })));
        }
        for tr in &s.task_list.log[api.seen_log..] {
            let task = s.task_list.tasks.iter().find(|t| t.task_id == tr.task_id);
            pending.push((EventKind::TaskUpdate, json!({ "sessionId": session_id, "transition": tr, "task": task })));
        }
        let (seen_turns, seen_log) = (s.transcript.len(), s.task_list.log.len());
        let finalized = s.finalized.as_ref().map(|f| f.intent.clone());
        for (kind, body) in pending {
            api.event_cursor = self.events.push(kind, body);
        }
        api.seen_turns = seen_turns;
        api.seen_log = seen_log;
        if let (Some(intent), None) = (finalized, &api.plan_id) {
            let plan = build_plan(&self.graph, &intent)?;
            api.event_cursor = self.events.push(
                EventKind::PlanReady,
                json!({
                    "sessionId": session_id,
                    "planId": plan.plan_id,
                    "intentId": plan.intent_id,
                    "canonicalDigest": plan.canonical_digest,
                    "totalCost": plan.total_cost,
                }),
            );
            api.plan_id = Some(plan.plan_id.clone());
            lock(&self.plans).insert(plan.plan_id.clone(), plan);
        }
        Ok(TurnResponse {
            session_id,
            status: api.agent.session().status,
            outcomes,
            turns,
            event_cursor: api.event_cursor,
            plan_id: api.plan_id.clone(),
        })
    }

    pub fn plan(&self, id: &str) -> Result<OrchestrationPlan> {
        lock(&self.plans).get(id).cloned().ok_or_else(|| GatewayError::UnknownPlan(id.to_string()))
    }

    /// Instantiates tests, starts provisioning and drives the loop until it
    /// settles or reaches `maxTicks`.
    pub fn start_run(&self, req: StartRun) -> Result<RunView> {
        let plan = self.plan(&req.plan_id)?;
        let mut config = req.run_config.unwrap_or_default();
        if let Some(seed) = req.seed {
            config.seed = seed;
        }
        let max_ticks = req.max_ticks.unwrap_or(DEFAULT_MAX_TICKS);
        let lp = {
            let mut engine = lock(&self.engine);
            ClosedLoop::start(&mut engine, &plan, &config, req.qa.unwrap_or_default())?.with_bus(self.bus.clone())
        };
        let run_id = lp.run().run_id().to_string();
        let mut entry = RunEntry { plan_id: plan.plan_id.clone(), max_ticks, lp };
        let initial: Vec<LoopEvent> = entry.lp.log().to_vec();
        self.emit_loop(&run_id, &initial);
        self.drive(&run_id, &mut entry);
        let view = run_view(&run_id, &entry);
        lock(&self.runs).insert(run_id, Arc::new(Mutex::new(entry)));
        Ok(view)
    }

    fn run_entry(&self, id: &str) -> Result<Arc<Mutex<RunEntry>>> {
        lock(&self.runs).get(id).cloned().ok_or_else(|| GatewayError::UnknownRun(id.to_string()))
    }

    pub fn run(&self, id: &str) -> Result<RunView> {
        let entry = self.run_entry(id)?;
        let run = lock(&entry);
        Ok(run_view(id, &run))
    }

    pub fn report(&self, id: &str) -> Result<SlaReport> {
        let entry = self.run_entry(id)?;
        let run = lock(&entry);
        Ok(run.lp.report())
    }

    /// Approves or denies a request held for operator approval, then keeps
    /// driving the loop.
    pub fn remediate(&self, id: &str, req: Remediate) -> Result<RunView> {
        let entry = self.run_entry(id)?;
        let mut run = lock(&entry);
        let held = run
            .lp
            .pipeline()
            .requests()
            .iter()
            .any(|r| r.request_id == req.request_id && r.status == RequestStatus::AwaitingApproval);
        if !held {
            return Err(GatewayError::Conflict(format!(
                "request `{}` is not awaiting approval in run {id}",
                req.request_id
            )));
        }
        if let Some(t) = req.max_ticks {
            run.max_ticks = run.max_ticks.max(t);
        }
        match req.decision {
            Decision::Approve => {
                if let Some(ev) = run.lp.approve(&req.request_id) {
                    self.emit_loop(id, &[ev]);
                }
                self.drive(id, &mut run);
            }
            Decision::Deny => {
                if let Some(r) = run.lp.deny(&req.request_id) {
                    self.emit_loop(id, &[LoopEvent::RemediationRequest(r)]);
                }
                self.push_report(id, &run);
            }
        }
        Ok(run_view(id, &run))
    }

    fn drive(&self, run_id: &str, run: &mut RunEntry) {
        while run.lp.now() < run.max_ticks && !run.lp.settled() {
            let evs = run.lp.step();
            self.emit_loop(run_id, &evs);
        }
        self.bus.run_until_idle();
        self.push_report(run_id, run);
    }

    fn push_report(&self, run_id: &str, run: &RunEntry) {
        self.events.push(EventKind::RunReport, json!({ "runId": run_id, "report": run.lp.report() }));
    }

    fn emit_loop(&self, run_id: &str, events: &[LoopEvent]) {
        for ev in events {
            match ev {
                LoopEvent::Telemetry(t) => {
                    if let Some(tr) = &t.transition {
                        self.events.push(
                            EventKind::ItemTransition,
                            json!({ "runId": run_id, "itemRef": t.item_ref, "tick": t.tick, "transition": tr }),
                        );
                    }
                }
                LoopEvent::TestTransition(tr) => {
                    self.events.push(EventKind::TestTransition, json!({ "runId": run_id, "transition": tr }));
                }
                LoopEvent::RemediationRequest(r) => {
                    self.events.push(EventKind::RemediationRequest, json!({ "runId": run_id, "request": r }));
                }
                LoopEvent::RemediationApplied(_) | LoopEvent::RemediationRejected { .. } => {}
            }
        }
    }
}

fn view_of(api: &ApiSession) -> SessionView {
    let s = api.agent.session();
    SessionView {
        session_id: s.session_id.clone(),
        status: s.status,
        backend: api.backend.clone(),
        event_cursor: api.event_cursor,
        plan_id: api.plan_id.clone(),
        transcript: s.transcript.clone(),
        task_list: s.task_list.clone(),
        draft: serde_json::to_value(&s.draft).expect("draft serializes"),
        guardrails: s.guardrail_log(),
        diagnostics: s.diagnostics.clone(),
    }
}

fn run_view(run_id: &str, run: &RunEntry) -> RunView {
    RunView {
        run_id: run_id.to_string(),
        plan_id: run.plan_id.clone(),
        now: run.lp.now(),
        report: run.lp.report(),
        awaiting_approval: run.lp.pipeline().awaiting_approval().cloned().collect(),
        requests: run.lp.pipeline().requests().to_vec(),
    }
}

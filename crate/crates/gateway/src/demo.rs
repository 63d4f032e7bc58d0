//! Scripted end-to-end run: co-creation over the bundled scenario, plan
//! build, then a fault-free and a fault-injected provisioning run.

use std::fmt::Write as _;
use std::sync::Arc;

use intentforge_agent::bench::{Scenario, ScenarioError};
use intentforge_agent::cocreation::{CoCreationAgent, ReferenceReasoner, SessionError, SessionStatus};
use intentforge_assurance::orchestrator::{FaultPlan, OrchestratorError};
use intentforge_assurance::tdd_qa::{Overall, RemediationRequest, TestStatus, Transition};
use intentforge_assurance::{ClosedLoop, Engine, QaConfig, RunConfig, SlaReport, Tick};
use intentforge_core::canonical::to_canonical_string;
use intentforge_core::catalog::{fixture, CatalogGraph, Domain};
use intentforge_core::inventory::InventoryStore;
use intentforge_core::traversal::{build_plan, OrchestrationPlan, TraversalError};
use intentforge_core::Money;

pub const BUNDLED_SCENARIO: &str = include_str!("../../../scenarios/sports-media-patras.json");

/// Resource spec that fails its first attempt in the fault-injected run.
pub const FAULT_ITEM: &str = "res-ran-cell";
pub const STEP_TICKS: u32 = 3;
pub const MAX_TICKS: Tick = 500;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("session ended {status:?} without a confirmed intent")]
    NotFinalized { status: SessionStatus },
    #[error(transparent)]
    Plan(#[from] TraversalError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRun {
    pub run_id: String,
    /// Test statuses right after the run started, before any tick.
    pub initial: Vec<(String, TestStatus)>,
    pub transitions: Vec<Transition>,
    pub requests: Vec<RemediationRequest>,
    pub report: SlaReport,
}

impl DemoRun {
    pub fn all_red_at_start(&self) -> bool {
        !self.initial.is_empty() && self.initial.iter().all(|(_, s)| *s == TestStatus::Red)
    }

    pub fn violations(&self) -> u32 {
        self.report.per_test.iter().map(|t| t.violations).sum()
    }

    pub fn report_bytes(&self) -> String {
        to_canonical_string(&self.report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub seed: u64,
    pub session_id: String,
    pub operator_turns: usize,
    pub quoted_cost: Option<Money>,
    pub plan: OrchestrationPlan,
    pub fault_free: DemoRun,
    pub fault_injected: DemoRun,
}

pub fn run_e2e(seed: u64) -> Result<DemoOutcome, DemoError> {
    run_e2e_with(Arc::new(fixture()), seed)
}

pub fn run_e2e_with(graph: Arc<CatalogGraph>, seed: u64) -> Result<DemoOutcome, DemoError> {
    let scenario = Scenario::from_json(BUNDLED_SCENARIO)?;
    scenario.validate(&graph)?;
    let inventory = Arc::new(InventoryStore::in_memory(graph.clone()));
    let mut agent = CoCreationAgent::new("demo", graph.clone(), inventory, Box::new(ReferenceReasoner::new()));
    let mut operator_turns = 0;
    for turn in &scenario.turns {
        if agent.session().status == SessionStatus::Finalized {
            break;
        }
        agent.user_message(&turn.user_text)?;
        operator_turns += 1;
    }
    let session = agent.session();
    let intent = match &session.finalized {
        Some(f) => f.intent.clone(),
        None => return Err(DemoError::NotFinalized { status: session.status }),
    };
    let plan = build_plan(&graph, &intent)?;
    let fault_free = provision(&plan, &RunConfig::uniform(STEP_TICKS, seed))?;
    let faulty = RunConfig::uniform(STEP_TICKS, seed)
        .with_fault(Domain::Ran, FaultPlan { item_matcher: FAULT_ITEM.into(), fail_on_attempt: 1, degrade: None });
    // A fresh engine per run: the same plan is provisioned twice.
    let fault_injected = provision(&plan, &faulty)?;
    Ok(DemoOutcome {
        seed,
        session_id: session.session_id.clone(),
        operator_turns,
        quoted_cost: session.draft.quoted_cost.clone(),
        plan,
        fault_free,
        fault_injected,
    })
}

fn provision(plan: &OrchestrationPlan, config: &RunConfig) -> Result<DemoRun, DemoError> {
    let mut engine = Engine::new();
    let mut lp = ClosedLoop::start(&mut engine, plan, config, QaConfig::default())?;
    let initial = lp.pipeline().tests().iter().map(|t| (t.test_instance_id.clone(), t.status)).collect();
    let report = lp.run_until_settled(MAX_TICKS);
    Ok(DemoRun {
        run_id: lp.run().run_id().to_string(),
        initial,
        transitions: lp.pipeline().transitions().to_vec(),
        requests: lp.pipeline().requests().to_vec(),
        report,
    })
}

fn overall(o: Overall) -> &'static str {
    match o {
        Overall::Compliant => "compliant",
        Overall::Violated => "violated",
        Overall::Settling => "settling",
    }
}

impl DemoOutcome {
    /// Plain-text summary followed by both reports as canonical JSON.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let cost = self.quoted_cost.as_ref().map_or_else(|| "none".to_string(), Money::to_string);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(
            out,
            "session {}: finalized after {} operator turns, quoted {cost}",
            self.session_id, self.operator_turns
        );
        let p = &self.plan;
        let _ = writeln!(
            out,
            "plan {}: {} offerings, {} service orders, {} resource orders, {} tests, total {}",
            p.plan_id,
            p.offering_selections.len(),
            p.service_orders.len(),
            p.resource_orders.len(),
            p.derived_tests.len(),
            p.total_cost
        );
        let _ = writeln!(out, "digest {}", p.canonical_digest);
        for (label, run) in [("fault-free", &self.fault_free), ("fault-injected", &self.fault_injected)] {
            let red = run.initial.iter().filter(|(_, s)| *s == TestStatus::Red).count();
            let _ = writeln!(
                out,
                "{label} run {}: {red}/{} tests red at start, {} transitions, {} remediation requests, {} at tick {}, {} violations",
                run.run_id,
                run.initial.len(),
                run.transitions.len(),
                run.requests.len(),
                overall(run.report.overall),
                run.report.as_of_tick,
                run.violations()
            );
            for r in &run.requests {
                let _ = writeln!(
                    out,
                    "  remediation {}: {:?} {} (attempt {}) for {} at tick {}",
                    r.request_id, r.action, r.item_ref, r.attempt, r.test_instance_id, r.tick
                );
            }
        }
        let _ = writeln!(out, "fault-free report {}", self.fault_free.report_bytes());
        let _ = writeln!(out, "fault-injected report {}", self.fault_injected.report_bytes());
        out
    }
}

//! Wires a run to its test pipeline: telemetry feeds the pipeline, red tests
//! feed remediation back into the run.

use std::sync::Arc;

use intentforge_bus::Bus;
use intentforge_core::traversal::OrchestrationPlan;
use serde::{Deserialize, Serialize};

use crate::orchestrator::{Engine, OrchestratorError, RemediationAck, Run, RunConfig, TelemetryEvent};
use crate::tdd_qa::{
    instantiate_tests, Overall, Pipeline, QaConfig, RemediationRequest, RequestStatus, SlaReport, Transition,
};
use crate::Tick;

pub const TRANSITIONS_QUEUE: &str = "qa/transitions";
pub const REMEDIATION_QUEUE: &str = "orchestrator/remediation";

/// Everything observable from one loop step, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "camelCase")]
pub enum LoopEvent {
    Telemetry(TelemetryEvent),
    TestTransition(Transition),
    RemediationRequest(RemediationRequest),
    RemediationApplied(RemediationAck),
    RemediationRejected { request_id: String, reason: String },
}

pub struct ClosedLoop {
    run: Run,
    qa: Pipeline,
    bus: Option<Arc<Bus>>,
    log: Vec<LoopEvent>,
}

impl ClosedLoop {
    /// Instantiates the plan's tests, then starts the run.
    pub fn start(
        engine: &mut Engine,
        plan: &OrchestrationPlan,
        run_config: &RunConfig,
        qa_config: QaConfig,
    ) -> Result<Self, OrchestratorError> {
        let qa = instantiate_tests(plan, qa_config);
        let run = engine.execute_plan(plan, run_config, &qa)?;
        let mut lp = ClosedLoop { run, qa, bus: None, log: Vec::new() };
        let created: Vec<TelemetryEvent> = lp.run.events().to_vec();
        for ev in created {
            lp.qa.evaluate(&ev);
            lp.log.push(LoopEvent::Telemetry(ev));
        }
        Ok(lp)
    }

    /// Also publish transitions and requests on the bus.
    pub fn with_bus(mut self, bus: Arc<Bus>) -> Self {
        self.bus = Some(bus);
        self
    }

    pub fn run(&self) -> &Run {
        &self.run
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.qa
    }

    pub fn now(&self) -> Tick {
        self.run.now()
    }

    pub fn log(&self) -> &[LoopEvent] {
        &self.log
    }

    pub fn report(&self) -> SlaReport {
        self.qa.report(self.run.run_id())
    }

    /// One tick: run, evaluate, request, remediate.
    pub fn step(&mut self) -> Vec<LoopEvent> {
        let mut out = Vec::new();
        let events = self.run.tick();
        let now = self.run.now();
        let mut requests = Vec::new();
        for ev in events {
            let transitions = self.qa.evaluate(&ev);
            out.push(LoopEvent::Telemetry(ev));
            for tr in transitions {
                requests.extend(self.qa.on_red(&tr));
                self.publish(TRANSITIONS_QUEUE, &tr);
                out.push(LoopEvent::TestTransition(tr));
            }
        }
        requests.extend(self.qa.sweep(now));
        self.sync_test_status();
        for r in requests {
            self.publish(REMEDIATION_QUEUE, &r);
            let dispatch = r.status == RequestStatus::Dispatched;
            out.push(LoopEvent::RemediationRequest(r.clone()));
            if dispatch {
                out.push(self.apply(&r));
            }
        }
        self.log.extend(out.iter().cloned());
        out
    }

    /// Releases a held request and forwards it to the run.
    pub fn approve(&mut self, request_id: &str) -> Option<LoopEvent> {
        let r = self.qa.approve(request_id)?;
        self.sync_test_status();
        let ev = self.apply(&r);
        self.log.push(ev.clone());
        Some(ev)
    }

    pub fn deny(&mut self, request_id: &str) -> Option<RemediationRequest> {
        self.qa.deny(request_id)
    }

    /// Steps until the run is quiescent and the report has left `settling`,
    /// or `max_ticks` have elapsed.
    pub fn run_until_settled(&mut self, max_ticks: Tick) -> SlaReport {
        while self.run.now() < max_ticks && !self.settled() {
            self.step();
        }
        self.report()
    }

    pub fn settled(&self) -> bool {
        if !self.run.is_terminated() {
            return false;
        }
        match self.report().overall {
            Overall::Compliant => true,
            Overall::Violated => {
                self.qa.awaiting_approval().next().is_some() || self.run.degraded() || self.nothing_pending()
            }
            Overall::Settling => false,
        }
    }

    /// No test can still change without outside action.
    fn nothing_pending(&self) -> bool {
        self.run
            .items()
            .all(|i| !self.qa.item_failing(&i.item_id) || i.state != crate::orchestrator::ItemState::Completed)
    }

    fn apply(&mut self, r: &RemediationRequest) -> LoopEvent {
        match self.run.remediate(&r.item_ref, r.action) {
            Ok(ack) => LoopEvent::RemediationApplied(ack),
            Err(e) => LoopEvent::RemediationRejected { request_id: r.request_id.clone(), reason: e.to_string() },
        }
    }

    fn sync_test_status(&mut self) {
        let ids: Vec<String> = self.run.items().map(|i| i.item_id.clone()).collect();
        for id in ids {
            let failing = self.qa.item_failing(&id);
            self.run.note_test_status(&id, failing);
        }
    }

    fn publish<T: Serialize>(&self, queue: &str, value: &T) {
        if let Some(bus) = &self.bus {
            let v = serde_json::to_value(value).expect("serializable");
            // The bus only refuses after shutdown; the loop keeps running regardless.
            let _ = bus.publish_from("assurance", queue, &v, None);
        }
    }
}

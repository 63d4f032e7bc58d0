//! Red/green test pipeline.
//!
//! Every derived test becomes a [`TestInstance`] that starts red. Telemetry
//! samples are judged against the resolved threshold; a test is green only
//! when a full window of consecutive samples passes. Red tests on failed or
//! stalled items produce remediation requests, at most one per item attempt.

use std::collections::{BTreeMap, BTreeSet};

use intentforge_core::catalog::{Comparator, TestKind};
use intentforge_core::traversal::{DerivedTest, OrchestrationPlan};
use intentforge_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::orchestrator::{EventKind, ItemState, RemediationAction, TelemetryEvent};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TestStatus {
    Red,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Sample {
    pub tick: Tick,
    /// `None` for a fault on the bound item.
    pub observed: Option<Scalar>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestInstance {
    pub test_instance_id: String,
    pub derived_from: String,
    pub test_spec_id: String,
    pub bound_item_ref: String,
    pub kind: TestKind,
    pub target_metric: String,
    pub comparator: Comparator,
    pub threshold: Scalar,
    pub window_ticks: u32,
    pub status: TestStatus,
    pub last_evaluation_tick: Option<Tick>,
    pub history: Vec<Sample>,
}

impl TestInstance {
    fn from_derived(t: &DerivedTest) -> Self {
        let suffix = t.test_id.strip_prefix("dt-").unwrap_or(&t.test_id);
        TestInstance {
            test_instance_id: format!("ti-{suffix}"),
            derived_from: t.test_id.clone(),
            test_spec_id: t.test_spec_id.clone(),
            bound_item_ref: t.bound_ref.clone(),
            kind: t.kind,
            target_metric: t.target_metric.clone(),
            comparator: t.comparator,
            threshold: t.resolved_threshold.clone(),
            window_ticks: t.window_ticks.max(1),
            status: TestStatus::Red,
            last_evaluation_tick: None,
            history: Vec::new(),
        }
    }

    /// Presence kinds pass on any heartbeat at or above the threshold.
    fn judge(&self, observed: &Scalar) -> Verdict {
        let pass = if self.kind.is_presence() {
            match (observed.as_number(), self.threshold.as_number()) {
                (Some(o), Some(t)) => o >= t,
                _ => false,
            }
        } else {
            match (observed.as_number(), self.threshold.as_number()) {
                (Some(o), Some(t)) => self.comparator.holds(&o, &t),
                _ => self.comparator == Comparator::Eq && observed == &self.threshold,
            }
        };
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Status after the samples up to `tick`: any failure in the window is red,
    /// a full passing window is green, an incomplete passing window keeps the
    /// previous status.
    fn window_status(&self, tick: Tick) -> TestStatus {
        let w = self.window_ticks as u64;
        let lo = tick.saturating_sub(w);
        let window: Vec<&Sample> = self.history.iter().filter(|s| s.tick > lo && s.tick <= tick).collect();
        if window.iter().any(|s| s.verdict == Verdict::Fail) {
            TestStatus::Red
        } else if window.iter().map(|s| s.tick).collect::<BTreeSet<_>>().len() as u64 >= w {
            TestStatus::Green
        } else {
            self.status
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    pub test_instance_id: String,
    pub bound_item_ref: String,
    pub from: TestStatus,
    pub to: TestStatus,
    /// Tick of the telemetry event that caused the change.
    pub tick: Tick,
    pub cause: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RedReason {
    GreenToRed,
    ItemFailed,
    PersistentRed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RequestStatus {
    Dispatched,
    AwaitingApproval,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RemediationRequest {
    pub request_id: String,
    pub test_instance_id: String,
    pub item_ref: String,
    pub action: RemediationAction,
    /// Item attempt that the request remediates.
    pub attempt: u32,
    pub tick: Tick,
    pub reason: RedReason,
    pub status: RequestStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QaConfig {
    /// Windows a completed item may stay red before it is reprovisioned.
    #[serde(default = "default_grace_windows")]
    pub grace_windows: u32,
    /// Hold remediation requests until an operator approves them.
    #[serde(default)]
    pub require_approval: bool,
}

fn default_grace_windows() -> u32 {
    2
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig { grace_windows: default_grace_windows(), require_approval: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Overall {
    Compliant,
    Violated,
    Settling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestReport {
    pub test_instance_id: String,
    pub status: TestStatus,
    pub red_ticks: u64,
    pub green_ticks: u64,
    pub violations: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlaReport {
    pub run_ref: String,
    pub as_of_tick: Tick,
    pub per_test: Vec<TestReport>,
    pub overall: Overall,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ItemView {
    state: Option<ItemState>,
    attempt: u32,
    completed_tick: Option<Tick>,
}

/// Test state for one plan. Built only by [`instantiate_tests`].
#[derive(Debug, Clone)]
pub struct Pipeline {
    plan_digest: String,
    config: QaConfig,
    tests: Vec<TestInstance>,
    by_item: BTreeMap<String, Vec<usize>>,
    items: BTreeMap<String, ItemView>,
    transitions: Vec<Transition>,
    requested: BTreeSet<(String, u32)>,
    requests: Vec<RemediationRequest>,
    warnings: Vec<String>,
    now: Tick,
}

/// One red instance per derived test, created before any item is dispatched.
pub fn instantiate_tests(plan: &OrchestrationPlan, config: QaConfig) -> Pipeline {
    let tests: Vec<TestInstance> = plan.derived_tests.iter().map(TestInstance::from_derived).collect();
    let mut by_item: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, t) in tests.iter().enumerate() {
        by_item.entry(t.bound_item_ref.clone()).or_default().push(i);
    }
    Pipeline {
        plan_digest: plan.canonical_digest.clone(),
        config,
        tests,
        by_item,
        items: BTreeMap::new(),
        transitions: Vec::new(),
        requested: BTreeSet::new(),
        requests: Vec::new(),
        warnings: Vec::new(),
        now: 0,
    }
}

impl Pipeline {
    pub fn plan_digest(&self) -> &str {
        &self.plan_digest
    }

    pub fn config(&self) -> &QaConfig {
        &self.config
    }

    pub fn tests(&self) -> &[TestInstance] {
        &self.tests
    }

    pub fn test(&self, id: &str) -> Option<&TestInstance> {
        self.tests.iter().find(|t| t.test_instance_id == id)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn requests(&self) -> &[RemediationRequest] {
        &self.requests
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Whether any test bound to `item_ref` is red.
    pub fn item_failing(&self, item_ref: &str) -> bool {
        self.by_item.get(item_ref).is_some_and(|ix| ix.iter().any(|&i| self.tests[i].status == TestStatus::Red))
    }

    /// Feeds one telemetry event and returns the status changes it caused.
    pub fn evaluate(&mut self, event: &TelemetryEvent) -> Vec<Transition> {
        self.now = self.now.max(event.tick);
        if let Some(tr) = &event.transition {
            let view = self.items.entry(event.item_ref.clone()).or_default();
            view.state = Some(tr.to);
            view.attempt = tr.attempt;
            view.completed_tick = (tr.to == ItemState::Completed).then_some(event.tick);
        }
        let Some(indices) = self.by_item.get(&event.item_ref).cloned() else { return Vec::new() };
        if let (EventKind::Performance, Some(m)) = (event.kind, &event.metric) {
            if !indices.iter().any(|&i| self.tests[i].target_metric == m.name) {
                self.warnings
                    .push(format!("tick {}: metric {} on {} has no bound test", event.tick, m.name, event.item_ref));
            }
        }
        let mut out = Vec::new();
        for i in indices {
            let sample = match (event.kind, &event.metric) {
                (EventKind::Performance, Some(m)) if m.name == self.tests[i].target_metric => {
                    let observed = Scalar::Number(m.value);
                    Sample { tick: event.tick, verdict: self.tests[i].judge(&observed), observed: Some(observed) }
                }
                (EventKind::Fault, _) => Sample { tick: event.tick, observed: None, verdict: Verdict::Fail },
                _ => continue,
            };
            let t = &mut self.tests[i];
            t.history.push(sample);
            t.last_evaluation_tick = Some(event.tick);
            let next = t.window_status(event.tick);
            if next != t.status {
                let tr = Transition {
                    test_instance_id: t.test_instance_id.clone(),
                    bound_item_ref: t.bound_item_ref.clone(),
                    from: t.status,
                    to: next,
                    tick: event.tick,
                    cause: event.kind,
                };
                t.status = next;
                self.transitions.push(tr.clone());
                out.push(tr);
            }
        }
        out
    }

    /// Remediation for a green→red change, if the item's attempt has none yet.
    pub fn on_red(&mut self, transition: &Transition) -> Option<RemediationRequest> {
        if transition.from != TestStatus::Green || transition.to != TestStatus::Red {
            return None;
        }
        self.request_for(&transition.test_instance_id, RedReason::GreenToRed, transition.tick)
    }

    /// Persistent-red checks at the end of `now`: red tests on failed items,
    /// and on items completed longer than the grace period ago.
    pub fn sweep(&mut self, now: Tick) -> Vec<RemediationRequest> {
        self.now = self.now.max(now);
        let mut out = Vec::new();
        for i in 0..self.tests.len() {
            let t = &self.tests[i];
            if t.status != TestStatus::Red {
                continue;
            }
            let Some(view) = self.items.get(&t.bound_item_ref) else { continue };
            let grace = self.config.grace_windows as u64 * t.window_ticks as u64;
            let reason = match (view.state, view.completed_tick) {
                (Some(ItemState::Failed), _) => RedReason::ItemFailed,
                (Some(ItemState::Completed), Some(done)) if now > done + grace => RedReason::PersistentRed,
                _ => continue,
            };
            let id = t.test_instance_id.clone();
            out.extend(self.request_for(&id, reason, now));
        }
        out
    }

    fn request_for(&mut self, test_id: &str, reason: RedReason, tick: Tick) -> Option<RemediationRequest> {
        let t = self.tests.iter().find(|t| t.test_instance_id == test_id)?;
        let view = self.items.get(&t.bound_item_ref)?;
        let action = match view.state? {
            ItemState::Failed => RemediationAction::Retry,
            ItemState::Completed => RemediationAction::Reprovision,
            _ => return None,
        };
        if !self.requested.insert((t.bound_item_ref.clone(), view.attempt)) {
            return None;
        }
        let request = RemediationRequest {
            request_id: format!("rr-{:03}", self.requests.len() + 1),
            test_instance_id: t.test_instance_id.clone(),
            item_ref: t.bound_item_ref.clone(),
            action,
            attempt: view.attempt,
            tick,
            reason,
            status: if self.config.require_approval {
                RequestStatus::AwaitingApproval
            } else {
                RequestStatus::Dispatched
            },
        };
        self.requests.push(request.clone());
        Some(request)
    }

    /// Releases a held request. Returns it with status `dispatched`.
    pub fn approve(&mut self, request_id: &str) -> Option<RemediationRequest> {
        self.resolve(request_id, RequestStatus::Dispatched)
    }

    pub fn deny(&mut self, request_id: &str) -> Option<RemediationRequest> {
        self.resolve(request_id, RequestStatus::Denied)
    }

    fn resolve(&mut self, request_id: &str, status: RequestStatus) -> Option<RemediationRequest> {
        let r = self
            .requests
            .iter_mut()
            .find(|r| r.request_id == request_id && r.status == RequestStatus::AwaitingApproval)?;
        r.status = status;
        Some(r.clone())
    }

    pub fn awaiting_approval(&self) -> impl Iterator<Item = &RemediationRequest> {
        self.requests.iter().filter(|r| r.status == RequestStatus::AwaitingApproval)
    }

    /// Snapshot report as of the latest tick seen.
    pub fn report(&self, run_ref: &str) -> SlaReport {
        let now = self.now;
        let per_test: Vec<TestReport> = self
            .tests
            .iter()
            .map(|t| {
                let changes: Vec<&Transition> =
                    self.transitions.iter().filter(|tr| tr.test_instance_id == t.test_instance_id).collect();
                let (mut red, mut green) = (0u64, 0u64);
                let mut status = TestStatus::Red;
                let mut from = 1u64;
                for tr in &changes {
                    // Status set at tick k holds from k onwards.
                    let span = tr.tick.saturating_sub(from);
                    match status {
                        TestStatus::Red => red += span,
                        TestStatus::Green => green += span,
                    }
                    from = from.max(tr.tick);
                    status = tr.to;
                }
                let tail = (now + 1).saturating_sub(from);
                match status {
                    TestStatus::Red => red += tail,
                    TestStatus::Green => green += tail,
                }
                let mut seen_green = false;
                let mut violations = 0;
                for tr in &changes {
                    if tr.to == TestStatus::Green {
                        seen_green = true;
                    } else if seen_green && tr.from == TestStatus::Green {
                        violations += 1;
                    }
                }
                TestReport {
                    test_instance_id: t.test_instance_id.clone(),
                    status: t.status,
                    red_ticks: red,
                    green_ticks: green,
                    violations,
                }
            })
            .collect();

        let overall = if self.tests.iter().all(|t| t.status == TestStatus::Green) {
            Overall::Compliant
        } else if self
            .tests
            .iter()
            .zip(&per_test)
            .any(|(t, r)| t.status == TestStatus::Red && self.red_is_violation(t, r))
        {
            Overall::Violated
        } else {
            Overall::Settling
        };
        SlaReport { run_ref: run_ref.to_string(), as_of_tick: now, per_test, overall }
    }

    fn red_is_violation(&self, t: &TestInstance, r: &TestReport) -> bool {
        if r.violations > 0 {
            return true;
        }
        let Some(view) = self.items.get(&t.bound_item_ref) else { return false };
        let grace = self.config.grace_windows as u64 * t.window_ticks as u64;
        match (view.state, view.completed_tick) {
            (Some(ItemState::Failed), _) => true,
            (Some(ItemState::Completed), Some(done)) => self.now > done + grace,
            _ => false,
        }
    }
}

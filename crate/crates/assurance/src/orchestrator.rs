//! Deterministic plan executor over simulated domain controllers.
//!
//! Items move `acknowledged → inProgress → {completed, failed}` on logical
//! ticks. Within one tick the run applies queued remediations, then
//! completions and faults, then dispatch, then performance telemetry.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use intentforge_core::catalog::Domain;
use intentforge_core::traversal::OrchestrationPlan;
use intentforge_core::Decimal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tdd_qa::Pipeline;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ItemKind {
    Service,
    Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ItemState {
    Acknowledged,
    InProgress,
    Completed,
    Failed,
}

impl ItemState {
    /// Legal lifecycle edges. Leaving `failed` or `completed` requires remediation.
    pub fn can_move_to(self, to: ItemState, remediation: bool) -> bool {
        use ItemState::*;
        match (self, to) {
            (Acknowledged, InProgress) => !remediation,
            (InProgress, Completed) | (InProgress, Failed) => !remediation,
            (Failed, InProgress) | (Completed, InProgress) => remediation,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvisioningItem {
    pub item_id: String,
    pub plan_ref: String,
    pub kind: ItemKind,
    pub spec_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    /// Item that must complete before this one is dispatched.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depends_on: Option<String>,
    pub state: ItemState,
    pub started_tick: Option<Tick>,
    pub completed_tick: Option<Tick>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Degradation {
    pub metric: String,
    pub value: Decimal,
    /// Ticks after completion at which the metric degrades.
    #[serde(default)]
    pub after_ticks: u64,
}

/// Fault injected into one controller's items.
///
/// Without `degrade` the matched item fails on `failOnAttempt`. With it the
/// item completes, then reports the degraded metric value for that attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FaultPlan {
    /// Exact item id or spec id.
    pub item_matcher: String,
    pub fail_on_attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrade: Option<Degradation>,
}

impl FaultPlan {
    fn matches(&self, item: &ProvisioningItem) -> bool {
        self.item_matcher == item.item_id || self.item_matcher == item.spec_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Controller {
    pub domain: Domain,
    pub step_duration_ticks: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_plan: Option<FaultPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricShape {
    pub steady: Decimal,
    /// Integer noise amplitude; samples are uniform in `steady ± noise`.
    #[serde(default)]
    pub noise: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl MetricShape {
    fn new(steady: i64, noise: i64, unit: Option<&str>) -> Self {
        MetricShape { steady: Decimal::from_int(steady), noise, unit: unit.map(str::to_string) }
    }
}

/// Steady values per metric name, chosen so the fixture's tests pass.
pub fn default_metric_profile() -> BTreeMap<String, MetricShape> {
    BTreeMap::from([
        ("latencyMs".to_string(), MetricShape::new(12, 2, Some("ms"))),
        ("throughputMbps".to_string(), MetricShape::new(1200, 50, Some("Mbps"))),
        ("cacheThroughputMbps".to_string(), MetricShape::new(900, 20, Some("Mbps"))),
        ("sliceAdmitted".to_string(), MetricShape::new(1, 0, None)),
        ("reachable".to_string(), MetricShape::new(1, 0, None)),
        ("apiAvailable".to_string(), MetricShape::new(1, 0, None)),
    ])
}

fn default_max_attempts() -> u32 {
    3
}

fn default_service_step() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub controllers: Vec<Controller>,
    /// Duration of service items, which belong to no controller domain.
    #[serde(default = "default_service_step")]
    pub service_step_ticks: u32,
    #[serde(default)]
    pub seed: u64,
    /// Remediations allowed per item.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_metric_profile")]
    pub metric_profile: BTreeMap<String, MetricShape>,
}

impl RunConfig {
    /// One fault-free controller per domain, all with the same step duration.
    pub fn uniform(step_duration_ticks: u32, seed: u64) -> Self {
        RunConfig {
            controllers: Domain::ALL
                .iter()
                .map(|&domain| Controller { domain, step_duration_ticks, fault_plan: None })
                .collect(),
            service_step_ticks: default_service_step(),
            seed,
            max_attempts: default_max_attempts(),
            metric_profile: default_metric_profile(),
        }
    }

    pub fn with_fault(mut self, domain: Domain, fault: FaultPlan) -> Self {
        if let Some(c) = self.controllers.iter_mut().find(|c| c.domain == domain) {
            c.fault_plan = Some(fault);
        }
        self
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::uniform(2, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    Fault,
    Log,
    Performance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Severity {
    Info,
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metric {
    pub name: String,
    pub value: Decimal,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemTransition {
    /// `None` when the item is created.
    pub from: Option<ItemState>,
    pub to: ItemState,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TelemetryEvent {
    pub tick: Tick,
    pub item_ref: String,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition: Option<ItemTransition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RemediationAction {
    Retry,
    Reprovision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RemediationAck {
    pub item_id: String,
    pub action: RemediationAction,
    /// Attempt number the item runs as once the command applies.
    pub attempt: u32,
    pub effective_tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("plan digest does not verify")]
    DigestMismatch,
    #[error("tests were instantiated for a different plan")]
    TestsNotInstantiated,
    #[error("no controller registered for domain {domain}")]
    MissingController { domain: Domain },
    #[error("a run already exists for plan digest {digest}")]
    DuplicateRun { digest: String },
    #[error("unknown item `{item_id}`")]
    UnknownItem { item_id: String },
    #[error("cannot {action:?} item {item_id} in state {state:?}")]
    IllegalState { item_id: String, action: RemediationAction, state: ItemState },
    #[error("item {item_id} exhausted {max_attempts} remediation attempts; run degraded")]
    AttemptsExhausted { item_id: String, max_attempts: u32 },
    #[error("invalid run config: {detail}")]
    InvalidConfig { detail: String },
}

/// Creates runs and refuses a second run for the same plan digest.
#[derive(Debug, Default)]
pub struct Engine {
    digests: BTreeSet<String>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a run. `tests` must have been instantiated from the same plan,
    /// which guarantees test instances exist before any item is dispatched.
    pub fn execute_plan(
        &mut self,
        plan: &OrchestrationPlan,
        config: &RunConfig,
        tests: &Pipeline,
    ) -> Result<Run, OrchestratorError> {
        if !plan.digest_matches() {
            return Err(OrchestratorError::DigestMismatch);
        }
        if tests.plan_digest() != plan.canonical_digest {
            return Err(OrchestratorError::TestsNotInstantiated);
        }
        if self.digests.contains(&plan.canonical_digest) {
            return Err(OrchestratorError::DuplicateRun { digest: plan.canonical_digest.clone() });
        }
        let run = Run::new(plan, config)?;
        self.digests.insert(plan.canonical_digest.clone());
        Ok(run)
    }
}

/// One plan execution. Owns all item state; callers drive it with [`Run::tick`].
#[derive(Debug, Clone)]
pub struct Run {
    run_id: String,
    plan_ref: String,
    now: Tick,
    items: BTreeMap<String, ProvisioningItem>,
    controllers: BTreeMap<Domain, Controller>,
    service_step_ticks: u32,
    max_attempts: u32,
    profile: BTreeMap<String, MetricShape>,
    /// Metrics emitted per item once completed, sorted by name.
    item_metrics: BTreeMap<String, Vec<(String, MetricShape)>>,
    remediations: BTreeMap<String, u32>,
    queued: VecDeque<(String, RemediationAction)>,
    failing_tests: BTreeSet<String>,
    degraded: bool,
    rng: ChaCha8Rng,
    events: Vec<TelemetryEvent>,
}

impl Run {
    fn new(plan: &OrchestrationPlan, config: &RunConfig) -> Result<Self, OrchestratorError> {
        let mut controllers = BTreeMap::new();
        for c in &config.controllers {
            if c.step_duration_ticks == 0 {
                return Err(OrchestratorError::InvalidConfig {
                    detail: format!("controller {} has zero step duration", c.domain),
                });
            }
            if controllers.insert(c.domain, c.clone()).is_some() {
                return Err(OrchestratorError::InvalidConfig { detail: format!("two controllers for {}", c.domain) });
            }
        }
        if config.service_step_ticks == 0 {
            return Err(OrchestratorError::InvalidConfig { detail: "zero service step duration".into() });
        }
        for r in &plan.resource_orders {
            if !controllers.contains_key(&r.domain) {
                return Err(OrchestratorError::MissingController { domain: r.domain });
            }
        }

        let mut items = BTreeMap::new();
        for s in &plan.service_orders {
            items.insert(
                s.order_id.clone(),
                ProvisioningItem {
                    item_id: s.order_id.clone(),
                    plan_ref: plan.plan_id.clone(),
                    kind: ItemKind::Service,
                    spec_id: s.service_spec_id.clone(),
                    domain: None,
                    depends_on: s.parent_ref.clone(),
                    state: ItemState::Acknowledged,
                    started_tick: None,
                    completed_tick: None,
                    attempts: 0,
                },
            );
        }
        for r in &plan.resource_orders {
            items.insert(
                r.order_id.clone(),
                ProvisioningItem {
                    item_id: r.order_id.clone(),
                    plan_ref: plan.plan_id.clone(),
                    kind: ItemKind::Resource,
                    spec_id: r.resource_spec_id.clone(),
                    domain: Some(r.domain),
                    depends_on: Some(r.parent_service_ref.clone()),
                    state: ItemState::Acknowledged,
                    started_tick: None,
                    completed_tick: None,
                    attempts: 0,
                },
            );
        }

        let mut item_metrics: BTreeMap<String, Vec<(String, MetricShape)>> = BTreeMap::new();
        for t in &plan.derived_tests {
            if !items.contains_key(&t.bound_ref) {
                continue;
            }
            let shape = match config.metric_profile.get(&t.target_metric) {
                Some(s) => s.clone(),
                None if t.kind.is_presence() => MetricShape::new(1, 0, None),
                None => continue,
            };
            let metrics = item_metrics.entry(t.bound_ref.clone()).or_default();
            if !metrics.iter().any(|(n, _)| n == &t.target_metric) {
                metrics.push((t.target_metric.clone(), shape));
                metrics.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }

        let mut run = Run {
            run_id: format!("run-{}", &plan.canonical_digest[..12.min(plan.canonical_digest.len())]),
            plan_ref: plan.plan_id.clone(),
            now: 0,
            items,
            controllers,
            service_step_ticks: config.service_step_ticks,
            max_attempts: config.max_attempts,
            profile: config.metric_profile.clone(),
            item_metrics,
            remediations: BTreeMap::new(),
            queued: VecDeque::new(),
            failing_tests: BTreeSet::new(),
            degraded: false,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            events: Vec::new(),
        };
        let created: Vec<TelemetryEvent> = run
            .items
            .values()
            .map(|i| log_event(0, &i.item_id, None, ItemState::Acknowledged, 0, Severity::Info))
            .collect();
        run.events.extend(created);
        Ok(run)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn plan_ref(&self) -> &str {
        &self.plan_ref
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn items(&self) -> impl Iterator<Item = &ProvisioningItem> {
        self.items.values()
    }

    pub fn item(&self, id: &str) -> Option<&ProvisioningItem> {
        self.items.get(id)
    }

    pub fn degraded(&self) -> bool {
        self.degraded
    }

    /// Full ordered telemetry stream so far.
    pub fn events(&self) -> &[TelemetryEvent] {
        &self.events
    }

    pub fn state_counts(&self) -> BTreeMap<ItemState, usize> {
        let mut counts = BTreeMap::new();
        for i in self.items.values() {
            *counts.entry(i.state).or_insert(0) += 1;
        }
        counts
    }

    /// Nothing in flight, nothing queued and nothing left to dispatch.
    pub fn is_terminated(&self) -> bool {
        self.queued.is_empty()
            && self.items.values().all(|i| match i.state {
                ItemState::InProgress => false,
                ItemState::Acknowledged => !self.dependency_met(i),
                _ => true,
            })
    }

    /// Records whether any test bound to `item_id` is currently red;
    /// reprovisioning a completed item requires one.
    pub fn note_test_status(&mut self, item_id: &str, failing: bool) {
        if failing {
            self.failing_tests.insert(item_id.to_string());
        } else {
            self.failing_tests.remove(item_id);
        }
    }

    /// Validates and queues a remediation; it applies at the start of the next tick.
    pub fn remediate(&mut self, item_id: &str, action: RemediationAction) -> Result<RemediationAck, OrchestratorError> {
        let item =
            self.items.get(item_id).ok_or_else(|| OrchestratorError::UnknownItem { item_id: item_id.to_string() })?;
        let legal = match action {
            RemediationAction::Retry => item.state == ItemState::Failed,
            RemediationAction::Reprovision => {
                item.state == ItemState::Completed && self.failing_tests.contains(item_id)
            }
        };
        if !legal || self.queued.iter().any(|(id, _)| id == item_id) {
            return Err(OrchestratorError::IllegalState { item_id: item_id.to_string(), action, state: item.state });
        }
        let used = self.remediations.get(item_id).copied().unwrap_or(0);
        if used >= self.max_attempts {
            self.degraded = true;
            return Err(OrchestratorError::AttemptsExhausted {
                item_id: item_id.to_string(),
                max_attempts: self.max_attempts,
            });
        }
        self.remediations.insert(item_id.to_string(), used + 1);
        self.queued.push_back((item_id.to_string(), action));
        Ok(RemediationAck {
            item_id: item_id.to_string(),
            action,
            attempt: item.attempts + 1,
            effective_tick: self.now + 1,
        })
    }

    /// Advances one logical tick and returns that tick's events in stream order.
    pub fn tick(&mut self) -> Vec<TelemetryEvent> {
        self.now += 1;
        let now = self.now;
        let mut out = Vec::new();

        while let Some((id, action)) = self.queued.pop_front() {
            let item = self.items.get_mut(&id).expect("validated on queue");
            let from = item.state;
            item.state = ItemState::InProgress;
            item.attempts += 1;
            item.started_tick = Some(now);
            item.completed_tick = None;
            let mut ev = log_event(now, &id, Some(from), ItemState::InProgress, item.attempts, Severity::Info);
            ev.detail = Some(format!("{action:?}").to_lowercase());
            out.push(ev);
        }

        let due: Vec<String> = self
            .items
            .values()
            .filter(|i| i.state == ItemState::InProgress && i.started_tick.unwrap_or(0) + self.duration(i) == now)
            .map(|i| i.item_id.clone())
            .collect();
        for id in due {
            let fails = self.fault_for(&id).is_some_and(|f| f.degrade.is_none());
            let item = self.items.get_mut(&id).expect("listed above");
            if fails {
                item.state = ItemState::Failed;
                out.push(TelemetryEvent {
                    tick: now,
                    item_ref: id.clone(),
                    kind: EventKind::Fault,
                    metric: None,
                    severity: Severity::Error,
                    transition: None,
                    detail: Some(format!("injected fault on attempt {}", item.attempts)),
                });
                out.push(log_event(
                    now,
                    &id,
                    Some(ItemState::InProgress),
                    ItemState::Failed,
                    item.attempts,
                    Severity::Warn,
                ));
            } else {
                item.state = ItemState::Completed;
                item.completed_tick = Some(now);
                out.push(log_event(
                    now,
                    &id,
                    Some(ItemState::InProgress),
                    ItemState::Completed,
                    item.attempts,
                    Severity::Info,
                ));
            }
        }

        let ready: Vec<String> = self
            .items
            .values()
            .filter(|i| i.state == ItemState::Acknowledged && self.dependency_met(i))
            .map(|i| i.item_id.clone())
            .collect();
        for id in ready {
            let item = self.items.get_mut(&id).expect("listed above");
            item.state = ItemState::InProgress;
            item.attempts = 1;
            item.started_tick = Some(now);
            out.push(log_event(now, &id, Some(ItemState::Acknowledged), ItemState::InProgress, 1, Severity::Info));
        }

        let completed: Vec<String> =
            self.items.values().filter(|i| i.state == ItemState::Completed).map(|i| i.item_id.clone()).collect();
        for id in completed {
            let Some(metrics) = self.item_metrics.get(&id).cloned() else { continue };
            let done = self.items[&id].completed_tick.unwrap_or(now);
            let degrade = self.fault_for(&id).and_then(|f| f.degrade.clone()).filter(|d| now >= done + d.after_ticks);
            for (name, shape) in &metrics {
                // Draw even when degraded so the noise sequence is independent of faults.
                let noise = if shape.noise > 0 { self.rng.gen_range(-shape.noise..=shape.noise) } else { 0 };
                let value = match &degrade {
                    Some(d) if &d.metric == name => d.value,
                    _ => shape.steady.checked_add(Decimal::from_int(noise)).unwrap_or(shape.steady),
                };
                out.push(TelemetryEvent {
                    tick: now,
                    item_ref: id.clone(),
                    kind: EventKind::Performance,
                    metric: Some(Metric { name: name.clone(), value, unit: shape.unit.clone() }),
                    severity: Severity::Info,
                    transition: None,
                    detail: None,
                });
            }
        }

        out.sort_by(|a, b| a.item_ref.cmp(&b.item_ref));
        self.events.extend(out.iter().cloned());
        out
    }

    /// Metric profile in use, for reporting.
    pub fn metric_profile(&self) -> &BTreeMap<String, MetricShape> {
        &self.profile
    }

    fn dependency_met(&self, item: &ProvisioningItem) -> bool {
        match &item.depends_on {
            None => true,
            Some(p) => self.items.get(p).is_none_or(|p| p.state == ItemState::Completed),
        }
    }

    fn duration(&self, item: &ProvisioningItem) -> u64 {
        match item.domain {
            Some(d) => self.controllers[&d].step_duration_ticks as u64,
            None => self.service_step_ticks as u64,
        }
    }

    /// Fault plan that fires for the item's current attempt.
    fn fault_for(&self, item_id: &str) -> Option<&FaultPlan> {
        let item = self.items.get(item_id)?;
        let plan = self.controllers.get(&item.domain?)?.fault_plan.as_ref()?;
        (plan.matches(item) && plan.fail_on_attempt == item.attempts).then_some(plan)
    }
}

fn log_event(
    tick: Tick,
    item_id: &str,
    from: Option<ItemState>,
    to: ItemState,
    attempt: u32,
    severity: Severity,
) -> TelemetryEvent {
    TelemetryEvent {
        tick,
        item_ref: item_id.to_string(),
        kind: EventKind::Log,
        metric: None,
        severity,
        transition: Some(ItemTransition { from, to, attempt }),
        detail: None,
    }
}

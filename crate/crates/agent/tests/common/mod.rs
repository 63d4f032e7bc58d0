#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::Arc;

use intentforge_agent::bench::Scenario;
use intentforge_agent::cocreation::{
    BackendFamily, Capabilities, CoCreationAgent, Effect, EvidenceKind, Reasoner, ReasonerError, ReasonerOutput,
    ReasonerView, ReferenceReasoner, Role, Session, TaskKind, TaskState,
};
use intentforge_core::catalog::{fixture, CatalogGraph};
use intentforge_core::inventory::InventoryStore;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const Q1: &str = "I am interested in products for a high-resolution sports media experience across mobile and \
                      connected devices using 5G capabilities in the city of Patras, Greece, for one week. The \
                      service should enable users to watch live sports and interact with real-time stats without \
                      quality degradation. As admin, I want to be able to monitor the performance of my service.";
pub const Q2: &str = "This proposal is over my budget. Could you suggest a more affordable combination of products?";
pub const Q3: &str =
    "The service must support at least 1000 simultaneous users. I can stretch my budget up to 9000 EUR for that.";
pub const Q4: &str = "The service should start on 2026-06-01 and run for one week.";
pub const Q5: &str = "Yes, I confirm. Please place the order.";

pub const GROUND_TRUTH: [&str; 4] =
    ["po-slice-gold", "po-edge-cache-large", "po-setup-vpn-standard", "po-slice-observability-admin"];

pub fn graph() -> Arc<CatalogGraph> {
    Arc::new(fixture())
}

pub fn agent_with(id: &str, reasoner: Box<dyn Reasoner>) -> CoCreationAgent {
    let g = graph();
    let inv = Arc::new(InventoryStore::in_memory(g.clone()));
    CoCreationAgent::new(id, g, inv, reasoner)
}

pub fn reference_agent() -> CoCreationAgent {
    agent_with("s1", Box::new(ReferenceReasoner::new()))
}

pub fn bundled_scenario() -> Scenario {
    Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/sports-media-patras.json")).unwrap()
}

/// Plays a fixed list of effects, then asks the operator how to continue.
pub struct Script {
    pub effects: VecDeque<Effect>,
    pub tool_calling: bool,
}

impl Script {
    pub fn new(effects: Vec<Effect>) -> Self {
        Script { effects: effects.into(), tool_calling: true }
    }
}

impl Reasoner for Script {
    fn id(&self) -> &str {
        "script"
    }

    fn family(&self) -> BackendFamily {
        BackendFamily::NonReasoning
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: self.tool_calling, max_turn_tokens: 512 }
    }

    fn next(&mut self, _view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        Ok(self.effects.pop_front().unwrap_or_else(|| Effect::reply("Let me know how to continue.")).into())
    }
}

/// Always fails as if the endpoint were down.
pub struct Down;

impl Reasoner for Down {
    fn id(&self) -> &str {
        "down"
    }

    fn family(&self) -> BackendFamily {
        BackendFamily::NonReasoning
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: true, max_turn_tokens: 512 }
    }

    fn next(&mut self, _view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        Err(ReasonerError::Unreachable("connection refused".into()))
    }
}

const REPLIES: [&str; 8] = [
    "Here is what I found in the catalog.",
    "- On-demand Network Slice (Gold)\n- Edge Media Cache Server (Large)",
    "- Quantum Backhaul Booster: faster uplink",
    "The slice guarantees unlimited 4K streaming.",
    "I recommend the Stadium Fan Engagement Hub for this event.",
    "The total is 7100.00 EUR.",
    "Please tell me more about the event.",
    "The order will be placed now.",
];

const IDS: [&str; 10] = [
    "po-slice-silver",
    "po-slice-gold",
    "po-slice-platinum",
    "po-edge-cache-small",
    "po-edge-cache-large",
    "po-edge-cache-large-gpu",
    "po-setup-vpn-standard",
    "po-slice-observability-admin",
    "po-unknown",
    "po-slice-gold",
];

/// Mixes the reference policy with arbitrary effects, including order
/// submissions at any time.
pub struct Fuzzer {
    rng: ChaCha8Rng,
    inner: ReferenceReasoner,
    /// Probability of an arbitrary effect instead of the reference one.
    chaos: f64,
}

impl Fuzzer {
    pub fn new(seed: u64, chaos: f64) -> Self {
        Fuzzer { rng: ChaCha8Rng::seed_from_u64(seed), inner: ReferenceReasoner::new(), chaos }
    }

    fn arbitrary(&mut self) -> Result<ReasonerOutput, ReasonerError> {
        let r = &mut self.rng;
        let effect = match r.gen_range(0..11) {
            0 => Effect::tool("catalog.list_offerings", json!({})),
            1 => Effect::tool("catalog.get_offering", json!({ "offeringId": *IDS.choose(r).unwrap() })),
            2 => Effect::tool(
                "catalog.propose_bundles",
                json!({ "days": r.gen_range(0..10), "budget": r.gen_range(0..12000), "minUsers": r.gen_range(0..1500) }),
            ),
            3 => {
                let n = r.gen_range(0..5);
                let ids: Vec<&str> = (0..n).map(|_| *IDS.choose(r).unwrap()).collect();
                Effect::tool("pricing.quote", json!({ "offeringIds": ids, "days": r.gen_range(0..9) }))
            }
            4 => {
                let start = format!("2026-06-{:02}", r.gen_range(1..10));
                let end = format!("2026-06-{:02}", r.gen_range(1..15));
                Effect::tool("order.prepare", json!({ "startDate": start, "endDate": end }))
            }
            5 | 6 => Effect::tool("order.submit", json!({})),
            7 | 8 => Effect::reply(*REPLIES.choose(r).unwrap()),
            9 => Effect::Finalize,
            _ => return Err(ReasonerError::BadResponse("garbled".into())),
        };
        Ok(effect.into())
    }
}

impl Reasoner for Fuzzer {
    fn id(&self) -> &str {
        "fuzzer"
    }

    fn family(&self) -> BackendFamily {
        BackendFamily::NonReasoning
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: true, max_turn_tokens: 512 }
    }

    fn next(&mut self, view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        if self.rng.gen_bool(self.chaos) {
            self.arbitrary()
        } else {
            self.inner.next(view)
        }
    }
}

/// Operator messages for fuzzing; the flag marks affirmations.
pub const USER_POOL: [(&str, bool); 10] = [
    (Q1, false),
    (Q2, false),
    (Q3, false),
    (Q4, false),
    (Q5, true),
    ("yes, proceed", true),
    ("No, wait. Do not place anything yet.", false),
    ("Make it two weeks instead.", false),
    ("My budget is 5000 EUR.", false),
    ("", false),
];

/// Legal task moves, written out independently of the implementation.
pub fn legal(from: TaskState, to: TaskState) -> bool {
    use TaskState::*;
    matches!(
        (from, to),
        (Pending, InProgress)
            | (InProgress, Completed)
            | (InProgress, Blocked)
            | (InProgress, NeedsInfo)
            | (Blocked, InProgress)
            | (NeedsInfo, InProgress)
    )
}

/// Replays the transition log from all-pending and checks every move and
/// the single in-progress rule at each point.
pub fn check_task_log(s: &Session) -> Result<(), String> {
    let mut states: Vec<(String, TaskState)> =
        s.task_list.tasks.iter().map(|t| (t.task_id.clone(), TaskState::Pending)).collect();
    for tr in &s.task_list.log {
        let entry = states.iter_mut().find(|(id, _)| *id == tr.task_id).ok_or(format!("unknown {}", tr.task_id))?;
        if entry.1 != tr.from {
            return Err(format!("{} logged from {} but was {}", tr.task_id, tr.from, entry.1));
        }
        if !legal(tr.from, tr.to) {
            return Err(format!("illegal {} {} -> {}", tr.task_id, tr.from, tr.to));
        }
        entry.1 = tr.to;
        let active = states.iter().filter(|(_, st)| *st == TaskState::InProgress).count();
        if active > 1 {
            return Err(format!("{active} tasks in progress after {tr:?}"));
        }
    }
    for t in &s.task_list.tasks {
        let replayed = states.iter().find(|(id, _)| *id == t.task_id).unwrap().1;
        if replayed != t.state {
            return Err(format!("{} is {} but the log says {}", t.task_id, t.state, replayed));
        }
    }
    Ok(())
}

/// Every completed task has evidence, and every pointer resolves.
pub fn check_evidence(s: &Session, g: &CatalogGraph) -> Result<(), String> {
    for t in s.task_list.tasks.iter().filter(|t| t.state == TaskState::Completed) {
        if t.evidence.is_empty() {
            return Err(format!("{} completed without evidence", t.task_id));
        }
        for e in &t.evidence {
            let ok = match e.kind {
                EvidenceKind::CatalogEntity => g.offering(&e.reference).is_some(),
                EvidenceKind::TranscriptTurn | EvidenceKind::CostComputation => e
                    .reference
                    .strip_prefix("turn-")
                    .and_then(|n| n.parse::<usize>().ok())
                    .is_some_and(|n| n < s.transcript.len()),
                EvidenceKind::CharacteristicValue => e
                    .reference
                    .split_once('/')
                    .and_then(|(id, c)| g.offering(id).map(|o| o.characteristics.iter().any(|spec| spec.name == c)))
                    .unwrap_or(false),
            };
            if !ok {
                return Err(format!("{}: pointer {:?} does not resolve", t.task_id, e));
            }
        }
    }
    Ok(())
}

/// Every successful submission follows a successful prepare and an
/// affirmation given after the newest quote or prepare.
pub fn check_submissions(s: &Session, affirmations: &[usize]) -> Result<(), String> {
    let mut last_change = None;
    let mut prepared = false;
    let mut ok_submits = 0;
    for t in &s.transcript {
        let Some(rec) = &t.tool else { continue };
        if !rec.ok() {
            continue;
        }
        match rec.name.as_str() {
            "pricing.quote" => {
                last_change = Some(t.index);
                prepared = false;
            }
            "order.prepare" => {
                last_change = Some(t.index);
                prepared = true;
            }
            "order.submit" => {
                ok_submits += 1;
                let after = last_change.ok_or("submit before any quote")?;
                if !prepared {
                    return Err(format!("submit at turn {} without a prepared order", t.index));
                }
                if !affirmations.iter().any(|&u| u > after && u < t.index) {
                    return Err(format!("submit at turn {} without an affirmation after turn {after}", t.index));
                }
            }
            _ => {}
        }
    }
    if ok_submits != s.submitted_orders.len() {
        return Err(format!("{ok_submits} submit records but {} orders", s.submitted_orders.len()));
    }
    Ok(())
}

pub fn user_turns(s: &Session) -> Vec<usize> {
    s.transcript.iter().filter(|t| t.role == Role::User).map(|t| t.index).collect()
}

pub fn state_of(s: &Session, kind: TaskKind) -> TaskState {
    s.task_list.get(kind).unwrap().state
}

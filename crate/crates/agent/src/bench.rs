//! Replays a scripted operator conversation against a reasoner backend and
//! scores the outcome against a ground-truth bundle.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, NaiveDate, Utc};
use intentforge_core::catalog::{CatalogGraph, CostPeriod};
use intentforge_core::inventory::InventoryStore;
use intentforge_core::traversal::{compute_cost, OfferingSelection};
use intentforge_core::Money;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cocreation::{
    BackendFamily, CoCreationAgent, GuardrailRule, Reasoner, Session, SessionStatus, TaskKind, TaskState, Vocabulary,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioTurn {
    pub label: String,
    pub user_text: String,
    #[serde(default)]
    pub expectations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub bundle: Vec<OfferingSelection>,
    pub total_cost: Money,
    pub days: u32,
    pub budget: Money,
    pub min_users: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub scenario_id: String,
    pub turns: Vec<ScenarioTurn>,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Io(String),
    #[error("scenario JSON: {0}")]
    Parse(String),
    #[error("scenario has no turns")]
    Empty,
    #[error("turn label `{0}` is used more than once")]
    DuplicateLabel(String),
    #[error("ground-truth offering `{0}` is not in the catalog")]
    UnknownOffering(String),
    #[error("ground-truth total {stated} differs from the catalog price {computed}")]
    CostMismatch { stated: Money, computed: Money },
    #[error("turn {label}: unknown check `{check}`")]
    UnknownCheck { label: String, check: String },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self, graph: &CatalogGraph) -> Result<(), ScenarioError> {
        if self.turns.is_empty() {
            return Err(ScenarioError::Empty);
        }
        let mut labels = BTreeSet::new();
        for t in &self.turns {
            if !labels.insert(t.label.as_str()) {
                return Err(ScenarioError::DuplicateLabel(t.label.clone()));
            }
            for check in &t.expectations {
                if Check::parse(check).is_none() {
                    return Err(ScenarioError::UnknownCheck { label: t.label.clone(), check: check.clone() });
                }
            }
        }
        let gt = &self.ground_truth;
        let ids: Vec<&str> = gt.bundle.iter().map(|s| s.offering_id.as_str()).collect();
        if let Some(id) = ids.iter().find(|id| graph.offering(id).is_none()) {
            return Err(ScenarioError::UnknownOffering(id.to_string()));
        }
        let computed = compute_cost(graph, &ids, gt.days).expect("ids resolve");
        if computed != gt.total_cost {
            return Err(ScenarioError::CostMismatch { stated: gt.total_cost.clone(), computed });
        }
        Ok(())
    }

    /// Offering families of the ground-truth bundle, sorted.
    pub fn ground_truth_families(&self, graph: &CatalogGraph) -> Vec<String> {
        families_of(graph, self.ground_truth.bundle.iter().map(|s| s.offering_id.as_str()))
    }
}

/// Named checks a scenario turn may assert after the agent has answered.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Check {
    ToolUsed,
    AwaitingUser,
    Finalized,
    Quoted(Money),
    TaskState(TaskKind, TaskState),
    Missing(String),
    Constraint(String),
}

impl Check {
    fn parse(text: &str) -> Option<Check> {
        let (name, arg) = text.split_once(':').map(|(a, b)| (a, Some(b.trim()))).unwrap_or((text, None));
        match (name, arg) {
            ("toolUsed", None) => Some(Check::ToolUsed),
            ("awaitingUser", None) => Some(Check::AwaitingUser),
            ("finalized", None) => Some(Check::Finalized),
            ("quoted", Some(a)) => Money::parse_eur(a.trim_end_matches("EUR").trim()).map(Check::Quoted),
            ("task", Some(a)) => {
                let (slug, state) = a.split_once('=')?;
                let kind = TaskKind::ALL.into_iter().find(|k| k.slug() == slug.trim())?;
                let state: TaskState = serde_json::from_value(Value::String(state.trim().to_string())).ok()?;
                Some(Check::TaskState(kind, state))
            }
            ("missing", Some(a)) => Some(Check::Missing(a.to_string())),
            ("constraint", Some(a)) => Some(Check::Constraint(a.to_string())),
            _ => None,
        }
    }

    fn holds(&self, s: &Session) -> bool {
        match self {
            Check::ToolUsed => s.used_tools(),
            Check::AwaitingUser => s.status == SessionStatus::AwaitingUser,
            Check::Finalized => s.status == SessionStatus::Finalized,
            Check::Quoted(m) => s.draft.quoted_cost.as_ref() == Some(m),
            Check::TaskState(kind, state) => s.task_list.get(*kind).is_some_and(|t| t.state == *state),
            Check::Missing(name) => s.goal.as_ref().is_some_and(|g| g.missing_info.iter().any(|m| m == name)),
            Check::Constraint(name) => {
                s.goal.as_ref().is_some_and(|g| g.explicit_constraints.iter().any(|c| c.constraint.name() == name))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassFail {
    Pass,
    Fail,
}

impl PassFail {
    pub fn from_bool(b: bool) -> Self {
        if b {
            PassFail::Pass
        } else {
            PassFail::Fail
        }
    }
}

impl fmt::Display for PassFail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PassFail::Pass => "Pass",
            PassFail::Fail => "Fail",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Fail,
    Partial,
    Pass,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Pass => "Pass",
            Baseline::Partial => "Partial",
            Baseline::Fail => "Fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchResult {
    pub backend_id: String,
    pub backend_family: BackendFamily,
    pub correct_composition: u32,
    pub composition_of: u32,
    pub hallucinated_products: u32,
    pub correct_total_cost: PassFail,
    pub correct_duration: PassFail,
    pub baseline_achievement: Baseline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_time_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl BenchResult {
    pub fn composition(&self) -> String {
        format!("{}/{}", self.correct_composition, self.composition_of)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnCheck {
    pub label: String,
    pub check: String,
    pub passed: bool,
}

/// Everything needed to re-score a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchRecord {
    pub scenario_id: String,
    pub backend_id: String,
    pub backend_family: BackendFamily,
    pub session: Session,
    pub dialogue_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    pub checks: Vec<TurnCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub result: BenchResult,
    pub record: BenchRecord,
}

/// Drives one session through the scenario turns and scores it.
pub fn run_scenario(
    scenario: &Scenario,
    backend: Box<dyn Reasoner>,
    graph: Arc<CatalogGraph>,
) -> Result<BenchRun, ScenarioError> {
    scenario.validate(&graph)?;
    let inventory = Arc::new(InventoryStore::in_memory(graph.clone()));
    let backend_id = backend.id().to_string();
    let backend_family = backend.family();
    let mut agent = CoCreationAgent::new(format!("bench-{}", scenario.scenario_id), graph.clone(), inventory, backend);
    let mut failure = None;
    let mut checks = Vec::new();
    let started = Instant::now();
    for turn in &scenario.turns {
        let status = agent.session().status;
        if matches!(status, SessionStatus::Finalized | SessionStatus::Aborted) {
            if status == SessionStatus::Aborted {
                failure.get_or_insert_with(|| format!("session aborted before {}", turn.label));
            }
            break;
        }
        if let Err(e) = agent.user_message(&turn.user_text) {
            failure = Some(format!("{}: {e}", turn.label));
            break;
        }
        for check in &turn.expectations {
            let passed = Check::parse(check).is_some_and(|c| c.holds(agent.session()));
            checks.push(TurnCheck { label: turn.label.clone(), check: check.clone(), passed });
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let session = agent.into_session();
    let failure_reason = session.diagnostics.first().cloned().or(failure);
    let record = BenchRecord {
        scenario_id: scenario.scenario_id.clone(),
        backend_id,
        backend_family,
        session,
        dialogue_time_seconds: elapsed,
        failure_reason,
        checks,
    };
    let result = score(&record, scenario, &graph);
    Ok(BenchRun { result, record })
}

fn families_of<'a>(graph: &CatalogGraph, ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<String> = ids.filter_map(|id| graph.offering(id)).map(|o| o.name.clone()).collect();
    set.into_iter().collect()
}

/// Families the session finally proposed: the draft selection if one was
/// quoted, otherwise the catalog names in the newest reply that named
/// products.
pub fn final_bundle(session: &Session, graph: &CatalogGraph) -> Vec<String> {
    if !session.draft.offering_selections.is_empty() {
        return families_of(graph, session.draft.offering_selections.iter().map(|s| s.offering_id.as_str()));
    }
    let vocab = Vocabulary::from_catalog(graph);
    for turn in session.transcript.iter().rev() {
        let Some(raw) = turn.raw_reply() else { continue };
        let named = vocab.mentioned(raw);
        let invented = turn.veto.as_ref().is_some_and(|v| v.rule == GuardrailRule::G1);
        if !named.is_empty() || invented {
            let mut named = named;
            named.sort();
            return named;
        }
    }
    Vec::new()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompositionScore {
    pub correct: u32,
    pub of: u32,
    pub hallucinated: u32,
}

/// Family overlap with the ground truth, and distinct invented product
/// names across the whole transcript.
pub fn score_composition(proposed: &[String], ground_truth: &[String], session: &Session) -> CompositionScore {
    let truth: BTreeSet<String> = ground_truth.iter().map(|f| f.to_lowercase()).collect();
    let proposed: BTreeSet<String> = proposed.iter().map(|f| f.to_lowercase()).collect();
    let invented: BTreeSet<String> = session
        .guardrail_log()
        .into_iter()
        .filter(|h| h.rule == GuardrailRule::G1)
        .flat_map(|h| h.names)
        .map(|n| n.to_lowercase())
        .collect();
    CompositionScore {
        correct: proposed.intersection(&truth).count() as u32,
        of: truth.len() as u32,
        hallucinated: invented.len() as u32,
    }
}

/// Exhaustive search over one offering per family for the cheapest
/// combination meeting the budget and user count.
pub fn min_feasible_cost(
    graph: &CatalogGraph,
    families: &[String],
    budget: &Money,
    min_users: i64,
    days: u32,
) -> Option<Money> {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        graph: &CatalogGraph,
        families: &[String],
        acc_cost: i64,
        acc_cap: Option<i64>,
        days: u32,
        best: &mut Option<i64>,
        budget: i64,
        min_users: i64,
    ) {
        let Some((family, rest)) = families.split_first() else {
            if acc_cost <= budget && acc_cap.is_some_and(|c| c >= min_users) {
                *best = Some(best.map_or(acc_cost, |b| b.min(acc_cost)));
            }
            return;
        };
        for o in graph.offerings_named(family) {
            let cost = match o.cost_period {
                CostPeriod::PerDay => o.unit_cost.amount * i64::from(days),
                CostPeriod::Once => o.unit_cost.amount,
            };
            let cap = match (acc_cap, o.capacity()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            walk(graph, rest, acc_cost + cost, cap, days, best, budget, min_users);
        }
    }
    let mut best = None;
    walk(graph, families, 0, None, days, &mut best, budget.amount, min_users);
    best.map(Money::eur_cents)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub correct_composition: u32,
    pub composition_of: u32,
    pub hallucinated_products: u32,
    pub correct_total_cost: PassFail,
    pub correct_duration: PassFail,
    pub confirmed_payload: bool,
}

pub fn classify_baseline(m: &Metrics) -> Baseline {
    if !m.confirmed_payload {
        return Baseline::Fail;
    }
    let all = m.correct_composition == m.composition_of
        && m.hallucinated_products == 0
        && m.correct_total_cost == PassFail::Pass
        && m.correct_duration == PassFail::Pass;
    if all {
        Baseline::Pass
    } else {
        Baseline::Partial
    }
}

fn payload_period(payload: &Value) -> Option<(NaiveDate, NaiveDate)> {
    let item = payload.get("orderItems")?.as_array()?.first()?;
    let start = NaiveDate::parse_from_str(item.pointer("/validFor/startDate")?.as_str()?, "%Y-%m-%d").ok()?;
    let end = NaiveDate::parse_from_str(item.pointer("/validFor/endDate")?.as_str()?, "%Y-%m-%d").ok()?;
    Some((start, end))
}

/// Recomputes the metrics from a stored record. Pure.
pub fn score(record: &BenchRecord, scenario: &Scenario, graph: &CatalogGraph) -> BenchResult {
    let s = &record.session;
    let gt = &scenario.ground_truth;
    let truth = scenario.ground_truth_families(graph);
    let comp = score_composition(&final_bundle(s, graph), &truth, s);

    let oracle = min_feasible_cost(graph, &truth, &gt.budget, gt.min_users, gt.days);
    let cost_ok = oracle.is_some() && s.draft.quoted_cost == oracle;

    let payload = s.finalized.as_ref().map(|f| &f.order_payload).or(s.draft.order_payload.as_ref());
    let duration_ok = payload.and_then(payload_period).is_some_and(|(start, end)| {
        (end - start).num_days() + 1 == i64::from(gt.days) && gt.start_date.is_none_or(|d| d == start)
    });

    let metrics = Metrics {
        correct_composition: comp.correct,
        composition_of: comp.of,
        hallucinated_products: comp.hallucinated,
        correct_total_cost: PassFail::from_bool(cost_ok),
        correct_duration: PassFail::from_bool(duration_ok),
        confirmed_payload: s.finalized.is_some(),
    };
    let used_tools = s.used_tools();
    let baseline = classify_baseline(&metrics);
    let failure_reason = record.failure_reason.clone().or_else(|| {
        (baseline == Baseline::Fail).then(|| match s.task_list.tasks.iter().find(|t| t.state != TaskState::Completed) {
            Some(t) => format!("no confirmed order; stopped at {} ({})", t.task_id, t.state),
            None => "no confirmed order".to_string(),
        })
    });
    BenchResult {
        backend_id: record.backend_id.clone(),
        backend_family: record.backend_family,
        correct_composition: metrics.correct_composition,
        composition_of: metrics.composition_of,
        hallucinated_products: metrics.hallucinated_products,
        correct_total_cost: metrics.correct_total_cost,
        correct_duration: metrics.correct_duration,
        baseline_achievement: baseline,
        dialogue_time_seconds: used_tools.then_some(record.dialogue_time_seconds),
        total_tokens: used_tools.then(|| s.total_tokens()),
        failure_reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Table => "md",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("unknown report format `{0}`; expected table, json or csv")]
    UnknownFormat(String),
    #[error("a report needs at least one result")]
    Empty,
    #[error("writing report: {0}")]
    Io(String),
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

pub const TABLE_COLUMNS: [&str; 8] = [
    "Backend",
    "Correct Product Composition",
    "Hallucinated Products",
    "Correct Total Cost",
    "Correct Duration",
    "Baseline Achievement",
    "Total Dialogue Time (s)",
    "Total Tokens",
];

fn row(r: &BenchResult) -> [String; 8] {
    [
        r.backend_id.clone(),
        r.composition(),
        r.hallucinated_products.to_string(),
        r.correct_total_cost.to_string(),
        r.correct_duration.to_string(),
        r.baseline_achievement.to_string(),
        r.dialogue_time_seconds.map(|t| format!("{t:.2}")).unwrap_or_default(),
        r.total_tokens.map(|t| t.to_string()).unwrap_or_default(),
    ]
}

pub fn emit_report(results: &[BenchResult], format: ReportFormat) -> Result<String, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(results).expect("results serialize")),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<&str> = TABLE_COLUMNS.to_vec();
            header.push("Failure Reason");
            w.write_record(&header).map_err(|e| ReportError::Io(e.to_string()))?;
            for r in results {
                let mut fields = row(r).to_vec();
                fields.push(r.failure_reason.clone().unwrap_or_default());
                w.write_record(&fields).map_err(|e| ReportError::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| ReportError::Io(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        ReportFormat::Table => {
            let mut out = format!("| {} |\n", TABLE_COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(TABLE_COLUMNS.len())));
            for (family, title) in [
                (BackendFamily::Reasoning, "Reasoning backends"),
                (BackendFamily::NonReasoning, "Non-reasoning backends"),
            ] {
                let group: Vec<&BenchResult> = results.iter().filter(|r| r.backend_family == family).collect();
                if group.is_empty() {
                    continue;
                }
                out.push_str(&format!("| *{title}* |{}\n", " |".repeat(TABLE_COLUMNS.len() - 1)));
                for r in group {
                    out.push_str(&format!("| {} |\n", row(r).join(" | ")));
                }
            }
            Ok(out)
        }
    }
}

/// Writes a report under `dir` as `bench-<UTC timestamp>.<ext>`.
pub fn write_report(
    dir: impl AsRef<Path>,
    results: &[BenchResult],
    format: ReportFormat,
    at: DateTime<Utc>,
) -> Result<PathBuf, ReportError> {
    let doc = emit_report(results, format)?;
    std::fs::create_dir_all(dir.as_ref()).map_err(|e| ReportError::Io(e.to_string()))?;
    let path = dir.as_ref().join(format!("bench-{}.{}", at.format("%Y%m%dT%H%M%SZ"), format.extension()));
    std::fs::write(&path, doc).map_err(|e| ReportError::Io(e.to_string()))?;
    Ok(path)
}

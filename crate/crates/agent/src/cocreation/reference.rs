//! Table-driven reasoner with no randomness. Reads only the session and
//! the results of its own tool calls.

use std::sync::LazyLock;

use chrono::Days;
use intentforge_core::Money;
use regex::Regex;
use serde_json::{json, Map, Value};

use super::reasoner::{BackendFamily, Capabilities, Effect, Reasoner, ReasonerError, ReasonerOutput, ReasonerView};
use super::session::{Session, ToolRecord};
use super::tasks::TaskKind;
use super::tools::{LIST_OFFERINGS, PREPARE_ORDER, PROPOSE_BUNDLES, QUOTE, SUBMIT_ORDER};

static CHEAPER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(cheaper|affordable|less expensive|lower (?:cost|price)|too expensive|over (?:my |the )?budget|out of (?:my |the )?budget|alternative)").unwrap()
});

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    /// Highest capacity, then the higher tiers.
    Widest,
    /// Ranked first: cheapest satisfying bundle.
    Cheapest,
    /// Ranked first, only if it satisfies the constraints.
    FirstSatisfied,
}

#[derive(Debug, Clone)]
pub struct ReferenceReasoner {
    id: String,
    family: BackendFamily,
    /// Days added to the inclusive end date of prepared orders.
    end_date_skew: u64,
}

impl Default for ReferenceReasoner {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceReasoner {
    pub fn new() -> Self {
        ReferenceReasoner { id: "reference".into(), family: BackendFamily::Reasoning, end_date_skew: 0 }
    }

    /// Same policy, but prepared orders run `skew` days too long.
    pub(crate) fn with_end_date_skew(id: &str, skew: u64) -> Self {
        ReferenceReasoner { id: id.into(), family: BackendFamily::Reasoning, end_date_skew: skew }
    }

    fn decide(&self, view: &ReasonerView<'_>) -> Effect {
        let s = view.session;
        let Some(task) = view.task else {
            return if s.task_list.all_completed() {
                Effect::Finalize
            } else {
                Effect::reply("Tell me how you would like to continue.")
            };
        };
        let since = task.started_at.unwrap_or(0);
        let goal = s.goal.as_ref();
        match task.kind {
            TaskKind::Discovery => Effect::tool(LIST_OFFERINGS, json!({})),
            TaskKind::BundleProposal => self.propose_and_quote(s, since, Choice::Widest),
            TaskKind::Reconciliation => {
                let sized = goal.is_some_and(|g| g.budget().is_some() || g.min_users().is_some());
                let wants_cheaper = s.last_user_turn().is_some_and(|t| CHEAPER.is_match(&t.content));
                if sized {
                    self.propose_and_quote(s, since, Choice::FirstSatisfied)
                } else if wants_cheaper {
                    self.propose_and_quote(s, since, Choice::Cheapest)
                } else {
                    Effect::reply(
                        "To fit the proposal to your needs I need your maximum budget and the number of \
                         simultaneous users.",
                    )
                }
            }
            TaskKind::CostQuote => match last_result(s, since, QUOTE) {
                None => {
                    let days = goal.and_then(|g| g.duration_days()).unwrap_or(1);
                    Effect::tool(
                        QUOTE,
                        json!({
                            "offeringIds": s.draft.offering_ids(),
                            "days": days,
                            "characteristics": characteristics(s),
                        }),
                    )
                }
                Some(q) => {
                    let period = goal.and_then(|g| g.period());
                    let total = str_field(q, "display");
                    match period {
                        Some(p) => Effect::reply(format!(
                            "For {} to {} ({} days) the total is {total}.",
                            p.start_date,
                            p.end_date(),
                            p.days
                        )),
                        None => Effect::reply(format!("The total is {total}.")),
                    }
                }
            },
            TaskKind::OrderSerialization => match last_result(s, since, PREPARE_ORDER) {
                None => match goal.and_then(|g| g.period()) {
                    Some(p) => {
                        let end = p.end_date() + Days::new(self.end_date_skew);
                        Effect::tool(
                            PREPARE_ORDER,
                            json!({ "startDate": p.start_date.to_string(), "endDate": end.to_string() }),
                        )
                    }
                    None => Effect::reply("I need the start date and duration before preparing the order."),
                },
                Some(r) => Effect::reply(payload_text(r)),
            },
            TaskKind::Confirmation => {
                if !s.draft.confirmed {
                    Effect::reply("The order is prepared and waits for your confirmation.")
                } else if last_result(s, since, SUBMIT_ORDER).is_none() {
                    Effect::tool(SUBMIT_ORDER, json!({}))
                } else {
                    Effect::reply("The order has been placed.")
                }
            }
        }
    }

    fn propose_and_quote(&self, s: &Session, since: usize, choice: Choice) -> Effect {
        let goal = s.goal.as_ref();
        let Some(days) = goal.and_then(|g| g.duration_days()) else {
            return Effect::reply("For how many days do you need the bundle?");
        };
        let Some((propose_turn, proposals)) = s.tool_results_since(since, PROPOSE_BUNDLES).last().copied() else {
            let mut args = json!({ "days": days, "limit": 36 });
            if choice == Choice::FirstSatisfied {
                if let Some(b) = goal.and_then(|g| g.budget()) {
                    args["budget"] = euros(&b);
                }
                if let Some(u) = goal.and_then(|g| g.min_users()) {
                    args["minUsers"] = json!(u);
                }
            }
            return Effect::tool(PROPOSE_BUNDLES, args);
        };
        if let Some(q) = last_result(s, propose_turn, QUOTE) {
            let note = match choice {
                Choice::Widest => "This combination offers the highest concurrent-user capacity in the catalog.".into(),
                Choice::Cheapest => {
                    "This is the lowest-cost combination in the catalog. Share a budget and a user count and I \
                     will fit the proposal to them."
                        .into()
                }
                Choice::FirstSatisfied => {
                    let mut parts = Vec::new();
                    if let Some(b) = goal.and_then(|g| g.budget()) {
                        parts.push(format!("stays within {b}"));
                    }
                    if let Some(u) = goal.and_then(|g| g.min_users()) {
                        parts.push(format!("supports at least {u} simultaneous users"));
                    }
                    format!("This is the lowest-cost combination that {}.", parts.join(" and "))
                }
            };
            return Effect::reply(format!("{}\n{note}", bundle_text(q)));
        }
        let list: Vec<&Value> = proposals
            .result
            .as_ref()
            .and_then(|r| r.get("proposals"))
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .collect();
        let picked = match choice {
            Choice::Widest => list.iter().copied().max_by(|a, b| {
                let cap = |v: &Value| v.get("capacity").and_then(Value::as_i64).unwrap_or(0);
                let cost = |v: &Value| v["totalCost"]["amount"].as_i64().unwrap_or(0);
                cap(a).cmp(&cap(b)).then(cost(a).cmp(&cost(b)))
            }),
            Choice::Cheapest => list.first().copied(),
            Choice::FirstSatisfied => list.first().copied().filter(|p| p["satisfied"].as_bool() == Some(true)),
        };
        match picked {
            Some(p) => Effect::tool(
                QUOTE,
                json!({ "offeringIds": p["selections"], "days": days, "characteristics": characteristics(s) }),
            ),
            None => Effect::reply("No combination of catalog offerings meets these limits."),
        }
    }
}

impl Reasoner for ReferenceReasoner {
    fn id(&self) -> &str {
        &self.id
    }

    fn family(&self) -> BackendFamily {
        self.family
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: true, max_turn_tokens: 4096 }
    }

    fn next(&mut self, view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        Ok(self.decide(view).into())
    }
}

fn last_result<'s>(s: &'s Session, since: usize, name: &str) -> Option<&'s ToolRecord> {
    s.tool_results_since(since, name).last().map(|(_, r)| *r)
}

fn str_field(r: &ToolRecord, key: &str) -> String {
    r.result.as_ref().and_then(|v| v.get(key)).and_then(Value::as_str).unwrap_or_default().to_string()
}

fn euros(m: &Money) -> Value {
    if m.amount % 100 == 0 {
        json!(m.amount / 100)
    } else {
        json!(m.amount as f64 / 100.0)
    }
}

fn characteristics(s: &Session) -> Value {
    let mut map = Map::new();
    if let Some(city) = s.goal.as_ref().and_then(|g| g.location()) {
        map.insert("cityName".into(), json!(city));
    }
    Value::Object(map)
}

fn bundle_text(q: &ToolRecord) -> String {
    let r = q.result.as_ref().cloned().unwrap_or_default();
    let mut out = String::from("Proposed bundle from the catalog:\n");
    for line in r["lines"].as_array().into_iter().flatten() {
        out.push_str(&format!(
            "- {} ({}), {}\n",
            line["name"].as_str().unwrap_or_default(),
            line["tier"].as_str().unwrap_or_default(),
            line["unitDisplay"].as_str().unwrap_or_default()
        ));
    }
    out.push_str(&format!("Total for {} days: {}.", r["days"], r["display"].as_str().unwrap_or_default()));
    out
}

fn payload_text(r: &ToolRecord) -> String {
    let v = r.result.as_ref().cloned().unwrap_or_default();
    let payload = &v["payload"];
    let items = payload["orderItems"].as_array().cloned().unwrap_or_default();
    let (start, end) = items
        .first()
        .map(|i| {
            (
                i["validFor"]["startDate"].as_str().unwrap_or_default().to_string(),
                i["validFor"]["endDate"].as_str().unwrap_or_default().to_string(),
            )
        })
        .unwrap_or_default();
    format!(
        "The order payload is ready:\n- items: {}\n- valid from {start} to {end} ({} days)\nTotal: {}. Please confirm \
         to place the order.",
        items.len(),
        v["days"],
        v["display"].as_str().unwrap_or_default()
    )
}

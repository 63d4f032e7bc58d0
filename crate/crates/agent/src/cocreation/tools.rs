//! Tool handlers: the reasoner's only route to the catalog and to ordering.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use intentforge_core::catalog::{find_offerings, CatalogGraph, CostPeriod};
use intentforge_core::traversal::{
    compute_cost, default_families, propose_bundles, IntentConstraints, OfferingSelection, Period,
};
use intentforge_core::{Money, Scalar};
use serde::Serialize;
use serde_json::{json, Value};

use super::goal::StructuredGoal;
use super::session::{DraftIntent, SubmittedOrder};

pub const LIST_OFFERINGS: &str = "catalog.list_offerings";
pub const GET_OFFERING: &str = "catalog.get_offering";
pub const PROPOSE_BUNDLES: &str = "catalog.propose_bundles";
pub const QUOTE: &str = "pricing.quote";
pub const PREPARE_ORDER: &str = "order.prepare";
pub const SUBMIT_ORDER: &str = "order.submit";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub argument_schema: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("tool `{0}` is not available in this session")]
    NotExposed(String),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Session state a handler may read or change.
pub struct ToolContext<'a> {
    pub graph: &'a CatalogGraph,
    pub goal: Option<&'a StructuredGoal>,
    pub draft: &'a mut DraftIntent,
    pub submitted: &'a mut Vec<SubmittedOrder>,
    pub intent_id: &'a str,
    /// Transcript index the call will occupy.
    pub turn: usize,
}

type Handler = fn(&Value, &mut ToolContext<'_>) -> Result<Value, ToolError>;

struct Tool {
    spec: ToolSpec,
    handler: Handler,
}

pub struct ToolRegistry {
    tools: BTreeMap<&'static str, Tool>,
    exposed: BTreeSet<&'static str>,
    specs: Vec<ToolSpec>,
}

impl ToolRegistry {
    /// Every tool, all exposed.
    pub fn standard() -> Self {
        let tools: Vec<Tool> = vec![
            Tool {
                spec: ToolSpec {
                    name: LIST_OFFERINGS,
                    description: "List catalog offerings, optionally filtered by a name or tier substring.",
                    argument_schema: json!({"type": "object", "properties": {"query": {"type": "string"}}}),
                },
                handler: list_offerings,
            },
            Tool {
                spec: ToolSpec {
                    name: GET_OFFERING,
                    description: "Fetch one offering with its characteristics and price.",
                    argument_schema: json!({"type": "object", "properties": {"offeringId": {"type": "string"}},
                        "required": ["offeringId"]}),
                },
                handler: get_offering,
            },
            Tool {
                spec: ToolSpec {
                    name: PROPOSE_BUNDLES,
                    description: "Rank every combination of one offering per family against budget (EUR) \
                                  and minimum concurrent users.",
                    argument_schema: json!({"type": "object", "properties": {
                        "days": {"type": "integer", "minimum": 1},
                        "budget": {"type": "number"},
                        "minUsers": {"type": "integer"},
                        "limit": {"type": "integer", "minimum": 1}},
                        "required": ["days"]}),
                },
                handler: propose,
            },
            Tool {
                spec: ToolSpec {
                    name: QUOTE,
                    description: "Price a set of offerings for a number of days and make it the draft selection.",
                    argument_schema: json!({"type": "object", "properties": {
                        "offeringIds": {"type": "array", "items": {"type": "string"}},
                        "days": {"type": "integer", "minimum": 1},
                        "characteristics": {"type": "object"}},
                        "required": ["offeringIds", "days"]}),
                },
                handler: quote,
            },
            Tool {
                spec: ToolSpec {
                    name: PREPARE_ORDER,
                    description: "Build the order payload for the quoted selection over an inclusive date range.",
                    argument_schema: json!({"type": "object", "properties": {
                        "startDate": {"type": "string", "format": "date"},
                        "endDate": {"type": "string", "format": "date"}},
                        "required": ["startDate", "endDate"]}),
                },
                handler: prepare,
            },
            Tool {
                spec: ToolSpec {
                    name: SUBMIT_ORDER,
                    description: "Submit the prepared order. Requires the operator's explicit confirmation.",
                    argument_schema: json!({"type": "object", "properties": {}}),
                },
                handler: submit,
            },
        ];
        let exposed = tools.iter().map(|t| t.spec.name).collect();
        let mut reg =
            ToolRegistry { tools: tools.into_iter().map(|t| (t.spec.name, t)).collect(), exposed, specs: Vec::new() };
        reg.refresh_specs();
        reg
    }

    /// Restricts the exposed set; unknown names are ignored.
    pub fn exposing(mut self, names: &[&str]) -> Self {
        self.exposed = self.tools.keys().copied().filter(|k| names.contains(k)).collect();
        self.refresh_specs();
        self
    }

    fn refresh_specs(&mut self) {
        self.specs =
            self.tools.values().filter(|t| self.exposed.contains(t.spec.name)).map(|t| t.spec.clone()).collect();
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }

    pub fn call(&self, name: &str, args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
        let tool = self
            .tools
            .get(name)
            .filter(|t| self.exposed.contains(t.spec.name))
            .ok_or_else(|| ToolError::NotExposed(name.to_string()))?;
        (tool.handler)(args, ctx)
    }
}

fn arg_str<'v>(args: &'v Value, key: &str) -> Result<&'v str, ToolError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::InvalidArguments(format!("`{key}` must be a string")))
}

fn arg_days(args: &Value) -> Result<u32, ToolError> {
    args.get("days")
        .and_then(Value::as_u64)
        .filter(|d| (1..=3660).contains(d))
        .map(|d| d as u32)
        .ok_or_else(|| ToolError::InvalidArguments("`days` must be an integer between 1 and 3660".into()))
}

fn arg_date(args: &Value, key: &str) -> Result<NaiveDate, ToolError> {
    let s = arg_str(args, key)?;
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| ToolError::InvalidArguments(format!("`{key}` must be an ISO date, got `{s}`")))
}

fn list_offerings(args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
    let query = args.get("query").and_then(Value::as_str);
    Ok(json!({ "offerings": find_offerings(ctx.graph, query) }))
}

fn get_offering(args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
    let id = arg_str(args, "offeringId")?;
    let o = ctx.graph.offering(id).ok_or_else(|| ToolError::NotFound(format!("offering `{id}`")))?;
    Ok(serde_json::to_value(o).expect("offering serializes"))
}

fn label(graph: &CatalogGraph, id: &str) -> String {
    graph.offering(id).map(|o| format!("{} ({})", o.name, o.tier)).unwrap_or_else(|| id.to_string())
}

fn propose(args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
    let days = arg_days(args)?;
    let budget = match args.get("budget") {
        None | Some(Value::Null) => None,
        Some(v @ Value::Number(_)) => Some(
            Money::parse_eur(&v.to_string())
                .ok_or_else(|| ToolError::InvalidArguments("`budget` must be a positive amount in EUR".into()))?,
        ),
        Some(_) => return Err(ToolError::InvalidArguments("`budget` must be a number".into())),
    };
    let min_users = match args.get("minUsers") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_i64().ok_or_else(|| ToolError::InvalidArguments("`minUsers` must be an integer".into()))?),
    };
    let limit = args.get("limit").and_then(Value::as_u64).unwrap_or(5).max(1) as usize;
    let constraints = IntentConstraints { budget, min_concurrent_users: min_users, latency_ceiling_ms: None };
    let proposals = propose_bundles(ctx.graph, &default_families(), &constraints, days);
    let feasible = proposals.iter().filter(|p| p.satisfied).count();
    let listed: Vec<Value> = proposals
        .iter()
        .take(limit)
        .map(|p| {
            json!({
                "selections": p.selections,
                "labels": p.selections.iter().map(|id| label(ctx.graph, id)).collect::<Vec<_>>(),
                "totalCost": p.total_cost,
                "display": p.total_cost.to_string(),
                "capacity": p.capacity,
                "satisfied": p.satisfied,
                "violations": p.violations,
            })
        })
        .collect();
    Ok(json!({ "days": days, "feasible": feasible, "total": proposals.len(), "proposals": listed }))
}

/// A submitted order freezes the draft.
fn ensure_unsubmitted(ctx: &ToolContext<'_>) -> Result<(), ToolError> {
    match ctx.submitted.last() {
        Some(o) => Err(ToolError::Precondition(format!("order {} has already been submitted", o.order_id))),
        None => Ok(()),
    }
}

fn quote(args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
    ensure_unsubmitted(ctx)?;
    let days = arg_days(args)?;
    let ids: Vec<String> = args
        .get("offeringIds")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    if ids.is_empty() {
        return Err(ToolError::InvalidArguments("`offeringIds` must list at least one offering".into()));
    }
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(ToolError::InvalidArguments("`offeringIds` contains duplicates".into()));
    }
    let provided: BTreeMap<String, Scalar> = match args.get("characteristics") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| ToolError::InvalidArguments(format!("`characteristics`: {e}")))?,
    };
    let mut selections = Vec::new();
    let mut lines = Vec::new();
    for id in &ids {
        let o = ctx.graph.offering(id).ok_or_else(|| ToolError::NotFound(format!("offering `{id}`")))?;
        let mut sel = OfferingSelection::new(id.clone());
        for spec in &o.characteristics {
            let value = match (provided.get(&spec.name), &spec.default_value) {
                (Some(v), _) => v.clone(),
                (None, Some(d)) => d.clone(),
                (None, None) => continue,
            };
            spec.admits(&value).map_err(|e| ToolError::InvalidArguments(format!("{id}: {e}")))?;
            sel.characteristic_values.insert(spec.name.clone(), value);
        }
        let subtotal = compute_cost(ctx.graph, [id], days).expect("offering exists");
        lines.push(json!({
            "offeringId": id,
            "name": o.name,
            "tier": o.tier,
            "unitCost": o.unit_cost,
            "costPeriod": o.cost_period,
            "unitDisplay": format!("{} {}", o.unit_cost, match o.cost_period {
                CostPeriod::PerDay => "per day",
                CostPeriod::Once => "once",
            }),
            "subtotal": subtotal,
        }));
        selections.push(sel);
    }
    let total = compute_cost(ctx.graph, &ids, days).expect("offerings exist");
    let draft = &mut *ctx.draft;
    draft.offering_selections = selections;
    draft.constraints = ctx.goal.map(StructuredGoal::intent_constraints).unwrap_or_default();
    draft.quoted_cost = Some(total.clone());
    draft.quote_days = Some(days);
    draft.quote_turn = Some(ctx.turn);
    draft.order_payload = None;
    draft.payload_turn = None;
    draft.period = None;
    draft.unconfirm();
    Ok(json!({
        "offeringIds": ids,
        "days": days,
        "lines": lines,
        "totalCost": total,
        "display": total.to_string(),
    }))
}

/// The order payload for the draft's selections over `period`.
pub fn order_payload(graph: &CatalogGraph, intent_id: &str, draft: &DraftIntent, period: Period) -> (Value, Money) {
    let total = compute_cost(graph, draft.offering_ids(), period.days).expect("draft selections resolve");
    let items: Vec<Value> = draft
        .offering_selections
        .iter()
        .map(|s| {
            json!({
                "offeringId": s.offering_id,
                "characteristics": s.characteristic_values,
                "validFor": {
                    "startDate": period.start_date.to_string(),
                    "endDate": period.end_date().to_string(),
                },
            })
        })
        .collect();
    (json!({ "intentId": intent_id, "orderItems": items, "totalCost": total }), total)
}

fn prepare(args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
    ensure_unsubmitted(ctx)?;
    if ctx.draft.offering_selections.is_empty() || ctx.draft.quoted_cost.is_none() {
        return Err(ToolError::Precondition("nothing has been quoted yet".into()));
    }
    let start = arg_date(args, "startDate")?;
    let end = arg_date(args, "endDate")?;
    if end < start {
        return Err(ToolError::InvalidArguments("`endDate` precedes `startDate`".into()));
    }
    let days = u32::try_from((end - start).num_days() + 1)
        .ok()
        .filter(|d| *d <= 3660)
        .ok_or_else(|| ToolError::InvalidArguments("period too long".into()))?;
    let period = Period { start_date: start, days };
    let (payload, total) = order_payload(ctx.graph, ctx.intent_id, ctx.draft, period);
    let draft = &mut *ctx.draft;
    draft.period = Some(period);
    draft.order_payload = Some(payload.clone());
    draft.payload_turn = Some(ctx.turn);
    draft.unconfirm();
    Ok(json!({ "payload": payload, "days": days, "display": total.to_string() }))
}

fn submit(_args: &Value, ctx: &mut ToolContext<'_>) -> Result<Value, ToolError> {
    ensure_unsubmitted(ctx)?;
    let payload = ctx.draft.order_payload.clone().ok_or_else(|| ToolError::Precondition("no prepared order".into()))?;
    if !ctx.draft.confirmed {
        return Err(ToolError::Precondition("the order has not been confirmed".into()));
    }
    let order_id = format!("order-{}-{}", ctx.intent_id, ctx.submitted.len() + 1);
    ctx.submitted.push(SubmittedOrder { order_id: order_id.clone(), turn: ctx.turn, payload });
    Ok(json!({ "orderId": order_id, "status": "accepted" }))
}

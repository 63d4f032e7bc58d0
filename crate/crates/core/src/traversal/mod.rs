//! Intent-to-actions traversal: offering → product spec → services → resources,
//! collecting test specs on the way.

mod bundles;
mod intent;
mod walk;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical_bytes};
use crate::catalog::{CatalogGraph, Comparator, CostPeriod, Domain, TestKind};
use crate::money::Money;
use crate::rules::EvalError;
use crate::scalar::Scalar;

pub use bundles::{default_families, propose_bundles, BundleProposal, BundleViolation};
pub use intent::{Confirmation, ConfirmedIntent, IntentConstraints, OfferingSelection, Period};
pub use walk::{Stage, TraceEntry};

/// Bound reference used for tests that have no order item to attach to.
pub const PLAN_ROOT: &str = "plan";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraversalError {
    #[error("unknown offering `{id}`")]
    UnknownOffering { id: String },
    #[error("invalid intent: {detail}")]
    InvalidIntent { detail: String },
    #[error("{} references missing id `{missing}`", path.join(" > "))]
    Dangling { path: Vec<String>, missing: String },
    #[error("rule evaluation failed at {}: {error}", path.join(" > "))]
    Rule { path: Vec<String>, error: EvalError },
    #[error("test spec {test_spec} threshold references `{characteristic}`, unbound at {}", path.join(" > "))]
    UnresolvableThreshold { test_spec: String, characteristic: String, path: Vec<String> },
    #[error("plan was built against catalog {plan}, graph is {graph}")]
    VersionMismatch { plan: String, graph: String },
    #[error("plan content does not match a replay of its selections: {detail}")]
    PlanMismatch { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceOrder {
    pub order_id: String,
    pub service_spec_id: String,
    pub offering_id: String,
    pub resolved_characteristics: BTreeMap<String, Scalar>,
    /// Parent service order; `None` at the top of a product decomposition.
    pub parent_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceOrder {
    pub order_id: String,
    pub resource_spec_id: String,
    pub offering_id: String,
    pub domain: Domain,
    pub resolved_characteristics: BTreeMap<String, Scalar>,
    pub parent_service_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivedTest {
    pub test_id: String,
    pub test_spec_id: String,
    pub bound_ref: String,
    pub kind: TestKind,
    pub target_metric: String,
    pub comparator: Comparator,
    pub resolved_threshold: Scalar,
    pub window_ticks: u32,
}

impl DerivedTest {
    /// Whether an observed sample satisfies the threshold.
    pub fn passes(&self, observed: &Scalar) -> bool {
        match (observed.as_number(), self.resolved_threshold.as_number()) {
            (Some(o), Some(t)) => self.comparator.holds(&o, &t),
            _ => matches!(self.comparator, Comparator::Eq) && observed == &self.resolved_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrchestrationPlan {
    pub plan_id: String,
    pub intent_id: String,
    pub catalog_version: String,
    pub offering_selections: Vec<OfferingSelection>,
    pub days: u32,
    pub service_orders: Vec<ServiceOrder>,
    pub resource_orders: Vec<ResourceOrder>,
    pub derived_tests: Vec<DerivedTest>,
    pub total_cost: Money,
    /// SHA-256 of the canonical serialization with this field empty.
    pub canonical_digest: String,
}

impl OrchestrationPlan {
    pub fn compute_digest(&self) -> String {
        let mut unsigned = self.clone();
        unsigned.canonical_digest = String::new();
        sha256_hex(&to_canonical_bytes(&unsigned))
    }

    pub fn digest_matches(&self) -> bool {
        self.compute_digest() == self.canonical_digest
    }

    pub fn to_canonical_json(&self) -> String {
        String::from_utf8(to_canonical_bytes(self)).expect("canonical JSON is UTF-8")
    }

    pub fn service_order(&self, order_id: &str) -> Option<&ServiceOrder> {
        self.service_orders.iter().find(|o| o.order_id == order_id)
    }

    pub fn resource_order(&self, order_id: &str) -> Option<&ResourceOrder> {
        self.resource_orders.iter().find(|o| o.order_id == order_id)
    }

    pub fn has_item(&self, order_id: &str) -> bool {
        order_id == PLAN_ROOT || self.service_order(order_id).is_some() || self.resource_order(order_id).is_some()
    }
}

/// Deterministically decomposes a confirmed intent into orders and tests.
pub fn build_plan(graph: &CatalogGraph, intent: &ConfirmedIntent) -> Result<OrchestrationPlan, TraversalError> {
    intent.check(graph)?;
    let out = walk::walk(graph, &intent.offering_selections, false)?;
    let total_cost =
        compute_cost(graph, intent.offering_selections.iter().map(|s| &s.offering_id), intent.period.days)?;
    let mut plan = OrchestrationPlan {
        plan_id: format!("plan-{}", intent.intent_id),
        intent_id: intent.intent_id.clone(),
        catalog_version: graph.version.clone(),
        offering_selections: intent.offering_selections.clone(),
        days: intent.period.days,
        service_orders: out.service_orders,
        resource_orders: out.resource_orders,
        derived_tests: out.derived_tests,
        total_cost,
        canonical_digest: String::new(),
    };
    plan.canonical_digest = plan.compute_digest();
    Ok(plan)
}

/// Replays the traversal behind `plan`, returning every visited node with
/// its stage and the rules that fired there.
pub fn explain_plan(plan: &OrchestrationPlan, graph: &CatalogGraph) -> Result<Vec<TraceEntry>, TraversalError> {
    if plan.catalog_version != graph.version {
        return Err(TraversalError::VersionMismatch {
            plan: plan.catalog_version.clone(),
            graph: graph.version.clone(),
        });
    }
    let out = walk::walk(graph, &plan.offering_selections, true)?;
    if out.service_orders != plan.service_orders
        || out.resource_orders != plan.resource_orders
        || out.derived_tests != plan.derived_tests
    {
        return Err(TraversalError::PlanMismatch { detail: "orders or tests differ".into() });
    }
    Ok(out.trace)
}

/// Sum of offering prices: per-day items times `days`, one-off items once.
pub fn compute_cost<I, S>(graph: &CatalogGraph, offering_ids: I, days: u32) -> Result<Money, TraversalError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut total = Money::zero();
    for id in offering_ids {
        let id = id.as_ref();
        let o = graph.offering(id).ok_or_else(|| TraversalError::UnknownOffering { id: id.to_string() })?;
        total = total
            + match o.cost_period {
                CostPeriod::PerDay => o.unit_cost.times(i64::from(days)),
                CostPeriod::Once => o.unit_cost.clone(),
            };
    }
    Ok(total)
}

#![allow(dead_code)]

use chrono::NaiveDate;
use intentforge_core::catalog::fixture;
use intentforge_core::traversal::{
    build_plan, Confirmation, ConfirmedIntent, IntentConstraints, OfferingSelection, OrchestrationPlan, Period,
};

pub const GROUND_TRUTH: [&str; 4] =
    ["po-slice-gold", "po-edge-cache-large", "po-setup-vpn-standard", "po-slice-observability-admin"];

pub fn plan_of(ids: &[&str], days: u32) -> OrchestrationPlan {
    let intent = ConfirmedIntent {
        intent_id: format!("intent-{}", ids.join("+")),
        offering_selections: ids.iter().map(|id| OfferingSelection::new(*id)).collect(),
        constraints: IntentConstraints::default(),
        period: Period { start_date: NaiveDate::from_ymd_opt(2026, 6, 1).unwrap(), days },
        confirmation: Confirmation { confirmed_by: "operator".into(), transcript_ref: "turn-5".into() },
    };
    build_plan(&fixture(), &intent).unwrap()
}

pub fn ground_truth() -> OrchestrationPlan {
    plan_of(&GROUND_TRUTH, 7)
}

/// Recomputes the digest after a test edits the plan.
pub fn resign(mut plan: OrchestrationPlan) -> OrchestrationPlan {
    plan.canonical_digest = plan.compute_digest();
    plan
}

pub fn empty_plan() -> OrchestrationPlan {
    let mut p = ground_truth();
    p.plan_id = "plan-empty".into();
    p.service_orders.clear();
    p.resource_orders.clear();
    p.derived_tests.clear();
    resign(p)
}

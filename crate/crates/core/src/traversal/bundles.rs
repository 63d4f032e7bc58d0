use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::catalog::CatalogGraph;
use crate::money::Money;
use crate::traversal::{compute_cost, IntentConstraints};

/// Offering families that make up a complete media-event bundle.
pub fn default_families() -> Vec<String> {
    ["On-demand Network Slice", "Edge Media Cache Server", "Service Setup and VPN", "Network Slice Observability"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "camelCase")]
pub enum BundleViolation {
    Budget {
        limit: Money,
        cost: Money,
    },
    #[serde(rename_all = "camelCase")]
    Capacity {
        required: i64,
        available: Option<i64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BundleProposal {
    /// One offering id per family, in family order.
    pub selections: Vec<String>,
    pub total_cost: Money,
    /// Minimum capacity over the capacity-bearing items.
    pub capacity: Option<i64>,
    pub satisfied: bool,
    pub violations: Vec<BundleViolation>,
}

/// Enumerates every tier combination (one offering per family) and ranks
/// them: satisfied first, then cheaper, then by selection ids.
///
/// Infeasible combinations stay in the list with their violations so a
/// caller can still offer a best effort. Families with no offerings yield
/// an empty list.
pub fn propose_bundles(
    graph: &CatalogGraph,
    families: &[String],
    constraints: &IntentConstraints,
    days: u32,
) -> Vec<BundleProposal> {
    let options: Vec<Vec<String>> =
        families.iter().map(|f| graph.offerings_named(f).into_iter().map(|o| o.id.clone()).collect()).collect();
    if options.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut combos: Vec<Vec<String>> = vec![Vec::new()];
    for opts in &options {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |id| {
                    let mut next = prefix.clone();
                    next.push(id.clone());
                    next
                })
            })
            .collect();
    }

    let mut out: Vec<BundleProposal> = combos
        .into_iter()
        .map(|selections| {
            let total_cost = compute_cost(graph, &selections, days).expect("selections come from the graph");
            let capacity = selections.iter().filter_map(|id| graph.offering(id).and_then(|o| o.capacity())).min();
            let mut violations = Vec::new();
            if let Some(limit) = &constraints.budget {
                if total_cost.amount > limit.amount {
                    violations.push(BundleViolation::Budget { limit: limit.clone(), cost: total_cost.clone() });
                }
            }
            if let Some(required) = constraints.min_concurrent_users {
                if capacity.is_none_or(|c| c < required) {
                    violations.push(BundleViolation::Capacity { required, available: capacity });
                }
            }
            BundleProposal { selections, total_cost, capacity, satisfied: violations.is_empty(), violations }
        })
        .collect();
    out.sort_by(rank);
    out
}

fn rank(a: &BundleProposal, b: &BundleProposal) -> Ordering {
    b.satisfied
        .cmp(&a.satisfied)
        .then(a.total_cost.amount.cmp(&b.total_cost.amount))
        .then_with(|| a.selections.cmp(&b.selections))
}

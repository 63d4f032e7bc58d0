use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::catalog::model::*;
use crate::catalog::validate::{validate_catalog, Violation, ViolationRule};
use crate::money::Money;
use crate::rules::{RuleError, RuleSet, RuleSetDocument};

/// On-disk catalog document, one array per entity kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CatalogDocument {
    pub version: String,
    #[serde(default)]
    pub offerings: Vec<ProductOffering>,
    #[serde(default)]
    pub product_specs: Vec<ProductSpecification>,
    #[serde(default)]
    pub service_specs: Vec<ServiceSpecification>,
    #[serde(default)]
    pub resource_specs: Vec<ResourceSpecification>,
    #[serde(default)]
    pub test_specs: Vec<TestSpecification>,
    #[serde(default)]
    pub rule_sets: Vec<RuleSetDocument>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("rule set {rule_set}, rule {index}: {error}")]
    Rule { rule_set: String, index: usize, error: RuleError },
    #[error("{from} references missing id `{missing}`")]
    DanglingReference { from: String, missing: String },
    #[error("duplicate id `{id}`")]
    DuplicateId { id: String },
    #[error("service composition cycle: {}", path.join(" -> "))]
    CompositionCycle { path: Vec<String> },
    #[error("catalog has {} invariant violation(s); first: {}", violations.len(), violations[0])]
    Invalid { violations: Vec<Violation> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Offering(usize),
    ProductSpec(usize),
    ServiceSpec(usize),
    ResourceSpec(usize),
    TestSpec(usize),
    RuleSet(usize),
}

/// Immutable, typed catalog knowledge graph.
///
/// Collections keep document order; lookups resolve to the first entity with
/// a given id, and duplicates are reported by [`validate_catalog`].
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogGraph {
    pub version: String,
    pub offerings: Vec<ProductOffering>,
    pub product_specs: Vec<ProductSpecification>,
    pub service_specs: Vec<ServiceSpecification>,
    pub resource_specs: Vec<ResourceSpecification>,
    pub test_specs: Vec<TestSpecification>,
    pub rule_sets: Vec<RuleSet>,
    index: HashMap<String, NodeRef>,
}

impl CatalogGraph {
    /// Builds a graph without checking any invariant.
    pub fn from_parts(
        version: impl Into<String>,
        offerings: Vec<ProductOffering>,
        product_specs: Vec<ProductSpecification>,
        service_specs: Vec<ServiceSpecification>,
        resource_specs: Vec<ResourceSpecification>,
        test_specs: Vec<TestSpecification>,
        rule_sets: Vec<RuleSet>,
    ) -> Self {
        let mut index = HashMap::new();
        let mut put = |id: &str, r: NodeRef| {
            index.entry(id.to_string()).or_insert(r);
        };
        offerings.iter().enumerate().for_each(|(i, o)| put(&o.id, NodeRef::Offering(i)));
        product_specs.iter().enumerate().for_each(|(i, o)| put(&o.id, NodeRef::ProductSpec(i)));
        service_specs.iter().enumerate().for_each(|(i, o)| put(&o.id, NodeRef::ServiceSpec(i)));
        resource_specs.iter().enumerate().for_each(|(i, o)| put(&o.id, NodeRef::ResourceSpec(i)));
        test_specs.iter().enumerate().for_each(|(i, o)| put(&o.id, NodeRef::TestSpec(i)));
        rule_sets.iter().enumerate().for_each(|(i, o)| put(&o.id, NodeRef::RuleSet(i)));
        CatalogGraph {
            version: version.into(),
            offerings,
            product_specs,
            service_specs,
            resource_specs,
            test_specs,
            rule_sets,
            index,
        }
    }

    /// Parses rule texts and builds an unchecked graph.
    pub fn from_document(doc: CatalogDocument) -> Result<Self, CatalogError> {
        let rule_sets = doc
            .rule_sets
            .iter()
            .map(|rs| {
                RuleSet::parse(&rs.id, &rs.rules).map_err(|(index, error)| CatalogError::Rule {
                    rule_set: rs.id.clone(),
                    index,
                    error,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_parts(
            doc.version,
            doc.offerings,
            doc.product_specs,
            doc.service_specs,
            doc.resource_specs,
            doc.test_specs,
            rule_sets,
        ))
    }

    pub fn to_document(&self) -> CatalogDocument {
        CatalogDocument {
            version: self.version.clone(),
            offerings: self.offerings.clone(),
            product_specs: self.product_specs.clone(),
            service_specs: self.service_specs.clone(),
            resource_specs: self.resource_specs.clone(),
            test_specs: self.test_specs.clone(),
            rule_sets: self.rule_sets.iter().map(RuleSet::to_document).collect(),
        }
    }

    pub fn node(&self, id: &str) -> Option<NodeRef> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn offering(&self, id: &str) -> Option<&ProductOffering> {
        match self.node(id)? {
            NodeRef::Offering(i) => Some(&self.offerings[i]),
            _ => None,
        }
    }

    pub fn product_spec(&self, id: &str) -> Option<&ProductSpecification> {
        match self.node(id)? {
            NodeRef::ProductSpec(i) => Some(&self.product_specs[i]),
            _ => None,
        }
    }

    pub fn service_spec(&self, id: &str) -> Option<&ServiceSpecification> {
        match self.node(id)? {
            NodeRef::ServiceSpec(i) => Some(&self.service_specs[i]),
            _ => None,
        }
    }

    pub fn resource_spec(&self, id: &str) -> Option<&ResourceSpecification> {
        match self.node(id)? {
            NodeRef::ResourceSpec(i) => Some(&self.resource_specs[i]),
            _ => None,
        }
    }

    pub fn test_spec(&self, id: &str) -> Option<&TestSpecification> {
        match self.node(id)? {
            NodeRef::TestSpec(i) => Some(&self.test_specs[i]),
            _ => None,
        }
    }

    pub fn rule_set(&self, id: &str) -> Option<&RuleSet> {
        match self.node(id)? {
            NodeRef::RuleSet(i) => Some(&self.rule_sets[i]),
            _ => None,
        }
    }

    /// Offerings with an exact (case-insensitive) name match.
    pub fn offerings_named(&self, name: &str) -> Vec<&ProductOffering> {
        let mut out: Vec<&ProductOffering> =
            self.offerings.iter().filter(|o| o.name.eq_ignore_ascii_case(name)).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Distinct offering names ("families"), sorted.
    pub fn families(&self) -> Vec<String> {
        let mut names: Vec<String> = self.offerings.iter().map(|o| o.name.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Parses, resolves and checks a catalog document.
pub fn load_catalog(document: &str) -> Result<CatalogGraph, CatalogError> {
    let doc: CatalogDocument = serde_json::from_str(document).map_err(|e| CatalogError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let graph = CatalogGraph::from_document(doc)?;
    let violations = validate_catalog(&graph);
    if violations.is_empty() {
        return Ok(graph);
    }
    // Structural errors take precedence over the remaining invariants.
    for v in &violations {
        if let ViolationRule::DuplicateId = v.rule {
            return Err(CatalogError::DuplicateId { id: v.entity_id.clone() });
        }
    }
    for v in &violations {
        if let ViolationRule::DanglingRef { missing } = &v.rule {
            return Err(CatalogError::DanglingReference { from: v.entity_id.clone(), missing: missing.clone() });
        }
    }
    for v in &violations {
        if let ViolationRule::CompositionCycle { path } = &v.rule {
            return Err(CatalogError::CompositionCycle { path: path.clone() });
        }
    }
    Err(CatalogError::Invalid { violations })
}

/// Pretty-printed catalog document for `graph`.
pub fn serialize_catalog(graph: &CatalogGraph) -> String {
    serde_json::to_string_pretty(&graph.to_document()).expect("catalog serializes")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OfferingSummary {
    pub id: String,
    pub name: String,
    pub tier: String,
    pub unit_cost: Money,
    pub cost_period: CostPeriod,
}

impl From<&ProductOffering> for OfferingSummary {
    fn from(o: &ProductOffering) -> Self {
        OfferingSummary {
            id: o.id.clone(),
            name: o.name.clone(),
            tier: o.tier.clone(),
            unit_cost: o.unit_cost.clone(),
            cost_period: o.cost_period,
        }
    }
}

/// Case-insensitive substring search over offering name and tier, ordered by id.
pub fn find_offerings(graph: &CatalogGraph, query: Option<&str>) -> Vec<OfferingSummary> {
    let needle = query.map(str::trim).unwrap_or("").to_lowercase();
    let mut out: Vec<OfferingSummary> = graph
        .offerings
        .iter()
        .filter(|o| {
            needle.is_empty() || o.name.to_lowercase().contains(&needle) || o.tier.to_lowercase().contains(&needle)
        })
        .map(OfferingSummary::from)
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

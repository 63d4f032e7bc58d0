use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::graph::CatalogGraph;
use crate::catalog::model::*;
use crate::rules::{parse_rule_typed, print_rule};
use crate::scalar::{Scalar, ValueKind};

/// Name of the implicit characteristic bound to an offering's tier.
pub const TIER_CHARACTERISTIC: &str = "tier";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "camelCase")]
pub enum ViolationRule {
    DanglingRef { missing: String },
    DuplicateId,
    CompositionCycle { path: Vec<String> },
    CharacteristicInvariant { detail: String },
    NegativeCost,
    ZeroWindow,
    UnresolvableThresholdRef { characteristic: String },
    RuleTypeMismatch { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub entity_id: String,
    #[serde(flatten)]
    pub rule: ViolationRule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            ViolationRule::DanglingRef { missing } => write!(f, "{}: dangling reference `{missing}`", self.entity_id),
            ViolationRule::DuplicateId => write!(f, "{}: duplicate id", self.entity_id),
            ViolationRule::CompositionCycle { path } => {
                write!(f, "{}: composition cycle {}", self.entity_id, path.join(" -> "))
            }
            ViolationRule::CharacteristicInvariant { detail } => write!(f, "{}: {detail}", self.entity_id),
            ViolationRule::NegativeCost => write!(f, "{}: negative unit cost", self.entity_id),
            ViolationRule::ZeroWindow => write!(f, "{}: evaluation window must be positive", self.entity_id),
            ViolationRule::UnresolvableThresholdRef { characteristic } => write!(
                f,
                "{}: threshold characteristic `{characteristic}` is not reachable on any traversal path",
                self.entity_id
            ),
            ViolationRule::RuleTypeMismatch { detail } => write!(f, "{}: {detail}", self.entity_id),
        }
    }
}

fn violation(entity: &str, rule: ViolationRule) -> Violation {
    Violation { entity_id: entity.to_string(), rule }
}

/// Lists every invariant violation; an empty list means the graph is sound.
pub fn validate_catalog(g: &CatalogGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    check_duplicates(g, &mut out);
    check_references(g, &mut out);
    check_cycles(g, &mut out);
    check_characteristics(g, &mut out);
    check_tests(g, &mut out);
    check_rule_kinds(g, &mut out);
    out
}

fn all_ids(g: &CatalogGraph) -> Vec<&str> {
    let mut ids: Vec<&str> = Vec::new();
    ids.extend(g.offerings.iter().map(|o| o.id.as_str()));
    ids.extend(g.product_specs.iter().map(|o| o.id.as_str()));
    ids.extend(g.service_specs.iter().map(|o| o.id.as_str()));
    ids.extend(g.resource_specs.iter().map(|o| o.id.as_str()));
    ids.extend(g.test_specs.iter().map(|o| o.id.as_str()));
    ids.extend(g.rule_sets.iter().map(|o| o.id.as_str()));
    ids
}

fn check_duplicates(g: &CatalogGraph, out: &mut Vec<Violation>) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in all_ids(g) {
        *counts.entry(id).or_default() += 1;
    }
    for (id, n) in counts {
        if n > 1 {
            out.push(violation(id, ViolationRule::DuplicateId));
        }
    }
}

fn check_references(g: &CatalogGraph, out: &mut Vec<Violation>) {
    let mut dangling = |from: &str, id: &str, ok: bool| {
        if !ok {
            out.push(violation(from, ViolationRule::DanglingRef { missing: id.to_string() }));
        }
    };
    for o in &g.offerings {
        dangling(&o.id, &o.product_spec_id, g.product_spec(&o.product_spec_id).is_some());
    }
    for p in &g.product_specs {
        p.service_spec_ids.iter().for_each(|r| dangling(&p.id, r, g.service_spec(r).is_some()));
        p.rule_set_ids.iter().for_each(|r| dangling(&p.id, r, g.rule_set(r).is_some()));
        p.test_spec_ids.iter().for_each(|r| dangling(&p.id, r, g.test_spec(r).is_some()));
    }
    for s in &g.service_specs {
        s.child_service_spec_ids.iter().for_each(|r| dangling(&s.id, r, g.service_spec(r).is_some()));
        s.resource_spec_ids.iter().for_each(|r| dangling(&s.id, r, g.resource_spec(r).is_some()));
        s.rule_set_ids.iter().for_each(|r| dangling(&s.id, r, g.rule_set(r).is_some()));
        s.test_spec_ids.iter().for_each(|r| dangling(&s.id, r, g.test_spec(r).is_some()));
    }
    for r in &g.resource_specs {
        r.test_spec_ids.iter().for_each(|t| dangling(&r.id, t, g.test_spec(t).is_some()));
    }
}

/// Reports each service-composition cycle once, as the visited id path
/// closing back on its first element.
fn check_cycles(g: &CatalogGraph, out: &mut Vec<Violation>) {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    let mut ids: Vec<&str> = g.service_specs.iter().map(|s| s.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    let mut marks: HashMap<&str, Mark> = ids.iter().map(|id| (*id, Mark::Fresh)).collect();

    fn visit<'a>(
        g: &'a CatalogGraph,
        id: &'a str,
        marks: &mut HashMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
        out: &mut Vec<Violation>,
    ) {
        marks.insert(id, Mark::Active);
        stack.push(id);
        if let Some(spec) = g.service_spec(id) {
            let mut children: Vec<&str> = spec.child_service_spec_ids.iter().map(String::as_str).collect();
            children.sort();
            for child in children {
                match marks.get(child).copied() {
                    Some(Mark::Fresh) => visit(g, child, marks, stack, out),
                    Some(Mark::Active) => {
                        let start = stack.iter().position(|s| *s == child).unwrap_or(0);
                        let mut path: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                        path.push(child.to_string());
                        out.push(violation(child, ViolationRule::CompositionCycle { path }));
                    }
                    _ => {}
                }
            }
        }
        stack.pop();
        marks.insert(id, Mark::Done);
    }

    for id in ids {
        if marks[id] == Mark::Fresh {
            visit(g, id, &mut marks, &mut Vec::new(), out);
        }
    }
}

fn check_characteristic_list(entity: &str, chars: &[CharacteristicSpec], out: &mut Vec<Violation>) {
    for c in chars {
        let mut bad = |detail: String| {
            out.push(violation(entity, ViolationRule::CharacteristicInvariant { detail }));
        };
        if c.unit.is_some() && c.value_kind != ValueKind::Number {
            bad(format!("characteristic `{}` has a unit but is not a number", c.name));
        }
        if let Some(allowed) = &c.allowed_values {
            if let Some(v) = allowed.iter().find(|v| v.kind() != c.value_kind) {
                bad(format!("characteristic `{}` allows {v} of the wrong kind", c.name));
            }
        }
        if let Some(d) = &c.default_value {
            if let Err(e) = c.admits(d) {
                bad(format!("default value: {e}"));
            }
        }
    }
}

fn check_characteristics(g: &CatalogGraph, out: &mut Vec<Violation>) {
    for o in &g.offerings {
        if o.unit_cost.amount < 0 {
            out.push(violation(&o.id, ViolationRule::NegativeCost));
        }
        check_characteristic_list(&o.id, &o.characteristics, out);
        for (name, value) in &o.fixed_characteristic_values {
            if let Some(spec) = o.characteristic(name) {
                if let Err(e) = spec.admits(value) {
                    out.push(violation(
                        &o.id,
                        ViolationRule::CharacteristicInvariant { detail: format!("fixed value: {e}") },
                    ));
                }
            }
        }
    }
    g.product_specs.iter().for_each(|p| check_characteristic_list(&p.id, &p.characteristics, out));
    g.service_specs.iter().for_each(|s| check_characteristic_list(&s.id, &s.characteristics, out));
    g.resource_specs.iter().for_each(|r| check_characteristic_list(&r.id, &r.characteristics, out));
}

/// Characteristic names that can be bound at each node along some path from
/// an offering: declared characteristics, fixed values, the tier, and every
/// rule target of the node and its ancestors.
pub(crate) fn reachable_names(g: &CatalogGraph) -> HashMap<String, BTreeSet<String>> {
    let rule_targets = |ids: &[String]| -> Vec<String> {
        ids.iter().filter_map(|id| g.rule_set(id)).flat_map(|rs| rs.targets().into_iter().map(str::to_string)).collect()
    };
    let mut own: HashMap<String, BTreeSet<String>> = HashMap::new();
    let mut parents: HashMap<String, Vec<String>> = HashMap::new();
    for o in &g.offerings {
        let names = own.entry(o.id.clone()).or_default();
        names.insert(TIER_CHARACTERISTIC.to_string());
        names.extend(o.characteristics.iter().map(|c| c.name.clone()));
        names.extend(o.fixed_characteristic_values.keys().cloned());
        parents.entry(o.product_spec_id.clone()).or_default().push(o.id.clone());
    }
    for p in &g.product_specs {
        let names = own.entry(p.id.clone()).or_default();
        names.extend(p.characteristics.iter().map(|c| c.name.clone()));
        names.extend(rule_targets(&p.rule_set_ids));
        for s in &p.service_spec_ids {
            parents.entry(s.clone()).or_default().push(p.id.clone());
        }
    }
    for s in &g.service_specs {
        let names = own.entry(s.id.clone()).or_default();
        names.extend(s.characteristics.iter().map(|c| c.name.clone()));
        names.extend(rule_targets(&s.rule_set_ids));
        for c in s.child_service_spec_ids.iter().chain(&s.resource_spec_ids) {
            parents.entry(c.clone()).or_default().push(s.id.clone());
        }
    }
    for r in &g.resource_specs {
        own.entry(r.id.clone()).or_default().extend(r.characteristics.iter().map(|c| c.name.clone()));
    }

    fn resolve(
        id: &str,
        own: &HashMap<String, BTreeSet<String>>,
        parents: &HashMap<String, Vec<String>>,
        memo: &mut HashMap<String, BTreeSet<String>>,
        active: &mut BTreeSet<String>,
    ) -> BTreeSet<String> {
        if let Some(done) = memo.get(id) {
            return done.clone();
        }
        let mut names = own.get(id).cloned().unwrap_or_default();
        if !active.insert(id.to_string()) {
            return names;
        }
        for p in parents.get(id).into_iter().flatten() {
            names.extend(resolve(p, own, parents, memo, active));
        }
        active.remove(id);
        memo.insert(id.to_string(), names.clone());
        names
    }

    let mut memo = HashMap::new();
    let ids: Vec<String> = own.keys().cloned().collect();
    for id in ids {
        resolve(&id, &own, &parents, &mut memo, &mut BTreeSet::new());
    }
    memo
}

fn check_tests(g: &CatalogGraph, out: &mut Vec<Violation>) {
    for t in &g.test_specs {
        if t.evaluation_window_ticks == 0 {
            out.push(violation(&t.id, ViolationRule::ZeroWindow));
        }
        if t.threshold_source == ThresholdSource::Literal && t.threshold_value.kind() != ValueKind::Number {
            let ordered = !matches!(t.comparator, Comparator::Eq);
            if ordered {
                out.push(violation(
                    &t.id,
                    ViolationRule::CharacteristicInvariant {
                        detail: format!("ordered comparator needs a numeric threshold, got {}", t.threshold_value),
                    },
                ));
            }
        }
    }
    let reachable = reachable_names(g);
    let mut holders: Vec<(&str, &[String])> = Vec::new();
    holders.extend(g.product_specs.iter().map(|p| (p.id.as_str(), p.test_spec_ids.as_slice())));
    holders.extend(g.service_specs.iter().map(|s| (s.id.as_str(), s.test_spec_ids.as_slice())));
    holders.extend(g.resource_specs.iter().map(|r| (r.id.as_str(), r.test_spec_ids.as_slice())));
    let mut seen = BTreeSet::new();
    for (holder, tests) in holders {
        for tid in tests {
            let Some(t) = g.test_spec(tid) else { continue };
            if t.threshold_source != ThresholdSource::CharacteristicRef {
                continue;
            }
            let name = match &t.threshold_value {
                Scalar::Str(s) => s.clone(),
                other => {
                    if seen.insert((t.id.clone(), other.to_string())) {
                        out.push(violation(
                            &t.id,
                            ViolationRule::CharacteristicInvariant {
                                detail: format!("characteristicRef threshold must name a characteristic, got {other}"),
                            },
                        ));
                    }
                    continue;
                }
            };
            let ok = reachable.get(holder).is_some_and(|names| names.contains(&name));
            if !ok && seen.insert((t.id.clone(), name.clone())) {
                out.push(violation(&t.id, ViolationRule::UnresolvableThresholdRef { characteristic: name }));
            }
        }
    }
}

/// Rule references and targets must agree with declared characteristic kinds.
fn check_rule_kinds(g: &CatalogGraph, out: &mut Vec<Violation>) {
    let mut declared: BTreeMap<String, ValueKind> = BTreeMap::new();
    declared.insert(TIER_CHARACTERISTIC.to_string(), ValueKind::String);
    let lists = g
        .offerings
        .iter()
        .map(|o| &o.characteristics)
        .chain(g.product_specs.iter().map(|p| &p.characteristics))
        .chain(g.service_specs.iter().map(|s| &s.characteristics))
        .chain(g.resource_specs.iter().map(|r| &r.characteristics));
    for list in lists {
        for c in list {
            declared.entry(c.name.clone()).or_insert(c.value_kind);
        }
    }
    for rs in &g.rule_sets {
        for rule in &rs.rules {
            let Ok((_, kinds)) = parse_rule_typed(&print_rule(rule)) else { continue };
            for (name, kind) in kinds {
                if let Some(want) = declared.get(&name) {
                    if *want != kind {
                        out.push(violation(
                            &rule.id,
                            ViolationRule::RuleTypeMismatch {
                                detail: format!("`{name}` is declared {want} but used as {kind}"),
                            },
                        ));
                    }
                }
            }
        }
    }
}

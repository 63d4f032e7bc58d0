use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogGraph, CharacteristicSpec, ThresholdSource, TIER_CHARACTERISTIC};
use crate::rules::{evaluate_ruleset_traced, Bindings};
use crate::scalar::Scalar;
use crate::traversal::{DerivedTest, ResourceOrder, ServiceOrder, TraversalError, PLAN_ROOT};

/// Traversal stage of a visited node. Test collection (the fourth stage)
/// is reported on the entry of the node that holds the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Stage {
    Offering,
    ProductSpec,
    ServiceSpec,
    ResourceSpec,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Offering | Stage::ProductSpec => 1,
            Stage::ServiceSpec => 2,
            Stage::ResourceSpec => 3,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Offering => "offering",
            Stage::ProductSpec => "productSpec",
            Stage::ServiceSpec => "serviceSpec",
            Stage::ResourceSpec => "resourceSpec",
        };
        write!(f, "stage{}:{name}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub stage: Stage,
    pub node_id: String,
    pub order_ref: Option<String>,
    pub fired_rules: Vec<String>,
    /// Derived test ids collected at this node.
    pub tests: Vec<String>,
}

#[derive(Default)]
pub(crate) struct WalkOutput {
    pub service_orders: Vec<ServiceOrder>,
    pub resource_orders: Vec<ResourceOrder>,
    pub derived_tests: Vec<DerivedTest>,
    pub trace: Vec<TraceEntry>,
}

struct Walker<'g> {
    g: &'g CatalogGraph,
    tracing: bool,
    offering_id: String,
    out: WalkOutput,
}

pub(crate) fn walk(
    g: &CatalogGraph,
    selections: &[crate::traversal::OfferingSelection],
    tracing: bool,
) -> Result<WalkOutput, TraversalError> {
    let mut w = Walker { g, tracing, offering_id: String::new(), out: WalkOutput::default() };
    for sel in selections {
        w.selection(sel)?;
    }
    Ok(w.out)
}

fn sorted(ids: &[String]) -> Vec<&String> {
    let mut v: Vec<&String> = ids.iter().collect();
    v.sort();
    v
}

fn add_defaults(env: &mut Bindings, specs: &[CharacteristicSpec]) {
    for c in specs {
        if let Some(d) = &c.default_value {
            env.entry(c.name.clone()).or_insert_with(|| d.clone());
        }
    }
}

impl<'g> Walker<'g> {
    fn selection(&mut self, sel: &crate::traversal::OfferingSelection) -> Result<(), TraversalError> {
        let g = self.g;
        let o = g
            .offering(&sel.offering_id)
            .ok_or_else(|| TraversalError::UnknownOffering { id: sel.offering_id.clone() })?;
        self.offering_id = o.id.clone();

        let mut env: Bindings = o.fixed_characteristic_values.clone();
        add_defaults(&mut env, &o.characteristics);
        env.extend(sel.characteristic_values.clone());
        env.insert(TIER_CHARACTERISTIC.to_string(), Scalar::str(o.tier.clone()));
        self.entry(Stage::Offering, &o.id, None, Vec::new(), Vec::new());

        let path = vec![o.id.clone()];
        let ps = g
            .product_spec(&o.product_spec_id)
            .ok_or_else(|| TraversalError::Dangling { path: path.clone(), missing: o.product_spec_id.clone() })?;
        let path = vec![o.id.clone(), ps.id.clone()];
        add_defaults(&mut env, &ps.characteristics);
        let fired = self.apply_rules(&mut env, &ps.rule_set_ids, &path)?;

        let services = sorted(&ps.service_spec_ids);
        // Product-level tests attach to the first top-level service order.
        let bound = match services.first() {
            Some(_) => order_id("so", self.out.service_orders.len() + 1),
            None => PLAN_ROOT.to_string(),
        };
        let tests = self.derive_tests(&ps.test_spec_ids, &env, &bound, &path)?;
        self.entry(Stage::ProductSpec, &ps.id, None, fired, tests);

        for s in services {
            self.service(s, env.clone(), None, &path)?;
        }
        Ok(())
    }

    fn service(
        &mut self,
        id: &str,
        mut env: Bindings,
        parent: Option<String>,
        path: &[String],
    ) -> Result<(), TraversalError> {
        let g = self.g;
        let s = g
            .service_spec(id)
            .ok_or_else(|| TraversalError::Dangling { path: path.to_vec(), missing: id.to_string() })?;
        let mut path = path.to_vec();
        path.push(s.id.clone());
        add_defaults(&mut env, &s.characteristics);
        let fired = self.apply_rules(&mut env, &s.rule_set_ids, &path)?;

        let so = order_id("so", self.out.service_orders.len() + 1);
        self.out.service_orders.push(ServiceOrder {
            order_id: so.clone(),
            service_spec_id: s.id.clone(),
            offering_id: self.offering_id.clone(),
            resolved_characteristics: env.clone(),
            parent_ref: parent,
        });
        let tests = self.derive_tests(&s.test_spec_ids, &env, &so, &path)?;
        self.entry(Stage::ServiceSpec, &s.id, Some(so.clone()), fired, tests);

        for r in sorted(&s.resource_spec_ids) {
            let rs = g
                .resource_spec(r)
                .ok_or_else(|| TraversalError::Dangling { path: path.clone(), missing: r.clone() })?;
            let mut renv = env.clone();
            add_defaults(&mut renv, &rs.characteristics);
            let ro = order_id("ro", self.out.resource_orders.len() + 1);
            let mut rpath = path.clone();
            rpath.push(rs.id.clone());
            let tests = self.derive_tests(&rs.test_spec_ids, &renv, &ro, &rpath)?;
            self.out.resource_orders.push(ResourceOrder {
                order_id: ro.clone(),
                resource_spec_id: rs.id.clone(),
                offering_id: self.offering_id.clone(),
                domain: rs.domain,
                resolved_characteristics: renv,
                parent_service_ref: so.clone(),
            });
            self.entry(Stage::ResourceSpec, &rs.id, Some(ro), Vec::new(), tests);
        }

        for c in sorted(&s.child_service_spec_ids) {
            self.service(c, env.clone(), Some(so.clone()), &path)?;
        }
        Ok(())
    }

    fn apply_rules(
        &self,
        env: &mut Bindings,
        rule_set_ids: &[String],
        path: &[String],
    ) -> Result<Vec<String>, TraversalError> {
        let mut fired = Vec::new();
        for id in rule_set_ids {
            let rs = self
                .g
                .rule_set(id)
                .ok_or_else(|| TraversalError::Dangling { path: path.to_vec(), missing: id.clone() })?;
            let eval = evaluate_ruleset_traced(rs, env)
                .map_err(|error| TraversalError::Rule { path: path.to_vec(), error })?;
            env.extend(eval.bindings);
            fired.extend(eval.fired);
        }
        Ok(fired)
    }

    fn derive_tests(
        &mut self,
        ids: &[String],
        env: &Bindings,
        bound: &str,
        path: &[String],
    ) -> Result<Vec<String>, TraversalError> {
        let mut collected = Vec::new();
        for id in ids {
            let t = self
                .g
                .test_spec(id)
                .ok_or_else(|| TraversalError::Dangling { path: path.to_vec(), missing: id.clone() })?;
            let threshold = match t.threshold_source {
                ThresholdSource::Literal => t.threshold_value.clone(),
                ThresholdSource::CharacteristicRef => {
                    let name = t.threshold_value.as_str().unwrap_or_default();
                    env.get(name).cloned().ok_or_else(|| TraversalError::UnresolvableThreshold {
                        test_spec: t.id.clone(),
                        characteristic: name.to_string(),
                        path: path.to_vec(),
                    })?
                }
            };
            let test_id = order_id("dt", self.out.derived_tests.len() + 1);
            self.out.derived_tests.push(DerivedTest {
                test_id: test_id.clone(),
                test_spec_id: t.id.clone(),
                bound_ref: bound.to_string(),
                kind: t.kind,
                target_metric: t.target_metric.clone(),
                comparator: t.comparator,
                resolved_threshold: threshold,
                window_ticks: t.evaluation_window_ticks,
            });
            collected.push(test_id);
        }
        Ok(collected)
    }

    fn entry(
        &mut self,
        stage: Stage,
        node: &str,
        order_ref: Option<String>,
        fired_rules: Vec<String>,
        tests: Vec<String>,
    ) {
        if self.tracing {
            self.out.trace.push(TraceEntry { stage, node_id: node.to_string(), order_ref, fired_rules, tests });
        }
    }
}

fn order_id(prefix: &str, n: usize) -> String {
    format!("{prefix}-{n:03}")
}

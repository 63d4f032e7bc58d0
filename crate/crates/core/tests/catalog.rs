use std::sync::Arc;

use intentforge_core::catalog::{
    find_offerings, fixture, load_catalog, serialize_catalog, validate_catalog, CatalogDocument, CatalogError,
    CatalogGraph, CostPeriod, ViolationRule, FIXTURE_CATALOG,
};
use intentforge_core::inventory::{InventoryError, InventoryKind, InventoryStore, NewRecord};
use intentforge_core::money::Money;
use proptest::prelude::*;
use serde_json::{json, Value};

fn fixture_json() -> Value {
    serde_json::from_str(FIXTURE_CATALOG).unwrap()
}

fn load_value(v: &Value) -> Result<CatalogGraph, CatalogError> {
    load_catalog(&v.to_string())
}

#[test]
fn fixture_has_the_nine_priced_offerings() {
    let g = fixture();
    assert_eq!(g.offerings.len(), 9);
    let platinum = g.offering("po-slice-platinum").unwrap();
    assert_eq!(platinum.label(), "On-demand Network Slice / Platinum");
    assert_eq!(platinum.unit_cost, Money::eur(1000));
    assert_eq!(platinum.cost_period, CostPeriod::PerDay);

    let mut priced: Vec<(String, String, i64, CostPeriod)> =
        g.offerings.iter().map(|o| (o.name.clone(), o.tier.clone(), o.unit_cost.amount / 100, o.cost_period)).collect();
    priced.sort();
    let per_day = CostPeriod::PerDay;
    let mut expected = vec![
        ("On-demand Network Slice", "Platinum", 1000, per_day),
        ("On-demand Network Slice", "Gold", 700, per_day),
        ("On-demand Network Slice", "Silver", 300, per_day),
        ("Edge Media Cache Server", "Large (GPU)", 300, per_day),
        ("Edge Media Cache Server", "Large", 200, per_day),
        ("Edge Media Cache Server", "Small", 50, per_day),
        ("Service APIs Exposure", "Standard", 100, per_day),
        ("Network Slice Observability", "Admin Access", 100, per_day),
        ("Service Setup and VPN", "Standard", 100, CostPeriod::Once),
    ]
    .into_iter()
    .map(|(n, t, c, p)| (n.to_string(), t.to_string(), c, p))
    .collect::<Vec<_>>();
    expected.sort();
    assert_eq!(priced, expected);
}

#[test]
fn fixture_validates_clean() {
    assert_eq!(validate_catalog(&fixture()), vec![]);
}

#[test]
fn empty_document_is_a_valid_empty_graph() {
    let g = load_catalog(r#"{"version": "v-empty"}"#).unwrap();
    assert_eq!(g.version, "v-empty");
    assert!(g.offerings.is_empty() && g.service_specs.is_empty());
    assert!(validate_catalog(&g).is_empty());
}

#[test]
fn parse_errors_report_position() {
    match load_catalog("{\n  \"version\": 1,\n}") {
        Err(CatalogError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 14)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn rule_errors_name_the_set_and_index() {
    let mut v = fixture_json();
    v["ruleSets"][0]["rules"][1] = json!("when $tier == then x := 1");
    match load_value(&v) {
        Err(CatalogError::Rule { rule_set, index, .. }) => {
            assert_eq!((rule_set.as_str(), index), ("rules-slice-tier", 1))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn composition_cycle_names_the_path() {
    let mut v = fixture_json();
    let specs = v["serviceSpecs"].as_array_mut().unwrap();
    specs.push(json!({"id": "A", "name": "A", "childServiceSpecIds": ["B"]}));
    specs.push(json!({"id": "B", "name": "B", "childServiceSpecIds": ["A"]}));
    match load_value(&v) {
        Err(CatalogError::CompositionCycle { path }) => assert_eq!(path, vec!["A", "B", "A"]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn dangling_and_duplicate_violations() {
    let mut v = fixture_json();
    v["offerings"][0]["productSpecId"] = json!("X");
    let doc: CatalogDocument = serde_json::from_value(v.clone()).unwrap();
    let g = CatalogGraph::from_document(doc).unwrap();
    let report = validate_catalog(&g);
    assert_eq!(report.len(), 1, "{report:?}");
    assert_eq!(report[0].entity_id, "po-slice-platinum");
    assert_eq!(report[0].rule, ViolationRule::DanglingRef { missing: "X".into() });
    match load_value(&v) {
        Err(CatalogError::DanglingReference { missing, .. }) => assert_eq!(missing, "X"),
        other => panic!("unexpected {other:?}"),
    }

    let mut v = fixture_json();
    let first = v["offerings"][0].clone();
    v["offerings"].as_array_mut().unwrap().push(first);
    let g = CatalogGraph::from_document(serde_json::from_value(v.clone()).unwrap()).unwrap();
    let report = validate_catalog(&g);
    assert_eq!(report.len(), 1, "{report:?}");
    assert_eq!(report[0].rule, ViolationRule::DuplicateId);
    assert!(matches!(load_value(&v), Err(CatalogError::DuplicateId { id }) if id == "po-slice-platinum"));
}

#[test]
fn characteristic_and_test_invariants() {
    let mut v = fixture_json();
    // Default outside the allowed set.
    v["offerings"][0]["characteristics"][1]["defaultValue"] = json!("XR");
    v["offerings"][1]["unitCost"]["amount"] = json!(-1);
    v["testSpecs"][0]["evaluationWindowTicks"] = json!(0);
    v["testSpecs"][1]["thresholdValue"] = json!("noSuchCharacteristic");
    let g = CatalogGraph::from_document(serde_json::from_value(v).unwrap()).unwrap();
    let rules: Vec<String> = validate_catalog(&g).iter().map(|v| format!("{}:{:?}", v.entity_id, v.rule)).collect();
    assert_eq!(rules.len(), 4, "{rules:?}");
    assert!(rules.iter().any(|r| r.starts_with("po-slice-platinum:CharacteristicInvariant")));
    assert!(rules.iter().any(|r| r.starts_with("po-slice-gold:NegativeCost")));
    assert!(rules.iter().any(|r| r.starts_with("ts-slice-admission:ZeroWindow")));
    assert!(rules.iter().any(|r| r.starts_with("ts-slice-latency:UnresolvableThresholdRef")));
}

#[test]
fn serialize_then_load_is_identity() {
    let g = fixture();
    let again = load_catalog(&serialize_catalog(&g)).unwrap();
    assert_eq!(again, g);
    assert_eq!(serialize_catalog(&again), serialize_catalog(&g));
}

#[test]
fn find_offerings_examples() {
    let g = fixture();
    let edge: Vec<String> = find_offerings(&g, Some("Edge Media")).into_iter().map(|o| o.tier).collect();
    assert_eq!(edge, vec!["Large", "Large (GPU)", "Small"]);
    assert_eq!(find_offerings(&g, Some("")).len(), 9);
    assert_eq!(find_offerings(&g, None).len(), 9);
    assert!(find_offerings(&g, Some("xyzzy")).is_empty());
    assert_eq!(find_offerings(&g, Some("gold")).len(), 1);
    let ids: Vec<String> = find_offerings(&g, None).into_iter().map(|o| o.id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

proptest! {
    #[test]
    fn find_offerings_is_stable(q in "[a-zA-Z ()]{0,6}") {
        let g = fixture();
        let a = serde_json::to_string(&find_offerings(&g, Some(&q))).unwrap();
        let b = serde_json::to_string(&find_offerings(&g, Some(&q))).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn inventory_is_append_only(ops in prop::collection::vec((0usize..4, any::<bool>()), 1..40)) {
        let store = InventoryStore::in_memory(Arc::new(fixture()));
        let ids = ["i-0", "i-1", "i-2", "i-3"];
        let mut snapshots: Vec<(String, u32, String)> = Vec::new();
        for (k, link) in ops {
            let id = ids[k];
            let latest = store.latest(id).map(|r| r.revision);
            let res = store.record(NewRecord {
                id: id.into(),
                kind: InventoryKind::Service,
                source_spec_id: "ss-slice-e2e".into(),
                state: "active".into(),
                payload: json!({"k": k}),
                supersedes: if link { latest } else { None },
            });
            match (latest, link, res) {
                (None, _, Ok(_)) | (Some(_), true, Ok(_)) => {}
                (Some(_), false, Err(InventoryError::DuplicateId { .. })) => {}
                (l, f, r) => prop_assert!(false, "latest {:?} link {} -> {:?}", l, f, r),
            }
            for (id, rev, bytes) in &snapshots {
                prop_assert_eq!(store.raw(id, *rev), Some(bytes.clone()));
            }
            if let Some(r) = store.latest(id) {
                snapshots.push((id.to_string(), r.revision, store.raw(id, r.revision).unwrap()));
            }
        }
    }
}

#[test]
fn inventory_survives_reopen() {
    let dir = std::env::temp_dir().join(format!("intentforge-inv-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("inventory.ndjson");
    let _ = std::fs::remove_file(&path);
    let g = Arc::new(fixture());
    {
        let store = InventoryStore::open(&path, g.clone()).unwrap();
        store
            .record(NewRecord {
                id: "intent-x".into(),
                kind: InventoryKind::Intent,
                source_spec_id: "po-slice-gold".into(),
                state: "confirmed".into(),
                payload: json!({"a": 1}),
                supersedes: None,
            })
            .unwrap();
    }
    let store = InventoryStore::open(&path, g).unwrap();
    let rec = store.latest("intent-x").unwrap();
    assert_eq!(rec.kind, InventoryKind::Intent);
    assert_eq!(rec.catalog_version, "2026.1");
    assert!(matches!(
        store.record(NewRecord {
            id: "intent-x".into(),
            kind: InventoryKind::Intent,
            source_spec_id: "po-slice-gold".into(),
            state: "x".into(),
            payload: json!(null),
            supersedes: None,
        }),
        Err(InventoryError::DuplicateId { .. })
    ));
    std::fs::remove_dir_all(&dir).unwrap();
}

mod common;

use std::sync::Arc;

use chrono::TimeZone;
use common::*;
use intentforge_agent::bench::{
    classify_baseline, emit_report, final_bundle, min_feasible_cost, run_scenario, score, score_composition,
    write_report, Baseline, BenchRecord, BenchResult, Metrics, PassFail, ReportError, ReportFormat, Scenario,
    ScenarioError, TABLE_COLUMNS,
};
use intentforge_agent::cocreation::http::{HttpConfig, HttpReasoner};
use intentforge_agent::cocreation::{backend, BackendFamily, Session};
use intentforge_core::traversal::{default_families, propose_bundles, IntentConstraints};
use intentforge_core::Money;
use proptest::prelude::*;

fn run(id: &str) -> intentforge_agent::bench::BenchRun {
    run_scenario(&bundled_scenario(), backend(id).unwrap(), graph()).unwrap()
}

fn shape(r: &BenchResult) -> (String, u32, PassFail, PassFail, Baseline) {
    (r.composition(), r.hallucinated_products, r.correct_total_cost, r.correct_duration, r.baseline_achievement)
}

#[test]
fn bundled_scenario_is_valid() {
    let s = bundled_scenario();
    s.validate(&graph()).unwrap();
    let labels: Vec<&str> = s.turns.iter().map(|t| t.label.as_str()).collect();
    assert_eq!(labels, ["Q1", "Q2", "Q3", "Q4", "Q5"]);
    assert_eq!(s.turns[0].user_text, Q1);
    assert_eq!(s.ground_truth.total_cost, Money::eur(7100));
    assert_eq!(s.ground_truth.days, 7);
}

#[test]
fn reference_backend_reaches_the_baseline() {
    let run = run("reference");
    let r = &run.result;
    assert_eq!(shape(r), ("4/4".into(), 0, PassFail::Pass, PassFail::Pass, Baseline::Pass));
    assert_eq!(r.backend_family, BackendFamily::Reasoning);
    assert!(r.dialogue_time_seconds.is_some());
    assert!(r.total_tokens.unwrap() > 0);
    assert_eq!(r.failure_reason, None);
    let failed: Vec<_> = run.record.checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(run.record.checks.len() >= 15);
}

#[test]
fn reference_backend_is_stable_across_runs() {
    let first = run("reference");
    for _ in 0..3 {
        let again = run("reference");
        assert_eq!(shape(&again.result), shape(&first.result));
        assert_eq!(again.result.total_tokens, first.result.total_tokens);
        assert_eq!(again.record.session, first.record.session);
    }
}

#[test]
fn hallucinator_fails_without_time_or_tokens() {
    let r = run("scripted-hallucinator").result;
    assert_eq!(shape(&r), ("0/4".into(), 3, PassFail::Fail, PassFail::Fail, Baseline::Fail));
    assert_eq!(r.dialogue_time_seconds, None);
    assert_eq!(r.total_tokens, None);
    assert!(r.failure_reason.is_some());
    assert_eq!(r.backend_family, BackendFamily::NonReasoning);
}

#[test]
fn mixed_backend_gets_three_of_four() {
    let r = run("scripted-mixed").result;
    assert_eq!(r.composition(), "3/4");
    assert_eq!(r.hallucinated_products, 1);
    assert_eq!(r.baseline_achievement, Baseline::Fail);
    assert!(r.total_tokens.is_some());
}

#[test]
fn wrong_duration_is_partial() {
    let run = run("scripted-wrong-duration");
    assert_eq!(shape(&run.result), ("4/4".into(), 0, PassFail::Pass, PassFail::Fail, Baseline::Partial));
    let payload = &run.record.session.finalized.as_ref().unwrap().order_payload;
    assert_eq!(payload["orderItems"][0]["validFor"]["endDate"], "2026-06-08");
}

#[test]
fn rescoring_a_stored_record_is_exact() {
    let g = graph();
    let sc = bundled_scenario();
    for id in ["reference", "scripted-hallucinator", "scripted-mixed", "scripted-wrong-duration"] {
        let run = run_scenario(&sc, backend(id).unwrap(), g.clone()).unwrap();
        let stored = serde_json::to_string(&run.record).unwrap();
        let back: BenchRecord = serde_json::from_str(&stored).unwrap();
        assert_eq!(score(&back, &sc, &g), run.result, "{id}");
        assert_eq!(score(&back, &sc, &g), score(&back, &sc, &g));
    }
}

#[test]
fn composition_examples() {
    let g = graph();
    let truth = bundled_scenario().ground_truth_families(&g);
    let empty = Session::new("x");
    let c = score_composition(&truth, &truth, &empty);
    assert_eq!((c.correct, c.of, c.hallucinated), (4, 4, 0));
    let c = score_composition(&[], &truth, &empty);
    assert_eq!((c.correct, c.hallucinated), (0, 0));
    assert!(final_bundle(&empty, &g).is_empty());

    let mixed = run("scripted-mixed").record.session;
    let proposed = final_bundle(&mixed, &g);
    assert_eq!(proposed.len(), 3);
    let c = score_composition(&proposed, &truth, &mixed);
    assert_eq!((c.correct, c.hallucinated), (3, 1));
}

#[test]
fn composition_is_tier_insensitive() {
    let g = graph();
    let truth = bundled_scenario().ground_truth_families(&g);
    let q1_only = {
        let mut a = reference_agent();
        a.user_message(Q1).unwrap();
        a.into_session()
    };
    // The widest bundle uses other tiers of the same four families.
    let c = score_composition(&final_bundle(&q1_only, &g), &truth, &q1_only);
    assert_eq!(c.correct, 4);
}

#[test]
fn classification_examples() {
    let m = Metrics {
        correct_composition: 4,
        composition_of: 4,
        hallucinated_products: 0,
        correct_total_cost: PassFail::Pass,
        correct_duration: PassFail::Pass,
        confirmed_payload: true,
    };
    assert_eq!(classify_baseline(&m), Baseline::Pass);
    assert_eq!(classify_baseline(&Metrics { correct_duration: PassFail::Fail, ..m }), Baseline::Partial);
    assert_eq!(classify_baseline(&Metrics { confirmed_payload: false, ..m }), Baseline::Fail);
}

fn metrics() -> impl Strategy<Value = Metrics> {
    (0u32..=4, 0u32..4, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(c, h, cost, dur, payload)| Metrics {
        correct_composition: c,
        composition_of: 4,
        hallucinated_products: h,
        correct_total_cost: PassFail::from_bool(cost),
        correct_duration: PassFail::from_bool(dur),
        confirmed_payload: payload,
    })
}

proptest! {
    #[test]
    fn classification_is_monotone(m in metrics(), which in 0usize..5) {
        let mut better = m;
        match which {
            0 => better.correct_composition = (m.correct_composition + 1).min(4),
            1 => better.hallucinated_products = m.hallucinated_products.saturating_sub(1),
            2 => better.correct_total_cost = PassFail::Pass,
            3 => better.correct_duration = PassFail::Pass,
            _ => better.confirmed_payload = true,
        }
        prop_assert!(classify_baseline(&better) >= classify_baseline(&m));
    }

    #[test]
    fn cost_oracle_matches_bundle_search(budget in 0i64..12_000, users in 0i64..1_500, days in 1u32..15) {
        let g = graph();
        let families = default_families();
        let constraints = IntentConstraints {
            budget: Some(Money::eur(budget)),
            min_concurrent_users: Some(users),
            ..IntentConstraints::default()
        };
        let ranked = propose_bundles(&g, &families, &constraints, days);
        let best = ranked.first().filter(|p| p.satisfied).map(|p| p.total_cost.clone());
        prop_assert_eq!(best, min_feasible_cost(&g, &families, &Money::eur(budget), users, days));
    }
}

#[test]
fn cost_oracle_on_the_benchmark_constraints() {
    let g = graph();
    assert_eq!(min_feasible_cost(&g, &default_families(), &Money::eur(9000), 1000, 7), Some(Money::eur(7100)));
    assert_eq!(min_feasible_cost(&g, &default_families(), &Money::eur(500), 0, 7), None);
}

#[test]
fn scenario_validation_errors() {
    let g = graph();
    let base = bundled_scenario();

    let mut s = base.clone();
    s.turns[1].label = "Q1".into();
    assert_eq!(s.validate(&g), Err(ScenarioError::DuplicateLabel("Q1".into())));

    let mut s = base.clone();
    s.ground_truth.bundle[0].offering_id = "po-nope".into();
    assert_eq!(s.validate(&g), Err(ScenarioError::UnknownOffering("po-nope".into())));

    let mut s = base.clone();
    s.ground_truth.total_cost = Money::eur(7000);
    assert!(matches!(s.validate(&g), Err(ScenarioError::CostMismatch { .. })));

    let mut s = base.clone();
    s.turns[0].expectations.push("vibes".into());
    assert!(matches!(s.validate(&g), Err(ScenarioError::UnknownCheck { .. })));

    let mut s = base.clone();
    s.turns.clear();
    assert_eq!(s.validate(&g), Err(ScenarioError::Empty));

    assert!(matches!(Scenario::from_json("{"), Err(ScenarioError::Parse(_))));
    assert!(matches!(run_scenario(&s, backend("reference").unwrap(), g), Err(ScenarioError::Empty)));
}

fn sample_results() -> Vec<BenchResult> {
    ["reference", "scripted-hallucinator", "scripted-wrong-duration"].iter().map(|id| run(id).result).collect()
}

#[test]
fn table_report_follows_the_column_order() {
    let one = vec![run("reference").result];
    let doc = emit_report(&one, ReportFormat::Table).unwrap();
    let header = doc.lines().next().unwrap();
    let cells: Vec<&str> = header.trim_matches('|').split('|').map(str::trim).collect();
    assert_eq!(cells, TABLE_COLUMNS.to_vec());
    assert_eq!(
        TABLE_COLUMNS[1..6],
        [
            "Correct Product Composition",
            "Hallucinated Products",
            "Correct Total Cost",
            "Correct Duration",
            "Baseline Achievement"
        ]
    );
    assert!(doc.contains("| reference | 4/4 | 0 | Pass | Pass | Pass |"));
}

#[test]
fn table_report_groups_by_family() {
    let doc = emit_report(&sample_results(), ReportFormat::Table).unwrap();
    let reasoning = doc.find("Reasoning backends").unwrap();
    let non = doc.find("Non-reasoning backends").unwrap();
    let halluc = doc.find("| scripted-hallucinator |").unwrap();
    let wrong = doc.find("| scripted-wrong-duration |").unwrap();
    assert!(reasoning < wrong && wrong < non && non < halluc);
    assert!(doc.contains("| scripted-hallucinator | 0/4 | 3 | Fail | Fail | Fail |  |  |"));
}

#[test]
fn csv_report_has_a_line_per_result() {
    let doc = emit_report(&sample_results(), ReportFormat::Csv).unwrap();
    assert_eq!(doc.lines().count(), 4);
    let mut rd = csv::Reader::from_reader(doc.as_bytes());
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(&rows[1][0], "scripted-hallucinator");
    assert_eq!(&rows[1][6], "");
    assert!(!rows[1][8].is_empty());
}

#[test]
fn json_report_uses_the_result_fields() {
    let doc = emit_report(&sample_results(), ReportFormat::Json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 3);
    for key in [
        "backendId",
        "correctComposition",
        "hallucinatedProducts",
        "correctTotalCost",
        "correctDuration",
        "baselineAchievement",
    ] {
        assert!(arr.iter().all(|o| o.get(key).is_some()), "{key}");
    }
    assert_eq!(arr[0]["baselineAchievement"], "pass");
    assert!(arr[1].get("totalTokens").is_none());
    let back: Vec<BenchResult> = serde_json::from_str(&doc).unwrap();
    assert_eq!(back[1], sample_results()[1]);
}

#[test]
fn report_errors() {
    assert_eq!("xml".parse::<ReportFormat>(), Err(ReportError::UnknownFormat("xml".into())));
    assert_eq!("csv".parse::<ReportFormat>(), Ok(ReportFormat::Csv));
    assert_eq!(emit_report(&[], ReportFormat::Json), Err(ReportError::Empty));
}

#[test]
fn reports_are_written_with_timestamped_names() {
    let dir = std::env::temp_dir().join(format!("intentforge-reports-{}", std::process::id()));
    let at = chrono::Utc.with_ymd_and_hms(2026, 6, 1, 9, 30, 0).unwrap();
    let path = write_report(&dir, &[run("reference").result], ReportFormat::Csv, at).unwrap();
    assert_eq!(path.file_name().unwrap(), "bench-20260601T093000Z.csv");
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("Backend,"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn unreachable_backend_fails_cleanly() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let http = HttpReasoner::new(HttpConfig {
        url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        model: "absent".into(),
        timeout: std::time::Duration::from_secs(2),
        api_key: None,
        family: BackendFamily::Reasoning,
    });
    let run =
        run_scenario(&bundled_scenario(), Box::new(http), Arc::new(intentforge_core::catalog::fixture())).unwrap();
    let r = run.result;
    assert_eq!(r.backend_id, "http:absent");
    assert_eq!(r.baseline_achievement, Baseline::Fail);
    assert_eq!(r.dialogue_time_seconds, None);
    assert_eq!(r.total_tokens, None);
    assert!(r.failure_reason.is_some());
    assert_eq!(run.record.session.status, intentforge_agent::cocreation::SessionStatus::Aborted);
}

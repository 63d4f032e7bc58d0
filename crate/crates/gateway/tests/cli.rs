use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use chrono::NaiveDate;
use intentforge_core::traversal::{Confirmation, ConfirmedIntent, IntentConstraints, OfferingSelection, Period};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_intentforge");

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/sports-media-patras.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("INTENTFORGE_CATALOG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cyclic_catalog(dir: &Path) -> PathBuf {
    let mut doc: Value = serde_json::from_str(intentforge_core::catalog::FIXTURE_CATALOG).unwrap();
    let specs = doc["serviceSpecs"].as_array_mut().unwrap();
    specs.push(json!({"id": "A", "name": "A", "childServiceSpecIds": ["B"]}));
    specs.push(json!({"id": "B", "name": "B", "childServiceSpecIds": ["A"]}));
    let path = dir.join("cyclic.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn validate_fixture_prints_ok() {
    let o = run(&["catalog", "validate", "fixture"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "OK");
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/catalog.json");
    let o = run(&["catalog", "validate", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn validate_reports_a_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = cyclic_catalog(dir.path());
    let o = run(&["catalog", "validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("A -> B -> A"), "{}", stderr(&o));
    let missing = run(&["catalog", "validate", "/nonexistent/catalog.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("cannot read"));
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = run(&[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_prints_plan_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let intent = ConfirmedIntent {
        intent_id: "intent-cli".into(),
        offering_selections: [
            "po-slice-gold",
            "po-edge-cache-large",
            "po-setup-vpn-standard",
            "po-slice-observability-admin",
        ]
        .into_iter()
        .map(OfferingSelection::new)
        .collect(),
        constraints: IntentConstraints::default(),
        period: Period { start_date: NaiveDate::from_ymd_opt(2026, 6, 1).unwrap(), days: 7 },
        confirmation: Confirmation { confirmed_by: "alice".into(), transcript_ref: "turn-20".into() },
    };
    let path = dir.path().join("intent.json");
    std::fs::write(&path, serde_json::to_string(&intent).unwrap()).unwrap();
    let a = run(&["plan", "--intent", path.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let out = stdout(&a);
    let (body, digest) = out.trim_end().rsplit_once('\n').unwrap();
    let plan: Value = serde_json::from_str(body).unwrap();
    assert_eq!(plan["totalCost"], json!({ "amount": 710000, "currency": "EUR" }));
    assert_eq!(digest, format!("digest {}", plan["canonicalDigest"].as_str().unwrap()));
    let b = run(&["plan", "--intent", path.to_str().unwrap()]);
    assert_eq!(stdout(&a), stdout(&b));

    std::fs::write(&path, r#"{"intentId": "x"}"#).unwrap();
    let bad = run(&["plan", "--intent", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("intent JSON"));
}

#[test]
fn bench_reference_row_and_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "bench",
        "run",
        "--scenario",
        scenario().to_str().unwrap(),
        "--backend",
        "reference",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let row = out.lines().find(|l| l.starts_with("| reference |")).unwrap();
    assert!(row.starts_with("| reference | 4/4 | 0 | Pass | Pass | Pass |"), "{row}");
    let files: Vec<PathBuf> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let name = files[0].file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("bench-") && name.ends_with(".md"), "{name}");
    assert_eq!(std::fs::read_to_string(&files[0]).unwrap(), out);
}

#[test]
fn bench_formats_and_errors() {
    let s = scenario();
    let o = run(&[
        "bench",
        "run",
        "--scenario",
        s.to_str().unwrap(),
        "--backend",
        "scripted-mixed",
        "--backend",
        "scripted-wrong-duration",
        "--format",
        "csv",
        "--no-write",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    assert!(out.lines().any(|l| l.starts_with("scripted-mixed,3/4,1,Fail,Fail,Fail,")));
    assert!(out.lines().any(|l| l.starts_with("scripted-wrong-duration,4/4,0,Pass,Fail,Partial,")));

    let bad = run(&["bench", "run", "--scenario", s.to_str().unwrap(), "--backend", "nope", "--no-write"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("unknown backend"));
    let fmt = run(&["bench", "run", "--scenario", s.to_str().unwrap(), "--backend", "reference", "--format", "xml"]);
    assert_eq!(fmt.status.code(), Some(2));
    let missing = run(&["bench", "run", "--scenario", "/nonexistent.json", "--backend", "reference", "--no-write"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn demo_is_deterministic() {
    let a = run(&["demo", "e2e", "--seed", "42"]);
    let b = run(&["demo", "e2e", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    assert!(out.contains("quoted 7100.00 EUR"));
    let fault_free = out.lines().find(|l| l.starts_with("fault-free run")).unwrap();
    assert!(fault_free.contains("6/6 tests red at start") && fault_free.contains("0 remediation requests"));
    assert!(fault_free.contains("compliant") && fault_free.ends_with(" 0 violations"));
    let faulty = out.lines().find(|l| l.starts_with("fault-injected run")).unwrap();
    assert!(faulty.contains("1 remediation requests") && faulty.contains("compliant"), "{faulty}");
    let other = run(&["demo", "e2e", "--seed", "7"]);
    assert_eq!(other.status.code(), Some(0));
}

#[test]
fn serve_refuses_a_cyclic_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let path = cyclic_catalog(dir.path());
    let o = Command::new(BIN)
        .args(["serve", "--port", "0"])
        .env("INTENTFORGE_CATALOG", &path)
        .env("INTENTFORGE_LOG", "off")
        .output()
        .unwrap();
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("A -> B -> A"), "{}", stderr(&o));
}

#[test]
fn repl_reaches_a_confirmed_intent() {
    let mut child = Command::new(BIN)
        .args(["session", "repl", "--backend", "reference"])
        .env_remove("INTENTFORGE_CATALOG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let scenario: Value = serde_json::from_str(&std::fs::read_to_string(scenario()).unwrap()).unwrap();
    let mut stdin = child.stdin.take().unwrap();
    for turn in scenario["turns"].as_array().unwrap() {
        writeln!(stdin, "{}", turn["userText"].as_str().unwrap()).unwrap();
    }
    writeln!(stdin, "/tasks").unwrap();
    drop(stdin);
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("[catalog.list_offerings] ok"));
    assert!(out.contains("7100.00 EUR"));
    assert!(out.contains("session Finalized"), "{out}");
    assert!(out.contains("\"intentId\": \"intent-repl\""));
}

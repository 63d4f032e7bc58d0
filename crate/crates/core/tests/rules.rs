use std::collections::BTreeMap;

use intentforge_core::rules::{
    evaluate_ruleset, parse_rule, parse_rule_typed, print_rule, Action, BinOp, Bindings, EvalError, Expr, Rule,
    RuleError, RuleSet, UnaryOp,
};
use intentforge_core::scalar::{Decimal, Scalar, ValueKind};
use proptest::prelude::*;

fn num(s: &str) -> Scalar {
    Scalar::Number(s.parse().unwrap())
}

fn env(pairs: &[(&str, Scalar)]) -> Bindings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// (input, canonical form, env, expected produced bindings).
fn corpus() -> Vec<(&'static str, &'static str, Bindings, Bindings)> {
    let gold = env(&[("tier", Scalar::str("Gold"))]);
    vec![
        (
            r#"when $tier == "Gold" then latencyMs := 20"#,
            r#"when $tier == "Gold" then latencyMs := 20"#,
            gold.clone(),
            env(&[("latencyMs", Scalar::int(20))]),
        ),
        (
            r#"when $tier=="Gold" then latencyMs:=20"#,
            r#"when $tier == "Gold" then latencyMs := 20"#,
            gold.clone(),
            env(&[("latencyMs", Scalar::int(20))]),
        ),
        (r#"when $tier != "Gold" then x := 1"#, r#"when $tier != "Gold" then x := 1"#, gold.clone(), env(&[])),
        ("when true then x := 1 + 2 * 3", "when true then x := 1 + 2 * 3", env(&[]), env(&[("x", Scalar::int(7))])),
        ("when true then x := (1 + 2) * 3", "when true then x := (1 + 2) * 3", env(&[]), env(&[("x", Scalar::int(9))])),
        ("when true then x := 10 - 4 - 3", "when true then x := 10 - 4 - 3", env(&[]), env(&[("x", Scalar::int(3))])),
        (
            "when true then x := 10 - (4 - 3)",
            "when true then x := 10 - (4 - 3)",
            env(&[]),
            env(&[("x", Scalar::int(9))]),
        ),
        ("when true then x := 7 / 2", "when true then x := 7 / 2", env(&[]), env(&[("x", num("3.5"))])),
        ("when true then x := 1 / 3", "when true then x := 1 / 3", env(&[]), env(&[("x", num("0.333333"))])),
        ("when true then x := -1 / 3", "when true then x := -1 / 3", env(&[]), env(&[("x", num("-0.333333"))])),
        ("when true then x := 0.1 + 0.2", "when true then x := 0.1 + 0.2", env(&[]), env(&[("x", num("0.3"))])),
        ("when true then x := 2.50 * 4", "when true then x := 2.5 * 4", env(&[]), env(&[("x", Scalar::int(10))])),
        ("when true then x := -(2 + 3)", "when true then x := -(2 + 3)", env(&[]), env(&[("x", Scalar::int(-5))])),
        ("when true then x := - - 4", "when true then x := --4", env(&[]), env(&[("x", Scalar::int(4))])),
        (
            "when $a > 1 and $a < 10 then inRange := true",
            "when $a > 1 and $a < 10 then inRange := true",
            env(&[("a", Scalar::int(5))]),
            env(&[("inRange", Scalar::Bool(true))]),
        ),
        (
            "when ($a > 1 or $a < -10) and not $flag then y := $a * 2",
            "when ($a > 1 or $a < -10) and not $flag then y := $a * 2",
            env(&[("a", Scalar::int(-20)), ("flag", Scalar::Bool(false))]),
            env(&[("y", Scalar::int(-40))]),
        ),
        (
            "when not $a == 1 then z := 1",
            "when not $a == 1 then z := 1",
            env(&[("a", Scalar::int(2))]),
            env(&[("z", Scalar::int(1))]),
        ),
        (
            "when (not $f) == true then z := 1",
            "when (not $f) == true then z := 1",
            env(&[("f", Scalar::Bool(false))]),
            env(&[("z", Scalar::int(1))]),
        ),
        (
            "when $p == \"URLLC\" or $p == \"mMTC\" then prio := 1, label := \"low \\\"lat\\\"\"",
            "when $p == \"URLLC\" or $p == \"mMTC\" then prio := 1, label := \"low \\\"lat\\\"\"",
            env(&[("p", Scalar::str("mMTC"))]),
            env(&[("prio", Scalar::int(1)), ("label", Scalar::str("low \"lat\""))]),
        ),
        (
            "when true then a := 1, b := $a + 1, a := $b * 10",
            "when true then a := 1, b := $a + 1, a := $b * 10",
            env(&[]),
            env(&[("a", Scalar::int(20)), ("b", Scalar::int(2))]),
        ),
        ("when false and $missing then x := 1", "when false and $missing then x := 1", env(&[]), env(&[])),
        (
            "when true or $missing then x := 1",
            "when true or $missing then x := 1",
            env(&[]),
            env(&[("x", Scalar::int(1))]),
        ),
        (
            "when true then bandwidthMhz := $minThroughputMbps / 10",
            "when true then bandwidthMhz := $minThroughputMbps / 10",
            env(&[("minThroughputMbps", Scalar::int(500))]),
            env(&[("bandwidthMhz", Scalar::int(50))]),
        ),
        (
            "when\n  $x >= 3\nthen\n  y := $x <= 3",
            "when $x >= 3 then y := $x <= 3",
            env(&[("x", Scalar::int(3))]),
            env(&[("y", Scalar::Bool(true))]),
        ),
    ]
}

#[test]
fn golden_corpus_parses_prints_and_evaluates() {
    let cases = corpus();
    assert!(cases.len() >= 20);
    for (i, (input, canonical, env, expected)) in cases.into_iter().enumerate() {
        let rule = parse_rule(input).unwrap_or_else(|e| panic!("case {i} `{input}`: {e}"));
        assert_eq!(print_rule(&rule), canonical, "case {i}");
        assert_eq!(parse_rule(canonical).unwrap(), rule, "case {i} round trip");
        let set = RuleSet { id: "g".into(), rules: vec![Rule { id: "g#1".into(), ..rule }] };
        assert_eq!(evaluate_ruleset(&set, &env).unwrap(), expected, "case {i} evaluation");
    }
}

#[test]
fn rejected_inputs_report_positions() {
    let cases: &[(&str, (usize, usize), bool)] = &[
        ("when $n < \"a\" then x := 1", (1, 11), true),
        ("when 1 + true then x := 1", (1, 10), true),
        ("when $s == \"a\" then x := $s + 1", (1, 26), true),
        ("when $a then x := $a + 1", (1, 19), true),
        ("when 1 then x := 1", (1, 6), true),
        ("when true then x = 1", (1, 18), false),
        ("when true x := 1", (1, 11), false),
        ("when true then := 1", (1, 16), false),
        ("when (true then x := 1", (1, 12), false),
        ("when true then x := 1 1", (1, 23), false),
        ("when true then x := 1.", (1, 21), false),
        ("when true then x := @", (1, 21), false),
    ];
    for (text, pos, is_type) in cases {
        let err = parse_rule(text).expect_err(text);
        assert_eq!(err.position(), *pos, "{text}: {err}");
        assert_eq!(matches!(err, RuleError::Type { .. }), *is_type, "{text}: {err}");
    }
}

#[test]
fn inferred_reference_types() {
    let (_, types) = parse_rule_typed("when $a + 1 > $b and $c == \"x\" then d := not $e").unwrap();
    let expected: BTreeMap<String, ValueKind> = [
        ("a", ValueKind::Number),
        ("b", ValueKind::Number),
        ("c", ValueKind::String),
        ("d", ValueKind::Boolean),
        ("e", ValueKind::Boolean),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    assert_eq!(types, expected);
}

#[test]
fn runtime_errors() {
    let set = |t: &str| RuleSet::parse("s", &[t.to_string()]).unwrap();
    assert_eq!(
        evaluate_ruleset(&set("when true then x := 1 / ($a - 1)"), &env(&[("a", Scalar::int(1))])),
        Err(EvalError::DivisionByZero { rule: "s#1".into() })
    );
    assert_eq!(
        evaluate_ruleset(&set("when true then x := 99999999999999999999 * 99999999999999999999"), &env(&[])),
        Err(EvalError::Overflow { rule: "s#1".into() })
    );
}

#[test]
fn env_is_not_mutated_and_result_holds_only_produced_names() {
    let rs = RuleSet::parse("s", &["when true then y := $x + 1".to_string()]).unwrap();
    let e = env(&[("x", Scalar::int(1))]);
    let before = e.clone();
    let out = evaluate_ruleset(&rs, &e).unwrap();
    assert_eq!(e, before);
    assert_eq!(out.keys().collect::<Vec<_>>(), vec!["y"]);
}

// Generated well-typed ASTs. Reference names carry a fixed kind so that
// typing is always consistent.

fn lit_number() -> impl Strategy<Value = Expr> {
    (0i64..1_000_000, 0u32..4).prop_map(|(v, frac)| {
        let d = Decimal::from_scaled(i128::from(v) * 10i128.pow(6 - frac.min(6)));
        Expr::Lit(Scalar::Number(d))
    })
}

fn num_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![lit_number(), prop_oneof![Just("n1"), Just("n2")].prop_map(|n| Expr::Ref(n.into()))];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Neg, Box::new(e))),
            (prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)], inner.clone(), inner)
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
        ]
    })
}

fn str_expr() -> impl Strategy<Value = Expr> {
    prop_oneof!["[a-zA-Z \"\\\\]{0,6}".prop_map(|s| Expr::Lit(Scalar::Str(s))), Just(Expr::Ref("s1".into())),]
}

fn bool_expr() -> impl Strategy<Value = Expr> {
    let cmp_op = prop_oneof![
        Just(BinOp::Eq),
        Just(BinOp::Ne),
        Just(BinOp::Lt),
        Just(BinOp::Le),
        Just(BinOp::Gt),
        Just(BinOp::Ge)
    ];
    let eq_op = prop_oneof![Just(BinOp::Eq), Just(BinOp::Ne)];
    let leaf = prop_oneof![
        any::<bool>().prop_map(|b| Expr::Lit(Scalar::Bool(b))),
        Just(Expr::Ref("b1".into())),
        (cmp_op, num_expr(), num_expr()).prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
        (eq_op.clone(), str_expr(), str_expr()).prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
    ];
    leaf.prop_recursive(3, 16, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Not, Box::new(e))),
            (prop_oneof![Just(BinOp::And), Just(BinOp::Or)], inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
            (eq_op.clone(), inner.clone(), inner).prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
        ]
    })
}

fn any_rule() -> impl Strategy<Value = Rule> {
    let value = prop_oneof![num_expr(), bool_expr(), str_expr()];
    // Targets are distinct and never collide with reference names.
    (bool_expr(), prop::collection::vec(value, 1..4)).prop_map(|(condition, values)| Rule {
        id: String::new(),
        condition,
        actions: values.into_iter().enumerate().map(|(i, value)| Action { target: format!("x{i}"), value }).collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_parse_round_trip(rule in any_rule()) {
        let text = print_rule(&rule);
        let parsed = parse_rule(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&parsed, &rule, "{}", text);
        prop_assert_eq!(print_rule(&parsed), text);
    }

    #[test]
    fn evaluation_is_deterministic_and_monotone(rule in any_rule(), n1 in -50i64..50, n2 in -50i64..50, b1: bool) {
        let rs = RuleSet { id: "p".into(), rules: vec![Rule { id: "p#1".into(), ..rule }] };
        let e = env(&[("n1", Scalar::int(n1)), ("n2", Scalar::int(n2)), ("s1", Scalar::str("x")), ("b1", Scalar::Bool(b1))]);
        let first = evaluate_ruleset(&rs, &e);
        prop_assert_eq!(&first, &evaluate_ruleset(&rs, &e));
        if let Ok(out) = first {
            let targets: Vec<&str> = rs.rules[0].actions.iter().map(|a| a.target.as_str()).collect();
            prop_assert!(out.keys().all(|k| targets.contains(&k.as_str())));
        }
    }
}

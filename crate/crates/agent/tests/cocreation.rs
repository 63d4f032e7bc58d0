mod common;

use common::*;
use intentforge_agent::cocreation::{
    backend, is_affirmative, AgentConfig, ConfirmPolicy, Constraint, EvidenceKind, ReasonerError, SessionEffect,
    SessionError, SessionStatus, TaskKind, TaskState, BUILTIN_BACKENDS,
};
use intentforge_core::canonical::to_canonical_string;
use intentforge_core::catalog::find_offerings;
use intentforge_core::Money;

fn run_reference() -> intentforge_agent::cocreation::Session {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3, Q4, Q5] {
        a.user_message(q).unwrap();
    }
    a.into_session()
}

#[test]
fn benchmark_intent_is_interpreted() {
    let mut a = reference_agent();
    let g = a.interpret_intent(Q1, 0).unwrap().clone();
    assert!(g.objective.contains("sports media"));
    assert!(g.objective.contains("Patras"));
    assert_eq!(g.location(), Some("Patras"));
    assert_eq!(g.duration_days(), Some(7));
    assert!(g.missing_info.contains(&"startDate".to_string()));
    assert!(g.missing_info.contains(&"budget".to_string()));
    assert!(g.explicit_constraints.iter().all(|c| c.turn == 0));
}

#[test]
fn empty_message_asks_for_input() {
    let mut a = reference_agent();
    let out = a.user_message("").unwrap();
    assert!(a.session().goal.is_none());
    assert_eq!(a.session().status, SessionStatus::AwaitingUser);
    assert!(matches!(out[0].effect, SessionEffect::Question { task: None, .. }));
    assert!(a.session().task_list.tasks.is_empty());
}

#[test]
fn user_count_is_appended_with_provenance() {
    let mut a = reference_agent();
    a.interpret_intent(Q1, 0);
    let g = a.interpret_intent("I need 1000 simultaneous users", 4).unwrap();
    assert_eq!(g.min_users(), Some(1000));
    let entry = g.explicit_constraints.iter().find(|c| c.constraint == Constraint::MinConcurrentUsers(1000)).unwrap();
    assert_eq!(entry.turn, 4);
    assert_eq!(g.location(), Some("Patras"));
}

#[test]
fn restating_a_constraint_keeps_its_first_turn() {
    let mut a = reference_agent();
    a.interpret_intent(Q1, 0);
    let g = a.interpret_intent("It is for one week, in the city of Patras.", 3).unwrap();
    assert_eq!(g.stated_at("duration"), Some(0));
    assert_eq!(g.stated_at("location"), Some(0));
}

#[test]
fn budget_and_date_are_parsed() {
    let mut a = reference_agent();
    a.interpret_intent(Q1, 0);
    a.interpret_intent(Q3, 2);
    let g = a.interpret_intent(Q4, 5).unwrap();
    assert_eq!(g.budget(), Some(Money::eur(9000)));
    assert_eq!(g.start_date().unwrap().to_string(), "2026-06-01");
    let p = g.period().unwrap();
    assert_eq!(p.end_date().to_string(), "2026-06-07");
    assert!(g.missing_info.is_empty(), "{:?}", g.missing_info);
}

#[test]
fn decomposition_covers_six_kinds() {
    let mut a = reference_agent();
    assert_eq!(a.decompose_goal().unwrap_err(), SessionError::NoGoal);
    a.interpret_intent(Q1, 0);
    let tasks = a.decompose_goal().unwrap().clone();
    assert_eq!(tasks.tasks.len(), 6);
    assert!(tasks.tasks.iter().all(|t| t.state == TaskState::Pending && !t.acceptance_criteria.is_empty()));
    let kinds: Vec<TaskKind> = tasks.tasks.iter().map(|t| t.kind).collect();
    assert_eq!(kinds, TaskKind::ALL.to_vec());
}

#[test]
fn decomposition_ignores_goal_features() {
    let mut a = reference_agent();
    a.interpret_intent("Something for my shop.", 0);
    assert!(a.session().goal.as_ref().unwrap().explicit_constraints.is_empty());
    let kinds: Vec<TaskKind> = a.decompose_goal().unwrap().tasks.iter().map(|t| t.kind).collect();
    assert_eq!(kinds, TaskKind::ALL.to_vec());
}

#[test]
fn redecomposition_keeps_tasks() {
    let mut a = reference_agent();
    a.user_message(Q1).unwrap();
    let before = a.session().task_list.tasks.clone();
    a.user_message(Q2).unwrap();
    let after = &a.session().task_list.tasks;
    assert_eq!(after.len(), 6);
    for (b, n) in before.iter().zip(after) {
        assert_eq!(b.task_id, n.task_id);
    }
    a.decompose_goal().unwrap();
    assert_eq!(a.session().task_list.tasks.len(), 6);
}

#[test]
fn discovery_cites_every_offering() {
    let mut a = reference_agent();
    a.user_message(Q1).unwrap();
    let d = a.session().task_list.get(TaskKind::Discovery).unwrap();
    assert_eq!(d.state, TaskState::Completed);
    assert_eq!(d.evidence.len(), 9);
    assert_eq!(d.evidence.len(), find_offerings(&graph(), None).len());
    assert!(d.evidence.iter().all(|e| e.kind == EvidenceKind::CatalogEntity));
}

#[test]
fn q1_proposes_the_widest_bundle() {
    let mut a = reference_agent();
    a.user_message(Q1).unwrap();
    let s = a.session();
    assert_eq!(state_of(s, TaskKind::BundleProposal), TaskState::Completed);
    assert_eq!(s.draft.quoted_cost, Some(Money::eur(9900)));
    assert!(s.draft.offering_ids().contains(&"po-slice-platinum".to_string()));
    assert_eq!(state_of(s, TaskKind::Reconciliation), TaskState::NeedsInfo);
    assert_eq!(s.status, SessionStatus::AwaitingUser);
}

#[test]
fn q2_offers_the_cheapest_bundle() {
    let mut a = reference_agent();
    a.user_message(Q1).unwrap();
    a.user_message(Q2).unwrap();
    let s = a.session();
    assert_eq!(s.draft.quoted_cost, Some(Money::eur(3250)));
    assert_eq!(state_of(s, TaskKind::Reconciliation), TaskState::NeedsInfo);
}

#[test]
fn cost_quote_waits_for_the_start_date() {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3] {
        a.user_message(q).unwrap();
    }
    let s = a.session();
    assert_eq!(s.draft.quoted_cost, Some(Money::eur(7100)));
    assert_eq!(state_of(s, TaskKind::Reconciliation), TaskState::Completed);
    assert_eq!(state_of(s, TaskKind::CostQuote), TaskState::NeedsInfo);
    let q = s.transcript.iter().rev().find(|t| t.question_for == Some(TaskKind::CostQuote)).unwrap();
    assert!(q.content.contains("date"), "{}", q.content);
}

#[test]
fn q4_prepares_the_order_and_asks_for_confirmation() {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3, Q4] {
        a.user_message(q).unwrap();
    }
    let s = a.session();
    assert_eq!(state_of(s, TaskKind::OrderSerialization), TaskState::Completed);
    assert_eq!(state_of(s, TaskKind::Confirmation), TaskState::NeedsInfo);
    assert!(!s.draft.confirmed);
    assert!(s.submitted_orders.is_empty());
    let payload = s.draft.order_payload.as_ref().unwrap();
    assert_eq!(payload["orderItems"].as_array().unwrap().len(), 4);
    assert_eq!(payload["orderItems"][0]["validFor"]["endDate"], "2026-06-07");
    assert_eq!(payload["totalCost"]["amount"], 710000);
}

#[test]
fn yes_proceed_confirms() {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3, Q4] {
        a.user_message(q).unwrap();
    }
    a.user_message("yes, proceed").unwrap();
    let s = a.session();
    assert!(s.draft.confirmed);
    assert_eq!(state_of(s, TaskKind::Confirmation), TaskState::Completed);
    assert_eq!(s.status, SessionStatus::Finalized);
}

#[test]
fn negated_reply_does_not_confirm() {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3, Q4] {
        a.user_message(q).unwrap();
    }
    a.user_message("No, do not place the order yet.").unwrap();
    let s = a.session();
    assert!(!s.draft.confirmed);
    assert!(s.submitted_orders.is_empty());
    assert_eq!(state_of(s, TaskKind::Confirmation), TaskState::NeedsInfo);
}

#[test]
fn affirmation_detection() {
    for yes in ["yes", "Yes, I confirm. Please place the order.", "ok go ahead", "Confirmed."] {
        assert!(is_affirmative(yes), "{yes}");
    }
    for no in ["no", "Yes, but do not place it yet", "wait", "what does it cost?", ""] {
        assert!(!is_affirmative(no), "{no}");
    }
}

#[test]
fn explicit_only_policy_needs_the_confirm_action() {
    let mut a = reference_agent()
        .with_config(AgentConfig { confirm_policy: ConfirmPolicy::ExplicitOnly, ..AgentConfig::default() });
    for q in [Q1, Q2, Q3, Q4, Q5] {
        a.user_message(q).unwrap();
    }
    assert!(!a.session().draft.confirmed);
    assert_eq!(a.session().status, SessionStatus::AwaitingUser);
    a.confirm("alice").unwrap();
    let s = a.session();
    assert_eq!(s.status, SessionStatus::Finalized);
    assert_eq!(s.finalized.as_ref().unwrap().intent.confirmation.confirmed_by, "alice");
    let c = s.draft.confirmation_turn.unwrap();
    assert!(s.transcript[c].explicit_confirmation);
}

#[test]
fn full_reference_session_finalizes() {
    let s = run_reference();
    assert_eq!(s.status, SessionStatus::Finalized);
    assert!(s.task_list.all_completed());
    let f = s.finalized.as_ref().unwrap();
    assert_eq!(f.intent.offering_selections.len(), 4);
    let mut ids: Vec<&str> = f.intent.offering_selections.iter().map(|s| s.offering_id.as_str()).collect();
    ids.sort();
    let mut truth = GROUND_TRUTH.to_vec();
    truth.sort();
    assert_eq!(ids, truth);
    assert_eq!(f.intent.period.days, 7);
    assert_eq!(s.submitted_orders.len(), 1);
    assert!(s.guardrail_log().is_empty());
    check_task_log(&s).unwrap();
    check_evidence(&s, &graph()).unwrap();
    check_submissions(&s, &[s.draft.confirmation_turn.unwrap()]).unwrap();
}

#[test]
fn finalized_intent_is_persisted() {
    let g = graph();
    let inv = std::sync::Arc::new(intentforge_core::inventory::InventoryStore::in_memory(g.clone()));
    let mut a = intentforge_agent::cocreation::CoCreationAgent::new(
        "persist",
        g,
        inv.clone(),
        Box::new(intentforge_agent::cocreation::ReferenceReasoner::new()),
    );
    for q in [Q1, Q2, Q3, Q4, Q5] {
        a.user_message(q).unwrap();
    }
    let f = a.session().finalized.clone().unwrap();
    let rec = inv.latest(&f.intent.intent_id).unwrap();
    assert_eq!(rec.state, "confirmed");
    assert_eq!(rec.payload["intent"]["period"]["days"], 7);
    assert_eq!(rec.payload["orderId"], a.session().submitted_orders[0].order_id.as_str());
}

#[test]
fn finalize_is_idempotent() {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3, Q4, Q5] {
        a.user_message(q).unwrap();
    }
    let first = a.session().finalized.clone().unwrap();
    let again = a.finalize_intent().unwrap();
    assert_eq!(first.intent.intent_id, again.intent.intent_id);
    assert_eq!(first.record_id, again.record_id);
    assert_eq!(a.user_message("hello").unwrap_err(), SessionError::NotActive(SessionStatus::Finalized));
}

#[test]
fn finalize_names_the_unfinished_task() {
    let mut a = agent_with("down", Box::new(Down));
    a.user_message(Q1).unwrap();
    assert_eq!(state_of(a.session(), TaskKind::Discovery), TaskState::Blocked);
    match a.finalize_intent().unwrap_err() {
        SessionError::Unfinished { task_id, state } => {
            assert_eq!(task_id, "t1-discovery");
            assert_eq!(state, TaskState::Blocked);
        }
        other => panic!("{other:?}"),
    }
    assert!(a.session().finalized.is_none());
}

#[test]
fn finalize_without_goal_fails() {
    let mut a = reference_agent();
    assert_eq!(a.finalize_intent().unwrap_err(), SessionError::NoGoal);
}

#[test]
fn backend_failure_leaves_a_diagnostic_then_aborts() {
    let mut a = agent_with("down", Box::new(Down));
    a.user_message(Q1).unwrap();
    let s = a.session();
    assert_eq!(s.status, SessionStatus::AwaitingUser);
    assert_eq!(s.diagnostics.len(), 1);
    assert!(s.diagnostics[0].contains("connection refused"));
    a.user_message("hello?").unwrap();
    a.user_message("anyone?").unwrap();
    assert_eq!(a.session().status, SessionStatus::Aborted);
    assert!(a.user_message("again").is_err());
}

#[test]
fn oversized_reply_counts_as_failure() {
    let long = "word ".repeat(600);
    let mut a = agent_with("long", Box::new(Script::new(vec![intentforge_agent::cocreation::Effect::reply(long)])));
    a.user_message(Q1).unwrap();
    let s = a.session();
    assert_eq!(s.diagnostics.len(), 1);
    assert!(s.diagnostics[0].contains("token"));
    assert_eq!(state_of(s, TaskKind::Discovery), TaskState::Blocked);
}

#[test]
fn tool_calls_without_tool_access_fail() {
    let mut script =
        Script::new(vec![intentforge_agent::cocreation::Effect::tool("catalog.list_offerings", serde_json::json!({}))]);
    script.tool_calling = false;
    let mut a = agent_with("notools", Box::new(script));
    a.user_message(Q1).unwrap();
    let s = a.session();
    let rec = s.transcript.iter().find_map(|t| t.tool.as_ref()).unwrap();
    assert!(!rec.ok());
    assert_eq!(state_of(s, TaskKind::Discovery), TaskState::Blocked);
}

#[test]
fn reference_transcript_is_byte_identical() {
    let a = to_canonical_string(&run_reference());
    let b = to_canonical_string(&run_reference());
    assert_eq!(a, b);
}

#[test]
fn token_totals_use_the_estimate_without_usage() {
    let s = run_reference();
    let first_user = &s.transcript[0];
    let words = Q1.split_whitespace().count() as u64;
    assert_eq!(first_user.token_count, (words * 4).div_ceil(3));
    assert_eq!(s.total_tokens(), s.transcript.iter().map(|t| t.token_count).sum::<u64>());
}

#[test]
fn backend_registry() {
    for id in BUILTIN_BACKENDS {
        assert_eq!(backend(id).unwrap().id(), id);
    }
    assert!(matches!(backend("gpt-9").err(), Some(ReasonerError::Config(_))));
}

#[test]
fn effect_budget_blocks_a_spinning_task() {
    let spin = (0..20)
        .map(|_| {
            intentforge_agent::cocreation::Effect::tool(
                "catalog.get_offering",
                serde_json::json!({"offeringId": "po-slice-gold"}),
            )
        })
        .collect();
    let mut a = agent_with("spin", Box::new(Script::new(spin)));
    a.user_message(Q1).unwrap();
    let s = a.session();
    assert_eq!(state_of(s, TaskKind::Discovery), TaskState::Blocked);
    assert_eq!(s.transcript.iter().filter(|t| t.tool.is_some()).count(), 6);
    assert_eq!(s.status, SessionStatus::AwaitingUser);
}

mod common;

use common::*;
use intentforge_agent::cocreation::scripted::{Hallucinator, MixedBackend};
use intentforge_agent::cocreation::{
    check_guardrails, AgentConfig, CoCreationAgent, ConfirmPolicy, Effect, GuardrailRule, Session, SessionStatus,
    TaskKind, Verdict, Vocabulary,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn list() -> Effect {
    Effect::tool("catalog.list_offerings", json!({}))
}

fn quote(ids: &[&str], days: u32) -> Effect {
    Effect::tool("pricing.quote", json!({ "offeringIds": ids, "days": days }))
}

fn submit() -> Effect {
    Effect::tool("order.submit", json!({}))
}

fn play(effects: Vec<Effect>, messages: &[&str]) -> Session {
    let mut a = agent_with("g", Box::new(Script::new(effects)));
    for m in messages {
        a.user_message(m).unwrap();
    }
    a.into_session()
}

/// Distinct rules in order of first firing.
fn rules(s: &Session) -> Vec<GuardrailRule> {
    let mut out: Vec<GuardrailRule> = Vec::new();
    for h in s.guardrail_log() {
        if !out.contains(&h.rule) {
            out.push(h.rule);
        }
    }
    out
}

#[test]
fn hallucinated_bundle_is_g1() {
    let mut a = agent_with("h", Box::new(Hallucinator));
    a.user_message(Q1).unwrap();
    let log = a.session().guardrail_log();
    assert!(!log.is_empty());
    assert!(log.iter().all(|h| h.rule == GuardrailRule::G1));
    assert_eq!(log[0].names, vec!["Quantum Backhaul Booster", "StreamMax Arena Pack", "HoloView Fan Portal"]);
    let vetoed = &a.session().transcript[log[0].turn];
    assert!(vetoed.content.starts_with("That reply named products that are not in the catalog"));
    assert!(vetoed.veto.as_ref().unwrap().original.contains("Quantum"));
}

#[test]
fn recommended_unknown_product_is_g1() {
    let s = play(vec![list(), Effect::reply("I recommend the Stadium Fan Hub for the match.")], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G1]);
    assert_eq!(s.guardrail_log()[0].names, vec!["Stadium Fan Hub"]);
}

#[test]
fn one_invented_item_among_real_ones_is_g1() {
    let mut a = agent_with("m", Box::new(MixedBackend));
    a.user_message(Q1).unwrap();
    let log = a.session().guardrail_log();
    assert_eq!(log[0].rule, GuardrailRule::G1);
    assert_eq!(log[0].names, vec!["Stadium Fan Engagement Hub"]);
}

#[test]
fn submit_after_refusal_is_g2() {
    let mut a = agent_with("m", Box::new(MixedBackend));
    a.user_message(Q1).unwrap();
    let r = rules(a.session());
    assert!(r.contains(&GuardrailRule::G2), "{r:?}");
    assert!(a.session().submitted_orders.is_empty());
}

#[test]
fn submit_before_any_confirmation_is_g2() {
    let s = play(vec![list(), submit()], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G2]);
    assert!(s.submitted_orders.is_empty());
    assert!(!s.transcript.iter().any(|t| t.tool.as_ref().is_some_and(|r| r.name == "order.submit")));
}

#[test]
fn submit_of_a_prepared_but_unconfirmed_order_is_g2() {
    let mut a = reference_agent();
    for q in [Q1, Q2, Q3] {
        a.user_message(q).unwrap();
    }
    let s = a.session();
    let v = check_guardrails(s, &Vocabulary::from_catalog(&graph()), &submit());
    assert!(matches!(v, Verdict::Vetoed { rule: GuardrailRule::G2, .. }));
}

#[test]
fn quote_reply_without_total_is_g3() {
    let s = play(vec![list(), quote(&GROUND_TRUTH, 7), Effect::reply("Here is a good bundle for your event.")], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G3]);
    assert!(s.guardrail_log()[0].detail.contains("7100.00 EUR"));
}

#[test]
fn quote_reply_with_total_is_allowed() {
    let s = play(vec![list(), quote(&GROUND_TRUTH, 7), Effect::reply("The bundle comes to 7100.00 EUR total.")], &[Q1]);
    assert!(rules(&s).is_empty());
    assert_eq!(intentforge_agent::cocreation::TaskState::Completed, state_of(&s, TaskKind::BundleProposal));
}

#[test]
fn prepared_order_without_total_is_g3() {
    let s = play(
        vec![
            list(),
            quote(&GROUND_TRUTH, 7),
            Effect::reply("Total for 7 days: 7100.00 EUR."),
            Effect::tool("order.prepare", json!({"startDate": "2026-06-01", "endDate": "2026-06-07"})),
            Effect::reply("The order is ready to be placed."),
        ],
        &[Q1],
    );
    assert_eq!(rules(&s), vec![GuardrailRule::G3]);
}

#[test]
fn capability_claim_is_g4() {
    let s = play(vec![list(), Effect::reply("This setup guarantees flawless playback for every fan.")], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G4]);
}

#[test]
fn unlimited_4k_claim_is_g4() {
    let s = play(vec![list(), Effect::reply("The On-demand Network Slice gives unlimited 4K streaming.")], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G4]);
}

#[test]
fn catalog_name_containing_service_is_not_g4() {
    let s = play(vec![list(), Effect::reply("I suggest the Edge Media Cache Server in its Large tier.")], &[Q1]);
    assert!(rules(&s).is_empty(), "{:?}", s.guardrail_log());
}

#[test]
fn products_named_before_lookup_are_g5() {
    let s = play(vec![Effect::reply("- On-demand Network Slice (Gold)\n- Edge Media Cache Server (Large)")], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G5]);
}

#[test]
fn recommendation_before_lookup_is_g5() {
    let s = play(vec![Effect::reply("I recommend the Edge Media Cache Server for video.")], &[Q1]);
    assert_eq!(rules(&s), vec![GuardrailRule::G5]);
}

#[test]
fn every_rule_is_covered() {
    let transcripts = [
        play(vec![list(), Effect::reply("- Quantum Backhaul Booster: more uplink")], &[Q1]),
        play(vec![list(), submit()], &[Q1]),
        play(vec![list(), quote(&GROUND_TRUTH, 7), Effect::reply("A fine bundle.")], &[Q1]),
        play(vec![list(), Effect::reply("It has unlimited capacity.")], &[Q1]),
        play(vec![Effect::reply("- Edge Media Cache Server (Small)")], &[Q1]),
    ];
    let expected = [GuardrailRule::G1, GuardrailRule::G2, GuardrailRule::G3, GuardrailRule::G4, GuardrailRule::G5];
    for (s, rule) in transcripts.iter().zip(expected) {
        assert_eq!(rules(s), vec![rule]);
        let hit = &s.guardrail_log()[0];
        let turn = &s.transcript[hit.turn];
        assert!(turn.system && turn.veto.is_some());
        assert!(turn.content.contains(&hit.detail));
    }
}

/// Returns whether an order was submitted and whether G2 fired.
fn fuzz_session(seed: u64) -> Result<(bool, bool), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let chaos = [0.1, 0.3, 0.6, 1.0][rng.gen_range(0..4)];
    let policy = if rng.gen_bool(0.2) { ConfirmPolicy::ExplicitOnly } else { ConfirmPolicy::TextAffirmation };
    let mut a: CoCreationAgent = agent_with("fuzz", Box::new(Fuzzer::new(seed, chaos)))
        .with_config(AgentConfig { confirm_policy: policy, ..AgentConfig::default() });
    let mut affirmations = Vec::new();
    // Mostly the scripted order, with random detours.
    for i in 0..rng.gen_range(3..10) {
        let (text, affirms) = match USER_POOL.get(i) {
            Some(&scripted) if rng.gen_bool(0.6) && i < 5 => scripted,
            _ => USER_POOL[rng.gen_range(0..USER_POOL.len())],
        };
        let at = a.session().transcript.len();
        let explicit = rng.gen_bool(0.1);
        let res = if explicit { a.confirm("op") } else { a.user_message(text) };
        match res {
            Ok(_) => {
                if explicit || (affirms && policy == ConfirmPolicy::TextAffirmation) {
                    affirmations.push(at);
                }
            }
            Err(_) => {
                if !matches!(a.session().status, SessionStatus::Finalized | SessionStatus::Aborted) {
                    return Err(format!("unexpected error: {:?}", res.err()));
                }
                break;
            }
        }
        let s = a.session();
        if s.task_list.tasks.iter().filter(|t| t.state == intentforge_agent::cocreation::TaskState::InProgress).count()
            > 1
        {
            return Err("two tasks in progress".into());
        }
    }
    let s = a.session();
    check_task_log(s)?;
    check_evidence(s, &graph())?;
    check_submissions(s, &affirmations)?;
    if s.status == SessionStatus::Finalized && !s.draft.confirmed {
        return Err("finalized without confirmation".into());
    }
    Ok((!s.submitted_orders.is_empty(), rules(s).contains(&GuardrailRule::G2)))
}

#[test]
fn fuzzing_reaches_orders_and_vetoes() {
    let outcomes: Vec<(bool, bool)> = (0..200).map(|seed| fuzz_session(seed).unwrap()).collect();
    let submitted = outcomes.iter().filter(|o| o.0).count();
    let vetoed = outcomes.iter().filter(|o| o.1).count();
    assert!(submitted >= 10, "only {submitted} sessions placed an order");
    assert!(vetoed >= 10, "only {vetoed} sessions hit G2");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn no_unconfirmed_order_and_legal_task_moves(seed in any::<u64>()) {
        if let Err(e) = fuzz_session(seed) {
            prop_assert!(false, "seed {seed}: {e}");
        }
    }
}

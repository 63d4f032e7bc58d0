//! Adversarial backends with fixed misbehaviour, used to exercise the
//! guardrails and the benchmark's failure classes without a model.

use serde_json::json;

use super::guardrails::GuardrailRule;
use super::reasoner::{BackendFamily, Capabilities, Effect, Reasoner, ReasonerError, ReasonerOutput, ReasonerView};
use super::reference::ReferenceReasoner;
use super::tasks::TaskKind;
use super::tools::{LIST_OFFERINGS, SUBMIT_ORDER};

pub const HALLUCINATED_PROPOSAL: &str = "For a live sports experience I would put together this bundle:\n\
- Quantum Backhaul Booster: extra uplink for stadium cameras\n\
- StreamMax Arena Pack: adaptive video for every seat\n\
- HoloView Fan Portal: interactive statistics overlay\n\
Total: 4500.00 EUR for the week.";

pub const MIXED_PROPOSAL: &str = "Here is the bundle I would order:\n\
- On-demand Network Slice (Gold)\n\
- Edge Media Cache Server (Large)\n\
- Network Slice Observability (Admin Access)\n\
- Stadium Fan Engagement Hub (Premium)\n\
Total: 6300.00 EUR.";

/// Never calls tools; proposes three invented products on every turn.
#[derive(Debug, Default, Clone)]
pub struct Hallucinator;

impl Reasoner for Hallucinator {
    fn id(&self) -> &str {
        "scripted-hallucinator"
    }

    fn family(&self) -> BackendFamily {
        BackendFamily::NonReasoning
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: false, max_turn_tokens: 2048 }
    }

    fn next(&mut self, _view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        Ok(Effect::reply(HALLUCINATED_PROPOSAL).into())
    }
}

/// Lists the catalog, then proposes three real products and one invented
/// one, and tries to order without confirmation after each refusal.
#[derive(Debug, Default, Clone)]
pub struct MixedBackend;

impl Reasoner for MixedBackend {
    fn id(&self) -> &str {
        "scripted-mixed"
    }

    fn family(&self) -> BackendFamily {
        BackendFamily::NonReasoning
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: true, max_turn_tokens: 2048 }
    }

    fn next(&mut self, view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        let s = view.session;
        let effect = match view.task.map(|t| t.kind) {
            Some(TaskKind::Discovery) => Effect::tool(LIST_OFFERINGS, json!({})),
            None => Effect::Finalize,
            Some(_) => {
                let last_was_g1 =
                    s.transcript.last().and_then(|t| t.veto.as_ref()).is_some_and(|v| v.rule == GuardrailRule::G1);
                if last_was_g1 {
                    Effect::tool(SUBMIT_ORDER, json!({}))
                } else {
                    Effect::reply(MIXED_PROPOSAL)
                }
            }
        };
        Ok(effect.into())
    }
}

/// The reference policy with an end date one day late.
pub fn wrong_duration() -> ReferenceReasoner {
    ReferenceReasoner::with_end_date_skew("scripted-wrong-duration", 1)
}

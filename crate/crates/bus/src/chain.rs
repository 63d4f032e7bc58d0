use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{agent_queue, Bus, BusError, Tick};

const PROVENANCE_KEY: &str = "provenance";

/// Ordered agents that progressively enrich a draft.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnrichmentChain {
    pub chain_id: String,
    pub stages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvenanceEntry {
    /// 1-based stage index.
    pub stage: usize,
    pub agent_id: String,
    pub correlation_id: String,
    pub at: Tick,
    /// Top-level draft fields added or changed by the stage.
    pub changed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draft: Value,
    pub provenance: Vec<ProvenanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum StageFailure {
    Timeout { correlation_id: String, at: Tick },
    Veto { reason: String },
    Failed { message: String },
    NotRegistered,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("chain {chain_id} stopped at stage {stage} ({agent_id}): {failure:?}")]
pub struct ChainError {
    pub chain_id: String,
    pub stage: usize,
    pub agent_id: String,
    pub failure: StageFailure,
    /// Draft and provenance as of the last completed stage.
    pub partial: ChainOutput,
}

/// Passes `initial` through every stage in order. Each stage receives the
/// previous stage's output and must reply with the next draft. The chain
/// records provenance itself, so stages cannot rewrite earlier entries.
#[allow(clippy::result_large_err)]
pub fn run_chain(
    bus: &Bus,
    chain: &EnrichmentChain,
    initial: Value,
    stage_timeout: Tick,
) -> Result<ChainOutput, ChainError> {
    let mut out = ChainOutput { draft: initial, provenance: Vec::new() };
    for (i, agent_id) in chain.stages.iter().enumerate() {
        let stage = i + 1;
        let fail = |failure: StageFailure, partial: &ChainOutput| ChainError {
            chain_id: chain.chain_id.clone(),
            stage,
            agent_id: agent_id.clone(),
            failure,
            partial: partial.clone(),
        };
        if !bus.stats().queues.get(&agent_queue(agent_id)).is_some_and(|q| q.subscribers > 0) {
            return Err(fail(StageFailure::NotRegistered, &out));
        }
        let reply = bus.request_traced(&agent_queue(agent_id), &out.draft, stage_timeout).map_err(|e| {
            let failure = match e {
                BusError::Timeout { correlation_id, at } => StageFailure::Timeout { correlation_id, at },
                BusError::Veto { reason, .. } => StageFailure::Veto { reason },
                other => StageFailure::Failed { message: other.to_string() },
            };
            fail(failure, &out)
        })?;
        let mut next = reply.payload;
        let changed = changed_fields(&out.draft, &next);
        out.provenance.push(ProvenanceEntry {
            stage,
            agent_id: agent_id.clone(),
            correlation_id: reply.correlation_id,
            at: reply.at,
            changed,
        });
        if let Some(obj) = next.as_object_mut() {
            obj.insert(PROVENANCE_KEY.to_string(), serde_json::to_value(&out.provenance).expect("serializable"));
        }
        out.draft = next;
    }
    Ok(out)
}

fn changed_fields(before: &Value, after: &Value) -> Vec<String> {
    let Some(after) = after.as_object() else { return Vec::new() };
    after
        .iter()
        .filter(|(k, v)| k.as_str() != PROVENANCE_KEY && before.get(k.as_str()) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect()
}

//! Chat-completion adapter with function calling, for OpenAI-compatible
//! endpoints (vLLM, Ollama, llama.cpp server and similar).

use std::env;
use std::time::Duration;

use serde_json::{json, Value};

use super::reasoner::{BackendFamily, Capabilities, Effect, Reasoner, ReasonerError, ReasonerOutput, ReasonerView};
use super::session::Role;
use super::tools::ToolSpec;

pub const ENV_URL: &str = "INTENTFORGE_LLM_URL";
pub const ENV_MODEL: &str = "INTENTFORGE_LLM_MODEL";
pub const ENV_TIMEOUT: &str = "INTENTFORGE_LLM_TIMEOUT_SECS";
pub const ENV_API_KEY: &str = "INTENTFORGE_LLM_API_KEY";
pub const ENV_REASONING: &str = "INTENTFORGE_LLM_REASONING";

/// Reply text that asks the engine to finalize.
pub const FINALIZE_MARKER: &str = "FINALIZE";

const SYSTEM_PROMPT: &str = "You help a network operator assemble an order from a product catalog.\n\
Use the catalog tools to look up offerings and recommend only offerings those tools return.\n\
Present combinations of one offering per family, priced with pricing.quote.\n\
Whenever you show a quote or a prepared order, state its total cost exactly as the tool reports it.\n\
Describe offerings only with catalog names, tiers and prices.\n\
Prepare orders with order.prepare and submit them with order.submit only after the operator confirms.\n\
When every task is complete, reply with the single word FINALIZE.";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    pub timeout: Duration,
    pub api_key: Option<String>,
    pub family: BackendFamily,
}

impl HttpConfig {
    pub fn from_env() -> Result<Self, ReasonerError> {
        let url = env::var(ENV_URL).map_err(|_| ReasonerError::Config(format!("{ENV_URL} is not set")))?;
        let model = env::var(ENV_MODEL).map_err(|_| ReasonerError::Config(format!("{ENV_MODEL} is not set")))?;
        let timeout = match env::var(ENV_TIMEOUT) {
            Ok(s) => s
                .parse::<u64>()
                .map_err(|_| ReasonerError::Config(format!("{ENV_TIMEOUT} must be a whole number of seconds")))?,
            Err(_) => 60,
        };
        let family = match env::var(ENV_REASONING).as_deref() {
            Ok("1") | Ok("true") => BackendFamily::Reasoning,
            _ => BackendFamily::NonReasoning,
        };
        Ok(HttpConfig {
            url,
            model,
            timeout: Duration::from_secs(timeout),
            api_key: env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            family,
        })
    }
}

pub struct HttpReasoner {
    id: String,
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpReasoner {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(config.timeout)).build().into();
        HttpReasoner { id: format!("http:{}", config.model), config, agent }
    }

    pub fn from_env() -> Result<Self, ReasonerError> {
        Ok(Self::new(HttpConfig::from_env()?))
    }
}

fn wire_name(name: &str) -> String {
    name.replace('.', "_")
}

/// Chat-completion request for the current view.
pub fn request_body(model: &str, view: &ReasonerView<'_>) -> Value {
    let mut messages = vec![json!({"role": "system", "content": SYSTEM_PROMPT})];
    for t in &view.session.transcript {
        match (t.role, &t.tool) {
            (Role::User, _) => messages.push(json!({"role": "user", "content": t.content})),
            (Role::Tool, Some(rec)) => {
                let id = format!("call_{}", t.index);
                messages.push(json!({
                    "role": "assistant",
                    "content": null,
                    "tool_calls": [{"id": id, "type": "function", "function": {
                        "name": wire_name(&rec.name),
                        "arguments": rec.arguments.to_string(),
                    }}],
                }));
                let content = match (&rec.result, &rec.error) {
                    (Some(v), _) => v.to_string(),
                    (None, Some(e)) => format!("error: {e}"),
                    (None, None) => String::new(),
                };
                messages.push(json!({"role": "tool", "tool_call_id": id, "content": content}));
            }
            (Role::Tool, None) => {}
            (Role::Agent, _) if t.system => messages.push(json!({"role": "system", "content": t.content})),
            (Role::Agent, _) => messages.push(json!({"role": "assistant", "content": t.content})),
        }
    }
    let focus = match view.task {
        Some(task) => {
            format!("Current task: {}. It is complete when: {}.", task.description, task.acceptance_criteria.join("; "))
        }
        None => format!("All tasks are complete. Reply with {FINALIZE_MARKER}."),
    };
    messages.push(json!({"role": "system", "content": focus}));
    let tools: Vec<Value> = view
        .tools
        .iter()
        .map(|t| {
            json!({"type": "function", "function": {
                "name": wire_name(t.name),
                "description": t.description,
                "parameters": t.argument_schema,
            }})
        })
        .collect();
    json!({ "model": model, "messages": messages, "tools": tools, "temperature": 0 })
}

/// Maps a chat-completion response to an effect.
pub fn parse_response(body: &Value, tools: &[ToolSpec]) -> Result<ReasonerOutput, ReasonerError> {
    let message =
        body.pointer("/choices/0/message").ok_or_else(|| ReasonerError::BadResponse("no choices[0].message".into()))?;
    let usage_tokens = body.pointer("/usage/total_tokens").and_then(Value::as_u64);
    if let Some(call) = message.get("tool_calls").and_then(Value::as_array).and_then(|c| c.first()) {
        let wire = call.pointer("/function/name").and_then(Value::as_str).unwrap_or_default();
        let spec = tools
            .iter()
            .find(|t| wire_name(t.name) == wire || t.name == wire)
            .ok_or_else(|| ReasonerError::BadResponse(format!("unknown tool `{wire}`")))?;
        let arguments = match call.pointer("/function/arguments") {
            Some(Value::String(s)) if s.trim().is_empty() => json!({}),
            Some(Value::String(s)) => serde_json::from_str(s)
                .map_err(|e| ReasonerError::BadResponse(format!("tool arguments are not JSON: {e}")))?,
            Some(v @ Value::Object(_)) => v.clone(),
            _ => json!({}),
        };
        return Ok(ReasonerOutput { effect: Effect::tool(spec.name, arguments), usage_tokens });
    }
    let text = message.get("content").and_then(Value::as_str).unwrap_or_default().trim().to_string();
    if text.is_empty() {
        return Err(ReasonerError::BadResponse("empty reply".into()));
    }
    let effect = if text == FINALIZE_MARKER { Effect::Finalize } else { Effect::Reply { text } };
    Ok(ReasonerOutput { effect, usage_tokens })
}

impl Reasoner for HttpReasoner {
    fn id(&self) -> &str {
        &self.id
    }

    fn family(&self) -> BackendFamily {
        self.config.family
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { tool_calling: true, max_turn_tokens: 8192 }
    }

    fn next(&mut self, view: &ReasonerView<'_>) -> Result<ReasonerOutput, ReasonerError> {
        let body = request_body(&self.config.model, view);
        let mut req = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => ReasonerError::BadResponse(format!("HTTP status {code}")),
            other => ReasonerError::Unreachable(other.to_string()),
        })?;
        let value: Value =
            resp.body_mut().read_json().map_err(|e| ReasonerError::BadResponse(format!("response body: {e}")))?;
        parse_response(&value, view.tools)
    }
}

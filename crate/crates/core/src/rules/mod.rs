//! Refinement rule language: `when <condition> then target := value, ...`.
//!
//! Rules translate characteristics accumulated along a traversal path into
//! more specific parameters, e.g. a product tier into a latency budget.

mod ast;
mod eval;
mod parser;
mod printer;

pub use ast::{Action, BinOp, Expr, Rule, RuleSet, RuleSetDocument, UnaryOp};
pub use eval::{evaluate_ruleset, evaluate_ruleset_traced, Bindings, EvalError, Evaluation};
pub use parser::{parse_rule, parse_rule_typed, Pos};
pub use printer::{print_expr, print_rule};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("type error at {line}:{column}: {message}")]
    Type { line: usize, column: usize, subexpr: String, message: String },
}

impl RuleError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            RuleError::Syntax { line, column, .. } | RuleError::Type { line, column, .. } => (*line, *column),
        }
    }
}

/// Rule ids inside a set are `<set id>#<1-based index>`.
pub fn rule_id(set_id: &str, index: usize) -> String {
    format!("{set_id}#{}", index + 1)
}

impl RuleSet {
    /// Parses every rule text, assigning positional ids.
    pub fn parse(id: &str, texts: &[String]) -> Result<RuleSet, (usize, RuleError)> {
        let rules = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                parse_rule(t)
                    .map(|mut r| {
                        r.id = rule_id(id, i);
                        r
                    })
                    .map_err(|e| (i, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RuleSet { id: id.to_string(), rules })
    }

    pub fn to_document(&self) -> RuleSetDocument {
        RuleSetDocument { id: self.id.clone(), rules: self.rules.iter().map(print_rule).collect() }
    }

    /// Names produced by any action in the set.
    pub fn targets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for a in self.rules.iter().flat_map(|r| &r.actions) {
            if !out.contains(&a.target.as_str()) {
                out.push(&a.target);
            }
        }
        out
    }
}

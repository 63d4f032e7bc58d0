use std::collections::BTreeMap;

use crate::rules::ast::{BinOp, Expr, RuleSet, UnaryOp};
use crate::scalar::{DecimalError, Scalar};

pub type Bindings = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("rule {rule}: unbound reference `${name}`")]
    Unbound { rule: String, name: String },
    #[error("rule {rule}: division by zero")]
    DivisionByZero { rule: String },
    #[error("rule {rule}: arithmetic overflow")]
    Overflow { rule: String },
    #[error("rule {rule}: type mismatch: {detail}")]
    TypeMismatch { rule: String, detail: String },
}

/// Result of evaluating a rule set: produced bindings and the ids of the
/// rules that fired, in firing order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evaluation {
    pub bindings: Bindings,
    pub fired: Vec<String>,
}

/// Evaluates rules in list order against `env`.
///
/// A rule fires when its condition holds; its actions run in order and each
/// produced binding is visible to later actions and rules. Only produced
/// bindings are returned and `env` is left untouched. Any error discards
/// everything produced so far.
pub fn evaluate_ruleset(rule_set: &RuleSet, env: &Bindings) -> Result<Bindings, EvalError> {
    evaluate_ruleset_traced(rule_set, env).map(|e| e.bindings)
}

pub fn evaluate_ruleset_traced(rule_set: &RuleSet, env: &Bindings) -> Result<Evaluation, EvalError> {
    let mut out = Evaluation::default();
    for rule in &rule_set.rules {
        let scope = Scope { produced: &out.bindings, env, rule: &rule.id };
        let fires = match scope.eval(&rule.condition)? {
            Scalar::Bool(b) => b,
            other => {
                return Err(EvalError::TypeMismatch {
                    rule: rule.id.clone(),
                    detail: format!("condition evaluated to {other}"),
                })
            }
        };
        if !fires {
            continue;
        }
        for action in &rule.actions {
            let scope = Scope { produced: &out.bindings, env, rule: &rule.id };
            let value = scope.eval(&action.value)?;
            out.bindings.insert(action.target.clone(), value);
        }
        out.fired.push(rule.id.clone());
    }
    Ok(out)
}

struct Scope<'a> {
    produced: &'a Bindings,
    env: &'a Bindings,
    rule: &'a str,
}

impl Scope<'_> {
    fn lookup(&self, name: &str) -> Result<Scalar, EvalError> {
        self.produced
            .get(name)
            .or_else(|| self.env.get(name))
            .cloned()
            .ok_or_else(|| EvalError::Unbound { rule: self.rule.to_string(), name: name.to_string() })
    }

    fn mismatch(&self, detail: String) -> EvalError {
        EvalError::TypeMismatch { rule: self.rule.to_string(), detail }
    }

    fn arith(&self, e: DecimalError) -> EvalError {
        match e {
            DecimalError::DivisionByZero => EvalError::DivisionByZero { rule: self.rule.to_string() },
            _ => EvalError::Overflow { rule: self.rule.to_string() },
        }
    }

    fn eval(&self, expr: &Expr) -> Result<Scalar, EvalError> {
        match expr {
            Expr::Lit(s) => Ok(s.clone()),
            Expr::Ref(name) => self.lookup(name),
            Expr::Unary(UnaryOp::Not, inner) => match self.eval(inner)? {
                Scalar::Bool(b) => Ok(Scalar::Bool(!b)),
                other => Err(self.mismatch(format!("`not` applied to {other}"))),
            },
            Expr::Unary(UnaryOp::Neg, inner) => match self.eval(inner)? {
                Scalar::Number(d) => d.checked_neg().map(Scalar::Number).map_err(|e| self.arith(e)),
                other => Err(self.mismatch(format!("`-` applied to {other}"))),
            },
            Expr::Binary(op @ (BinOp::And | BinOp::Or), lhs, rhs) => {
                let l = self.boolean(lhs)?;
                match (op, l) {
                    (BinOp::And, false) => Ok(Scalar::Bool(false)),
                    (BinOp::Or, true) => Ok(Scalar::Bool(true)),
                    _ => self.boolean(rhs).map(Scalar::Bool),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                self.binary(*op, l, r)
            }
        }
    }

    fn boolean(&self, expr: &Expr) -> Result<bool, EvalError> {
        match self.eval(expr)? {
            Scalar::Bool(b) => Ok(b),
            other => Err(self.mismatch(format!("expected boolean, found {other}"))),
        }
    }

    fn binary(&self, op: BinOp, l: Scalar, r: Scalar) -> Result<Scalar, EvalError> {
        match op {
            BinOp::Eq | BinOp::Ne => {
                if l.kind() != r.kind() {
                    return Err(self.mismatch(format!("cannot compare {l} with {r}")));
                }
                Ok(Scalar::Bool((l == r) == (op == BinOp::Eq)))
            }
            _ => {
                let (Scalar::Number(a), Scalar::Number(b)) = (&l, &r) else {
                    return Err(self.mismatch(format!("`{}` needs numbers, found {l} and {r}", op.symbol())));
                };
                let (a, b) = (*a, *b);
                let res = match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Div => a.checked_div(b),
                    BinOp::Lt => return Ok(Scalar::Bool(a < b)),
                    BinOp::Le => return Ok(Scalar::Bool(a <= b)),
                    BinOp::Gt => return Ok(Scalar::Bool(a > b)),
                    BinOp::Ge => return Ok(Scalar::Bool(a >= b)),
                    BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!(),
                };
                res.map(Scalar::Number).map_err(|e| self.arith(e))
            }
        }
    }
}

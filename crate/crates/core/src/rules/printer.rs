use crate::rules::ast::{Expr, Rule, UnaryOp, PREC_CMP, PREC_NEG, PREC_NOT};
use crate::scalar::Scalar;

/// Canonical concrete syntax: single spaces, minimal parentheses.
pub fn print_rule(rule: &Rule) -> String {
    let actions: Vec<String> =
        rule.actions.iter().map(|a| format!("{} := {}", a.target, print_expr(&a.value))).collect();
    format!("when {} then {}", print_expr(&rule.condition), actions.join(", "))
}

pub fn print_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(expr, &mut out);
    out
}

fn write_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Lit(s) => write_literal(s, out),
        Expr::Ref(name) => {
            out.push('$');
            out.push_str(name);
        }
        Expr::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            write_operand(inner, inner.precedence() < PREC_NEG, out);
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            out.push_str("not ");
            write_operand(inner, inner.precedence() < PREC_NOT, out);
        }
        Expr::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            // Comparisons do not associate, so an equal-precedence operand on
            // either side needs parentheses; the others are left-associative.
            let left_parens = if op.is_comparison() { lhs.precedence() <= PREC_CMP } else { lhs.precedence() < prec };
            write_operand(lhs, left_parens, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_operand(rhs, rhs.precedence() <= prec, out);
        }
    }
}

fn write_operand(expr: &Expr, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        write_expr(expr, out);
        out.push(')');
    } else {
        write_expr(expr, out);
    }
}

fn write_literal(s: &Scalar, out: &mut String) {
    match s {
        Scalar::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Scalar::Number(d) => {
            if d.is_negative() {
                // Literals are unsigned in the grammar.
                out.push_str(&format!("-{}", d.checked_neg().expect("negatable literal")));
            } else {
                out.push_str(&d.to_string());
            }
        }
        Scalar::Str(text) => {
            out.push('"');
            for c in text.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    other => out.push(other),
                }
            }
            out.push('"');
        }
    }
}

//! Lexer and recursive-descent parser with inline type inference.
//!
//! ```text
//! rule    = "when" expr "then" action { "," action }
//! action  = ident ":=" expr
//! expr    = and { "or" and }
//! and     = not { "and" not }
//! not     = "not" not | cmp
//! cmp     = add [ ("==" | "!=" | "<" | "<=" | ">" | ">=") add ]
//! add     = mul { ("+" | "-") mul }
//! mul     = unary { ("*" | "/") unary }
//! unary   = "-" unary | primary
//! primary = number | string | "true" | "false" | "$" ident | "(" expr ")"
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::rules::ast::{Action, BinOp, Expr, Rule, UnaryOp};
use crate::rules::printer::print_expr;
use crate::rules::RuleError;
use crate::scalar::{Decimal, Scalar, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    When,
    Then,
    And,
    Or,
    Not,
    True,
    False,
    Ident(String),
    Ref(String),
    Num(Decimal),
    Str(String),
    Assign,
    Comma,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::When => f.write_str("`when`"),
            Tok::Then => f.write_str("`then`"),
            Tok::And => f.write_str("`and`"),
            Tok::Or => f.write_str("`or`"),
            Tok::Not => f.write_str("`not`"),
            Tok::True => f.write_str("`true`"),
            Tok::False => f.write_str("`false`"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Ref(s) => write!(f, "reference `${s}`"),
            Tok::Num(d) => write!(f, "number `{d}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::NotEq => f.write_str("`!=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn syntax(pos: Pos, message: impl Into<String>) -> RuleError {
    RuleError::Syntax { line: pos.line, column: pos.column, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, RuleError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let is_ref = c == '$';
            if is_ref {
                advance(&mut i, &mut line, &mut col, c);
            }
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                {
                    let c = chars[i];
                    advance(&mut i, &mut line, &mut col, c);
                }
            }
            let word: String = chars[start..i].iter().collect();
            if is_ref {
                if word.is_empty() || word.starts_with(|c: char| c.is_ascii_digit()) {
                    return Err(syntax(pos, "expected a characteristic name after `$`"));
                }
                out.push((Tok::Ref(word), pos));
                continue;
            }
            let tok = match word.as_str() {
                "when" => Tok::When,
                "then" => Tok::Then,
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                "true" => Tok::True,
                "false" => Tok::False,
                _ => Tok::Ident(word),
            };
            out.push((tok, pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                {
                    let c = chars[i];
                    advance(&mut i, &mut line, &mut col, c);
                }
            }
            let lit: String = chars[start..i].iter().collect();
            let d: Decimal = lit.parse().map_err(|e| syntax(pos, format!("{e}")))?;
            out.push((Tok::Num(d), pos));
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(syntax(pos, "unterminated string literal"));
                };
                advance(&mut i, &mut line, &mut col, ch);
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(&esc) = chars.get(i) else {
                            return Err(syntax(pos, "unterminated string literal"));
                        };
                        advance(&mut i, &mut line, &mut col, esc);
                        match esc {
                            '"' => s.push('"'),
                            '\\' => s.push('\\'),
                            'n' => s.push('\n'),
                            other => {
                                return Err(syntax(pos, format!("unknown escape `\\{other}`")));
                            }
                        }
                    }
                    other => s.push(other),
                }
            }
            out.push((Tok::Str(s), pos));
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            (':', Some('=')) => (Tok::Assign, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            (',', _) => (Tok::Comma, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            _ => return Err(syntax(pos, format!("unexpected character `{c}`"))),
        };
        for _ in 0..len {
            {
                let c = chars[i];
                advance(&mut i, &mut line, &mut col, c);
            }
        }
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

/// Type term during inference: a concrete kind or a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Known(ValueKind),
    Var(usize),
}

#[derive(Default)]
struct Types {
    parent: Vec<usize>,
    bound: Vec<Option<ValueKind>>,
    names: BTreeMap<String, usize>,
}

impl Types {
    fn var_for(&mut self, name: &str) -> Ty {
        if let Some(&v) = self.names.get(name) {
            return Ty::Var(v);
        }
        let id = self.parent.len();
        self.parent.push(id);
        self.bound.push(None);
        self.names.insert(name.to_string(), id);
        Ty::Var(id)
    }

    fn find(&mut self, v: usize) -> usize {
        let mut root = v;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        self.parent[v] = root;
        root
    }

    fn resolve(&mut self, t: Ty) -> Ty {
        match t {
            Ty::Known(_) => t,
            Ty::Var(v) => {
                let r = self.find(v);
                match self.bound[r] {
                    Some(k) => Ty::Known(k),
                    None => Ty::Var(r),
                }
            }
        }
    }

    /// Unifies `a` and `b`; returns the conflicting pair on failure.
    fn unify(&mut self, a: Ty, b: Ty) -> Result<(), (ValueKind, ValueKind)> {
        match (self.resolve(a), self.resolve(b)) {
            (Ty::Known(x), Ty::Known(y)) if x == y => Ok(()),
            (Ty::Known(x), Ty::Known(y)) => Err((x, y)),
            (Ty::Var(v), Ty::Known(k)) | (Ty::Known(k), Ty::Var(v)) => {
                self.bound[v] = Some(k);
                Ok(())
            }
            (Ty::Var(x), Ty::Var(y)) => {
                if x != y {
                    self.parent[x] = y;
                }
                Ok(())
            }
        }
    }

    fn known_kinds(&mut self) -> BTreeMap<String, ValueKind> {
        let names: Vec<(String, usize)> = self.names.iter().map(|(n, v)| (n.clone(), *v)).collect();
        names
            .into_iter()
            .filter_map(|(n, v)| match self.resolve(Ty::Var(v)) {
                Ty::Known(k) => Some((n, k)),
                Ty::Var(_) => None,
            })
            .collect()
    }
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    types: Types,
}

type Typed = (Expr, Ty, Pos);

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Pos, RuleError> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(pos)
        } else {
            Err(syntax(pos, format!("expected {want}, found {tok}")))
        }
    }

    fn require(&mut self, expr: &Typed, want: ValueKind) -> Result<(), RuleError> {
        self.types.unify(expr.1, Ty::Known(want)).map_err(|(found, _)| type_error(expr, want, found))
    }

    fn rule(&mut self) -> Result<(Expr, Vec<Action>), RuleError> {
        self.expect(Tok::When)?;
        let cond = self.expr()?;
        self.require(&cond, ValueKind::Boolean)?;
        self.expect(Tok::Then)?;
        let mut actions = vec![self.action()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            actions.push(self.action()?);
        }
        let (tok, pos) = self.bump();
        if tok != Tok::Eof {
            return Err(syntax(pos, format!("expected `,` or end of rule, found {tok}")));
        }
        Ok((cond.0, actions))
    }

    fn action(&mut self) -> Result<Action, RuleError> {
        let (tok, pos) = self.bump();
        let Tok::Ident(target) = tok else {
            return Err(syntax(pos, format!("expected a target characteristic name, found {tok}")));
        };
        self.expect(Tok::Assign)?;
        let value = self.expr()?;
        let target_ty = self.types.var_for(&target);
        if let Err((have, want)) = self.types.unify(value.1, target_ty) {
            return Err(type_error(&value, want, have));
        }
        Ok(Action { target, value: value.0 })
    }

    fn expr(&mut self) -> Result<Typed, RuleError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = self.logical(BinOp::Or, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Typed, RuleError> {
        let mut lhs = self.not()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.not()?;
            lhs = self.logical(BinOp::And, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn logical(&mut self, op: BinOp, lhs: Typed, rhs: Typed) -> Result<Typed, RuleError> {
        self.require(&lhs, ValueKind::Boolean)?;
        self.require(&rhs, ValueKind::Boolean)?;
        let pos = lhs.2;
        Ok((Expr::Binary(op, Box::new(lhs.0), Box::new(rhs.0)), Ty::Known(ValueKind::Boolean), pos))
    }

    fn not(&mut self) -> Result<Typed, RuleError> {
        if *self.peek() == Tok::Not {
            let (_, pos) = self.bump();
            let inner = self.not()?;
            self.require(&inner, ValueKind::Boolean)?;
            return Ok((Expr::Unary(UnaryOp::Not, Box::new(inner.0)), Ty::Known(ValueKind::Boolean), pos));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Typed, RuleError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add()?;
        match op {
            BinOp::Eq | BinOp::Ne => {
                if let Err((have, want)) = self.types.unify(rhs.1, lhs.1) {
                    return Err(type_error(&rhs, want, have));
                }
            }
            _ => {
                self.require(&lhs, ValueKind::Number)?;
                self.require(&rhs, ValueKind::Number)?;
            }
        }
        let pos = lhs.2;
        let node = Expr::Binary(op, Box::new(lhs.0), Box::new(rhs.0));
        if matches!(self.peek(), Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge) {
            let p = self.pos();
            return Err(syntax(p, "comparison operators do not chain; add parentheses"));
        }
        Ok((node, Ty::Known(ValueKind::Boolean), pos))
    }

    fn add(&mut self) -> Result<Typed, RuleError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul()?;
            lhs = self.arith(op, lhs, rhs)?;
        }
    }

    fn mul(&mut self) -> Result<Typed, RuleError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = self.arith(op, lhs, rhs)?;
        }
    }

    fn arith(&mut self, op: BinOp, lhs: Typed, rhs: Typed) -> Result<Typed, RuleError> {
        self.require(&lhs, ValueKind::Number)?;
        self.require(&rhs, ValueKind::Number)?;
        let pos = lhs.2;
        Ok((Expr::Binary(op, Box::new(lhs.0), Box::new(rhs.0)), Ty::Known(ValueKind::Number), pos))
    }

    fn unary(&mut self) -> Result<Typed, RuleError> {
        if *self.peek() == Tok::Minus {
            let (_, pos) = self.bump();
            let inner = self.unary()?;
            self.require(&inner, ValueKind::Number)?;
            return Ok((Expr::Unary(UnaryOp::Neg, Box::new(inner.0)), Ty::Known(ValueKind::Number), pos));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Typed, RuleError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(d) => Ok((Expr::Lit(Scalar::Number(d)), Ty::Known(ValueKind::Number), pos)),
            Tok::Str(s) => Ok((Expr::Lit(Scalar::Str(s)), Ty::Known(ValueKind::String), pos)),
            Tok::True => Ok((Expr::Lit(Scalar::Bool(true)), Ty::Known(ValueKind::Boolean), pos)),
            Tok::False => Ok((Expr::Lit(Scalar::Bool(false)), Ty::Known(ValueKind::Boolean), pos)),
            Tok::Ref(name) => {
                let ty = self.types.var_for(&name);
                Ok((Expr::Ref(name), ty, pos))
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok((inner.0, inner.1, pos))
            }
            other => Err(syntax(pos, format!("expected an expression, found {other}"))),
        }
    }
}

fn type_error(expr: &Typed, want: ValueKind, found: ValueKind) -> RuleError {
    let subexpr = print_expr(&expr.0);
    RuleError::Type {
        line: expr.2.line,
        column: expr.2.column,
        message: format!("expected {want}, found {found} in `{subexpr}`"),
        subexpr,
    }
}

/// Parses and type-checks one rule. The returned rule has an empty id.
pub fn parse_rule(text: &str) -> Result<Rule, RuleError> {
    parse_rule_typed(text).map(|(rule, _)| rule)
}

/// Like [`parse_rule`], also returning the inferred kind of every reference
/// and action target whose kind is fixed by the rule itself.
pub fn parse_rule_typed(text: &str) -> Result<(Rule, BTreeMap<String, ValueKind>), RuleError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0, types: Types::default() };
    let (condition, actions) = p.rule()?;
    let kinds = p.types.known_kinds();
    Ok((Rule { id: String::new(), condition, actions }, kinds))
}

use std::fmt;

use crate::lang::{print_expr, Expr, ParseError, Parser, Tok};

/// Reserved label of the implicit self-loop on deadlocked states.
pub const STUTTER_EVENT: &str = "$stutter";

/// Linear temporal formula over state predicates `{pred}` and event
/// propositions `[event]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LtlFormula {
    Bool(bool),
    State(Expr),
    Event(String),
    Not(Box<LtlFormula>),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Implies(Box<LtlFormula>, Box<LtlFormula>),
    Next(Box<LtlFormula>),
    Finally(Box<LtlFormula>),
    Globally(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
}

impl LtlFormula {
    pub fn negate(f: LtlFormula) -> Self {
        LtlFormula::Not(Box::new(f))
    }

    /// Visits every atom.
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a LtlFormula)) {
        use LtlFormula::*;
        match self {
            Bool(_) => {}
            State(_) | Event(_) => f(self),
            Not(a) | Next(a) | Finally(a) | Globally(a) => a.for_each_atom(f),
            And(a, b) | Or(a, b) | Implies(a, b) | Until(a, b) => {
                a.for_each_atom(f);
                b.for_each_atom(f);
            }
        }
    }

    /// Rewrites every state predicate.
    pub fn map_state(&self, f: &impl Fn(&Expr) -> Expr) -> LtlFormula {
        use LtlFormula::*;
        let b = |x: &LtlFormula| Box::new(x.map_state(f));
        match self {
            Bool(v) => Bool(*v),
            State(e) => State(f(e)),
            Event(e) => Event(e.clone()),
            Not(a) => Not(b(a)),
            Next(a) => Next(b(a)),
            Finally(a) => Finally(b(a)),
            Globally(a) => Globally(b(a)),
            And(x, y) => And(b(x), b(y)),
            Or(x, y) => Or(b(x), b(y)),
            Implies(x, y) => Implies(b(x), b(y)),
            Until(x, y) => Until(b(x), b(y)),
        }
    }

    /// Depth of nested temporal operators.
    pub fn temporal_depth(&self) -> usize {
        use LtlFormula::*;
        match self {
            Bool(_) | State(_) | Event(_) => 0,
            Not(a) => a.temporal_depth(),
            Next(a) | Finally(a) | Globally(a) => 1 + a.temporal_depth(),
            And(a, b) | Or(a, b) | Implies(a, b) => a.temporal_depth().max(b.temporal_depth()),
            Until(a, b) => 1 + a.temporal_depth().max(b.temporal_depth()),
        }
    }
}

impl fmt::Display for LtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use LtlFormula::*;
        match self {
            Bool(b) => write!(f, "{b}"),
            State(e) => write!(f, "{{{}}}", print_expr(e)),
            Event(e) => write!(f, "[{e}]"),
            Not(a) => write!(f, "not {a}"),
            Next(a) => write!(f, "X {a}"),
            Finally(a) => write!(f, "F {a}"),
            Globally(a) => write!(f, "G {a}"),
            And(a, b) => write!(f, "({a} and {b})"),
            Or(a, b) => write!(f, "({a} or {b})"),
            Implies(a, b) => write!(f, "({a} => {b})"),
            Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

/// Parses a formula. Precedence, tightest first: unary (`not X F G`), `U`
/// (right associative), `and`, `or`, `=>` (right associative).
pub fn parse_ltl(text: &str) -> Result<LtlFormula, ParseError> {
    if let Some(pos) = text.find('$') {
        let line = text[..pos].matches('\n').count() + 1;
        let col = pos - text[..pos].rfind('\n').map_or(0, |i| i + 1) + 1;
        let msg = if text[pos..].starts_with(STUTTER_EVENT) {
            format!("event {STUTTER_EVENT} is reserved")
        } else {
            "unexpected character '$'".to_string()
        };
        return Err(ParseError::new(line, col, msg));
    }
    let mut p = Parser::new(text)?;
    let f = implies(&mut p)?;
    p.expect_eof()?;
    Ok(f)
}

fn is_op(p: &Parser, op: &str) -> bool {
    matches!(p.peek(), Tok::Ident(s) if s == op)
}

fn implies(p: &mut Parser) -> Result<LtlFormula, ParseError> {
    let lhs = or(p)?;
    if p.eat_sym("=>") {
        let rhs = implies(p)?;
        return Ok(LtlFormula::Implies(Box::new(lhs), Box::new(rhs)));
    }
    Ok(lhs)
}

fn or(p: &mut Parser) -> Result<LtlFormula, ParseError> {
    let mut lhs = and(p)?;
    while p.eat_kw("or") {
        let rhs = and(p)?;
        lhs = LtlFormula::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn and(p: &mut Parser) -> Result<LtlFormula, ParseError> {
    let mut lhs = until(p)?;
    while p.eat_kw("and") {
        let rhs = until(p)?;
        lhs = LtlFormula::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn until(p: &mut Parser) -> Result<LtlFormula, ParseError> {
    let lhs = unary(p)?;
    if is_op(p, "U") {
        p.eat_kw("U");
        let rhs = until(p)?;
        return Ok(LtlFormula::Until(Box::new(lhs), Box::new(rhs)));
    }
    Ok(lhs)
}

fn unary(p: &mut Parser) -> Result<LtlFormula, ParseError> {
    if p.eat_kw("not") {
        return Ok(LtlFormula::negate(unary(p)?));
    }
    let ctor: fn(Box<LtlFormula>) -> LtlFormula = match p.peek() {
        Tok::Ident(s) if s == "X" => LtlFormula::Next,
        Tok::Ident(s) if s == "F" => LtlFormula::Finally,
        Tok::Ident(s) if s == "G" => LtlFormula::Globally,
        _ => return primary(p),
    };
    let Tok::Ident(op) = p.peek().clone() else {
        unreachable!()
    };
    p.eat_kw(&op);
    Ok(ctor(Box::new(unary(p)?)))
}

fn primary(p: &mut Parser) -> Result<LtlFormula, ParseError> {
    if p.eat_sym("{") {
        let e = p.expr()?;
        p.expect_sym("}")?;
        return Ok(LtlFormula::State(e));
    }
    if p.eat_sym("[") {
        let ev = p.ident()?;
        p.expect_sym("]")?;
        return Ok(LtlFormula::Event(ev));
    }
    if p.eat_sym("(") {
        let f = implies(p)?;
        p.expect_sym(")")?;
        return Ok(f);
    }
    if p.eat_kw("true") {
        return Ok(LtlFormula::Bool(true));
    }
    if p.eat_kw("false") {
        return Ok(LtlFormula::Bool(false));
    }
    Err(p.error("expected '{predicate}', '[event]', '(' or a temporal operator"))
}

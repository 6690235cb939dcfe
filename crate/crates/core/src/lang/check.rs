use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;

/// Static type of an expression. Integer ranges only matter for storage, so
/// all integer expressions share one type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Int,
    Elem(String),
    Set(String),
    /// The literal `{}`; compatible with any set type.
    EmptySet,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => f.write_str("BOOL"),
            Ty::Int => f.write_str("INT"),
            Ty::Elem(s) => f.write_str(s),
            Ty::Set(s) => write!(f, "set of {s}"),
            Ty::EmptySet => f.write_str("empty set"),
        }
    }
}

impl Ty {
    pub fn of_decl(t: &TypeExpr) -> Ty {
        match t {
            TypeExpr::Bool => Ty::Bool,
            TypeExpr::Range(..) => Ty::Int,
            TypeExpr::Enum(s) => Ty::Elem(s.clone()),
            TypeExpr::SetOf(s) => Ty::Set(s.clone()),
        }
    }

    pub fn fits(&self, decl: &TypeExpr) -> bool {
        match (self, decl) {
            (Ty::EmptySet, TypeExpr::SetOf(_)) => true,
            _ => *self == Ty::of_decl(decl),
        }
    }

    fn unify(&self, other: &Ty) -> Option<Ty> {
        match (self, other) {
            (Ty::EmptySet, t @ (Ty::Set(_) | Ty::EmptySet)) | (t @ Ty::Set(_), Ty::EmptySet) => {
                Some(t.clone())
            }
            (a, b) if a == b => Some(a.clone()),
            _ => None,
        }
    }
}

/// A well-formedness problem, located structurally (e.g. `event inc, action c`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WfError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for WfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Identifier environment for typing expressions against a machine.
pub struct Scope<'a> {
    machine: &'a Machine,
    params: &'a [Param],
    allow_vars: bool,
}

impl<'a> Scope<'a> {
    pub fn new(machine: &'a Machine, params: &'a [Param]) -> Self {
        Scope {
            machine,
            params,
            allow_vars: true,
        }
    }

    /// Scope for init expressions: variables are not yet defined.
    pub fn without_vars(machine: &'a Machine) -> Self {
        Scope {
            machine,
            params: &[],
            allow_vars: false,
        }
    }

    fn ident(&self, name: &str) -> Result<Ty, String> {
        if let Some(p) = self.params.iter().find(|p| p.name == name) {
            return Ok(Ty::of_decl(&p.ty));
        }
        if let Some(v) = self.machine.variable(name) {
            if !self.allow_vars {
                return Err(format!("variable {name} cannot be used here"));
            }
            return Ok(Ty::of_decl(&v.ty));
        }
        if let Some(c) = self.machine.constant(name) {
            return Ok(Ty::of_decl(&c.ty));
        }
        if let Some(s) = self.machine.set_of_member(name) {
            return Ok(Ty::Elem(s.name.clone()));
        }
        if self.machine.set(name).is_some() {
            return Ok(Ty::Set(name.to_string()));
        }
        Err(format!("unknown identifier {name}"))
    }

    pub fn type_of(&self, e: &Expr) -> Result<Ty, String> {
        use BinOp::*;
        match e {
            Expr::Bool(_) => Ok(Ty::Bool),
            Expr::Int(_) => Ok(Ty::Int),
            Expr::Ident(n) => self.ident(n),
            Expr::SetLit(items) => {
                let mut set: Option<String> = None;
                for item in items {
                    match self.type_of(item)? {
                        Ty::Elem(s) => match &set {
                            Some(prev) if *prev != s => {
                                return Err(format!("set literal mixes {prev} and {s}"))
                            }
                            _ => set = Some(s),
                        },
                        t => return Err(format!("set literal element has type {t}")),
                    }
                }
                Ok(set.map(Ty::Set).unwrap_or(Ty::EmptySet))
            }
            Expr::Card(inner) => match self.type_of(inner)? {
                Ty::Set(_) | Ty::EmptySet => Ok(Ty::Int),
                t => Err(format!("card expects a set, found {t}")),
            },
            Expr::Unary(UnOp::Not, inner) => self.expect(inner, &Ty::Bool).map(|_| Ty::Bool),
            Expr::Unary(UnOp::Neg, inner) => self.expect(inner, &Ty::Int).map(|_| Ty::Int),
            Expr::Binary(op, l, r) => match op {
                Add | Sub | Mul | Div | Mod => {
                    self.expect(l, &Ty::Int)?;
                    self.expect(r, &Ty::Int)?;
                    Ok(Ty::Int)
                }
                Lt | Le | Gt | Ge => {
                    self.expect(l, &Ty::Int)?;
                    self.expect(r, &Ty::Int)?;
                    Ok(Ty::Bool)
                }
                And | Or | Implies => {
                    self.expect(l, &Ty::Bool)?;
                    self.expect(r, &Ty::Bool)?;
                    Ok(Ty::Bool)
                }
                Eq | Ne => {
                    let (lt, rt) = (self.type_of(l)?, self.type_of(r)?);
                    lt.unify(&rt)
                        .map(|_| Ty::Bool)
                        .ok_or_else(|| format!("cannot compare {lt} with {rt}"))
                }
                Union | Inter | Diff => {
                    let (lt, rt) = (self.type_of(l)?, self.type_of(r)?);
                    match lt.unify(&rt) {
                        Some(t @ (Ty::Set(_) | Ty::EmptySet)) => Ok(t),
                        _ => Err(format!(
                            "'{}' expects two sets of the same type, found {lt} and {rt}",
                            op.symbol()
                        )),
                    }
                }
                In => {
                    let (lt, rt) = (self.type_of(l)?, self.type_of(r)?);
                    match (&lt, &rt) {
                        (Ty::Elem(a), Ty::Set(b)) if a == b => Ok(Ty::Bool),
                        (Ty::Elem(_), Ty::EmptySet) => Ok(Ty::Bool),
                        _ => Err(format!(
                            "membership expects element and set, found {lt} and {rt}"
                        )),
                    }
                }
            },
        }
    }

    fn expect(&self, e: &Expr, want: &Ty) -> Result<(), String> {
        let got = self.type_of(e)?;
        if got == *want {
            Ok(())
        } else {
            Err(format!("expected {want}, found {got}"))
        }
    }
}

fn check_type_expr(m: &Machine, t: &TypeExpr) -> Result<(), String> {
    match t {
        TypeExpr::Bool => Ok(()),
        TypeExpr::Range(lo, hi) if lo > hi => Err(format!("empty range {lo}..{hi}")),
        TypeExpr::Range(..) => Ok(()),
        TypeExpr::Enum(s) | TypeExpr::SetOf(s) => {
            if m.set(s).is_some() {
                Ok(())
            } else {
                Err(format!("unknown set {s}"))
            }
        }
    }
}

/// Checks that `lit` inhabits `ty` in machine `m`.
pub fn check_literal(m: &Machine, lit: &Literal, ty: &TypeExpr) -> Result<(), String> {
    let ok = match (lit, ty) {
        (Literal::Bool(_), TypeExpr::Bool) => true,
        (Literal::Int(n), TypeExpr::Range(lo, hi)) => {
            if n < lo || n > hi {
                return Err(format!("{n} is outside {lo}..{hi}"));
            }
            true
        }
        (Literal::Member(x), TypeExpr::Enum(s)) => m.set(s).is_some_and(|d| d.members.contains(x)),
        (Literal::Set(xs), TypeExpr::SetOf(s)) => m
            .set(s)
            .is_some_and(|d| xs.iter().all(|x| d.members.contains(x))),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("literal {lit} does not have type {ty}"))
    }
}

/// Returns every well-formedness problem of `m`; empty iff the machine is
/// well-formed. Never panics on parser output.
pub fn well_formed(m: &Machine) -> Vec<WfError> {
    let mut errs = Vec::new();
    let mut push = |loc: String, msg: String| {
        errs.push(WfError {
            location: loc,
            message: msg,
        })
    };

    // One namespace for every value-level identifier.
    let mut seen: BTreeMap<String, &'static str> = BTreeMap::new();
    let mut declare = |name: &'_ str, what: &'static str, push: &mut dyn FnMut(String, String)| {
        if let Some(prev) = seen.get(name) {
            if *prev == what {
                push(format!("{what} {name}"), format!("duplicate {what} {name}"));
            } else {
                push(
                    format!("{what} {name}"),
                    format!("{what} {name} clashes with {prev} {name}"),
                );
            }
        } else {
            seen.insert(name.to_string(), what);
        }
    };
    for s in &m.sets {
        declare(&s.name, "set", &mut push);
        for mem in &s.members {
            declare(mem, "member", &mut push);
        }
    }
    for c in &m.constants {
        declare(&c.name, "constant", &mut push);
    }
    for v in &m.variables {
        declare(&v.name, "variable", &mut push);
    }

    let mut event_names = BTreeSet::new();
    for e in &m.events {
        if !event_names.insert(e.name.as_str()) {
            push(
                format!("event {}", e.name),
                format!("duplicate event {}", e.name),
            );
        }
    }

    for c in &m.constants {
        let loc = format!("constant {}", c.name);
        if let Err(msg) = check_type_expr(m, &c.ty) {
            push(loc.clone(), msg);
            continue;
        }
        if let Some(v) = &c.value {
            if let Err(msg) = check_literal(m, v, &c.ty) {
                push(loc, msg);
            }
        }
    }

    let init_scope = Scope::without_vars(m);
    for v in &m.variables {
        let loc = format!("variable {}", v.name);
        if let Err(msg) = check_type_expr(m, &v.ty) {
            push(loc, msg);
            continue;
        }
        match init_scope.type_of(&v.init) {
            Ok(t) if t.fits(&v.ty) => {}
            Ok(t) => push(
                format!("init of {}", v.name),
                format!(
                    "type mismatch: {} declared {}, init has type {t}",
                    v.name, v.ty
                ),
            ),
            Err(msg) => push(format!("init of {}", v.name), msg),
        }
    }

    let scope = Scope::new(m, &[]);
    for (i, inv) in m.invariants.iter().enumerate() {
        match scope.type_of(inv) {
            Ok(Ty::Bool) => {}
            Ok(t) => push(
                format!("invariant {}", i + 1),
                format!("type mismatch: expected BOOL, found {t}"),
            ),
            Err(msg) => push(format!("invariant {}", i + 1), msg),
        }
    }

    for e in &m.events {
        let mut params_ok = true;
        let mut pnames = BTreeSet::new();
        for p in &e.params {
            let loc = format!("event {}, parameter {}", e.name, p.name);
            if !pnames.insert(p.name.as_str()) {
                push(loc.clone(), format!("duplicate parameter {}", p.name));
            }
            if seen_value(m, &p.name) {
                push(
                    loc.clone(),
                    format!("parameter {} shadows a machine identifier", p.name),
                );
            }
            if let Err(msg) = check_type_expr(m, &p.ty) {
                push(
                    loc,
                    format!("non-finite or invalid parameter domain: {msg}"),
                );
                params_ok = false;
            }
        }
        if !params_ok {
            continue;
        }
        let scope = Scope::new(m, &e.params);
        for (i, g) in e.guard.iter().enumerate() {
            let loc = format!("event {}, guard {}", e.name, i + 1);
            match scope.type_of(g) {
                Ok(Ty::Bool) => {}
                Ok(t) => push(loc, format!("type mismatch: expected BOOL, found {t}")),
                Err(msg) => push(loc, msg),
            }
        }
        let mut assigned = BTreeSet::new();
        for (var, rhs) in &e.actions {
            let loc = format!("event {}, action {}", e.name, var);
            if !assigned.insert(var.as_str()) {
                push(loc.clone(), format!("variable {var} assigned twice"));
            }
            let Some(decl) = m.variable(var) else {
                push(loc, format!("{var} is not a variable"));
                continue;
            };
            match scope.type_of(rhs) {
                Ok(t) if t.fits(&decl.ty) => {}
                Ok(t) => push(
                    loc,
                    format!(
                        "type mismatch in action: {var} is {}, value has type {t}",
                        decl.ty
                    ),
                ),
                Err(msg) => push(loc, msg),
            }
        }
    }
    errs
}

fn seen_value(m: &Machine, name: &str) -> bool {
    m.set(name).is_some()
        || m.set_of_member(name).is_some()
        || m.constant(name).is_some()
        || m.variable(name).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_machine;

    fn wf(src: &str) -> Vec<WfError> {
        well_formed(&parse_machine(src).unwrap())
    }

    #[test]
    fn switch_is_well_formed() {
        let errs = wf("machine Switch var on : BOOL init false \
            event turn_on when on = false then on := true end \
            event turn_off when on = true then on := false end end");
        assert!(errs.is_empty(), "{errs:?}");
    }

    #[test]
    fn init_type_mismatch() {
        let errs = wf("machine M var c : 0..3 init true end");
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].location, "init of c");
        assert!(errs[0].message.contains("type mismatch"));
    }

    #[test]
    fn action_type_mismatch() {
        let errs = wf("machine M var c : BOOL init false event e then c := c + 1 end end");
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].location, "event e, action c");
    }

    #[test]
    fn duplicate_variable() {
        let errs = wf("machine D var a : BOOL init false var a : BOOL init true end");
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].message, "duplicate variable a");
    }

    #[test]
    fn collects_several_errors() {
        let errs = wf(
            "machine M set S = {a, b} var x : T init a var y : 3..1 init 2 \
             event e(p : S, p : BOOL) when x then y := y; y := q; z := 1 end end",
        );
        let msgs: Vec<_> = errs.iter().map(|e| e.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("unknown set T")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("empty range")), "{msgs:?}");
        assert!(
            msgs.iter().any(|m| m.contains("duplicate parameter")),
            "{msgs:?}"
        );
        // the event is skipped once its parameter domains are broken
        let errs =
            wf("machine M var y : 0..1 init 0 event e when y then y := y; y := q; z := 1 end end");
        let msgs: Vec<_> = errs.iter().map(|e| e.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("expected BOOL")), "{msgs:?}");
        assert!(
            msgs.iter().any(|m| m.contains("assigned twice")),
            "{msgs:?}"
        );
        assert!(
            msgs.iter().any(|m| m.contains("unknown identifier q")),
            "{msgs:?}"
        );
        assert!(
            msgs.iter().any(|m| m.contains("z is not a variable")),
            "{msgs:?}"
        );
    }

    #[test]
    fn init_cannot_read_variables() {
        let errs = wf("machine M var a : BOOL init false var b : BOOL init a end");
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("cannot be used"));
    }

    #[test]
    fn set_expressions_type_check() {
        let errs = wf("machine M set S = {a, b, c} var x : set of S init {} \
            event add(s : S) when not (s : x) & card(x \\/ {s}) <= 2 then x := x \\/ {s} end \
            event clear when x /= {} then x := x \\ S end end");
        assert!(errs.is_empty(), "{errs:?}");
    }

    #[test]
    fn constant_literals_checked() {
        let errs = wf("machine M const K : 0..3 = 7 const L : BOOL = 1 end");
        assert_eq!(errs.len(), 2);
    }
}

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::value::{domain, domain_size, Value};
use crate::lang::{
    print_expr, well_formed, BinOp, Expr, Machine, Param, Scope, Ty, TypeExpr, UnOp, WfError,
};

/// Maximum number of parameter bindings enumerated per event.
pub const DEFAULT_BINDING_CAP: u128 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("value {value} assigned to {var} is outside {ty}")]
    OutOfRange { var: String, value: i64, ty: String },
    #[error("ill-typed operand for '{0}'")]
    IllTyped(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("machine {machine} is not well-formed: {}", .errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    NotWellFormed {
        machine: String,
        errors: Vec<WfError>,
    },
    #[error("machine {machine} has unbound constants: {}", .constants.join(", "))]
    UnboundConstants {
        machine: String,
        constants: Vec<String>,
    },
    #[error("event {event} has {count} parameter bindings, above the cap of {cap}")]
    BindingCap {
        event: String,
        count: u128,
        cap: u128,
    },
    #[error("{0}")]
    Expr(String),
}

/// Resolved expression: identifiers are replaced by slots or constant values.
#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Const(Value),
    Var(usize),
    Param(usize),
    SetLit(Vec<CExpr>),
    Card(Box<CExpr>),
    Not(Box<CExpr>),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

/// A valuation of all machine variables, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<Value>);

/// An event together with a binding for each of its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionLabel {
    pub event: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<(String, Value)>,
}

impl TransitionLabel {
    pub fn plain(event: &str) -> Self {
        TransitionLabel {
            event: event.to_string(),
            params: Vec::new(),
        }
    }

    pub fn with(event: &str, params: &[(&str, Value)]) -> Self {
        TransitionLabel {
            event: event.to_string(),
            params: params
                .iter()
                .map(|(n, v)| (n.to_string(), v.clone()))
                .collect(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&Value> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.event)?;
        if !self.params.is_empty() {
            let ps: Vec<String> = self
                .params
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect();
            write!(f, "({})", ps.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompiledEvent {
    pub name: String,
    pub params: Vec<Param>,
    pub domains: Vec<Vec<Value>>,
    pub guard: Vec<CExpr>,
    pub guard_text: Vec<String>,
    pub actions: Vec<(usize, CExpr)>,
}

impl CompiledEvent {
    /// All parameter bindings in canonical order: first parameter varies
    /// slowest, each over its domain's canonical order.
    pub fn bindings(&self) -> Vec<Vec<Value>> {
        let mut out = vec![Vec::with_capacity(self.params.len())];
        for dom in &self.domains {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    dom.iter().map(move |v| {
                        let mut b = prefix.clone();
                        b.push(v.clone());
                        b
                    })
                })
                .collect();
        }
        out
    }

    pub fn label(&self, binding: &[Value]) -> TransitionLabel {
        TransitionLabel {
            event: self.name.clone(),
            params: self
                .params
                .iter()
                .map(|p| p.name.clone())
                .zip(binding.iter().cloned())
                .collect(),
        }
    }
}

/// An explorable machine: well-formed, all constants bound, expressions
/// resolved. Immutable once built.
#[derive(Debug, Clone)]
pub struct Model {
    machine: Machine,
    constants: HashMap<String, Value>,
    members: HashMap<String, Vec<Arc<str>>>,
    init: Vec<CExpr>,
    invariants: Vec<CExpr>,
    events: Vec<CompiledEvent>,
}

impl Model {
    pub fn new(machine: &Machine) -> Result<Model, ModelError> {
        Self::with_binding_cap(machine, DEFAULT_BINDING_CAP)
    }

    pub fn with_binding_cap(machine: &Machine, cap: u128) -> Result<Model, ModelError> {
        let errors = well_formed(machine);
        if !errors.is_empty() {
            return Err(ModelError::NotWellFormed {
                machine: machine.name.clone(),
                errors,
            });
        }
        let unbound = machine.unbound_constants();
        if !unbound.is_empty() {
            return Err(ModelError::UnboundConstants {
                machine: machine.name.clone(),
                constants: unbound.into_iter().map(String::from).collect(),
            });
        }
        let mut model = Model {
            machine: machine.clone(),
            constants: machine
                .constants
                .iter()
                .filter_map(|c| {
                    c.value
                        .as_ref()
                        .map(|v| (c.name.clone(), Value::from_literal(v)))
                })
                .collect(),
            members: machine
                .sets
                .iter()
                .map(|s| {
                    (
                        s.name.clone(),
                        s.members.iter().map(|m| Arc::from(m.as_str())).collect(),
                    )
                })
                .collect(),
            init: Vec::new(),
            invariants: Vec::new(),
            events: Vec::new(),
        };
        model.init = machine
            .variables
            .iter()
            .map(|v| model.compile(&v.init, &[]))
            .collect::<Result<_, _>>()?;
        model.invariants = machine
            .invariants
            .iter()
            .map(|e| model.compile(e, &[]))
            .collect::<Result<_, _>>()?;
        for e in &machine.events {
            let count = e
                .params
                .iter()
                .map(|p| domain_size(&p.ty, |s| model.members.get(s).map_or(0, Vec::len)))
                .fold(1u128, |acc, n| acc.saturating_mul(n));
            if count > cap {
                return Err(ModelError::BindingCap {
                    event: e.name.clone(),
                    count,
                    cap,
                });
            }
            let ev = CompiledEvent {
                name: e.name.clone(),
                params: e.params.clone(),
                domains: e.params.iter().map(|p| model.domain(&p.ty)).collect(),
                guard: e
                    .guard
                    .iter()
                    .map(|g| model.compile(g, &e.params))
                    .collect::<Result<_, _>>()?,
                guard_text: e.guard.iter().map(print_expr).collect(),
                actions: e
                    .actions
                    .iter()
                    .map(|(v, x)| {
                        Ok((
                            model.var_index(v).expect("well-formed"),
                            model.compile(x, &e.params)?,
                        ))
                    })
                    .collect::<Result<_, ModelError>>()?,
            };
            model.events.push(ev);
        }
        Ok(model)
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn name(&self) -> &str {
        &self.machine.name
    }

    pub fn events(&self) -> &[CompiledEvent] {
        &self.events
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e.name == name)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.machine.variables.iter().position(|v| v.name == name)
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.machine.variables.iter().map(|v| v.name.as_str())
    }

    pub fn invariants(&self) -> &[CExpr] {
        &self.invariants
    }

    pub fn domain(&self, ty: &TypeExpr) -> Vec<Value> {
        domain(ty, |s| self.members.get(s).cloned().unwrap_or_default())
    }

    /// Type-checks `expr` (with optional event parameters) against the
    /// machine and resolves it.
    pub fn compile_checked(
        &self,
        expr: &Expr,
        params: &[Param],
    ) -> Result<(CExpr, Ty), ModelError> {
        let ty = Scope::new(&self.machine, params)
            .type_of(expr)
            .map_err(ModelError::Expr)?;
        Ok((self.compile(expr, params)?, ty))
    }

    /// Resolves a boolean predicate over the machine's variables.
    pub fn compile_predicate(&self, expr: &Expr) -> Result<CExpr, ModelError> {
        match self.compile_checked(expr, &[])? {
            (c, Ty::Bool) => Ok(c),
            (_, t) => Err(ModelError::Expr(format!("expected a predicate, found {t}"))),
        }
    }

    fn compile(&self, e: &Expr, params: &[Param]) -> Result<CExpr, ModelError> {
        Ok(match e {
            Expr::Bool(b) => CExpr::Const(Value::Bool(*b)),
            Expr::Int(n) => CExpr::Const(Value::Int(*n)),
            Expr::Ident(n) => {
                if let Some(i) = params.iter().position(|p| &p.name == n) {
                    CExpr::Param(i)
                } else if let Some(i) = self.var_index(n) {
                    CExpr::Var(i)
                } else if let Some(v) = self.constants.get(n) {
                    CExpr::Const(v.clone())
                } else if self.machine.set_of_member(n).is_some() {
                    CExpr::Const(Value::Elem(Arc::from(n.as_str())))
                } else if let Some(ms) = self.members.get(n) {
                    CExpr::Const(Value::Set(ms.iter().cloned().collect()))
                } else {
                    return Err(ModelError::Expr(format!("unknown identifier {n}")));
                }
            }
            Expr::SetLit(items) => CExpr::SetLit(
                items
                    .iter()
                    .map(|x| self.compile(x, params))
                    .collect::<Result<_, _>>()?,
            ),
            Expr::Card(x) => CExpr::Card(Box::new(self.compile(x, params)?)),
            Expr::Unary(UnOp::Not, x) => CExpr::Not(Box::new(self.compile(x, params)?)),
            Expr::Unary(UnOp::Neg, x) => CExpr::Neg(Box::new(self.compile(x, params)?)),
            Expr::Binary(op, l, r) => CExpr::Bin(
                *op,
                Box::new(self.compile(l, params)?),
                Box::new(self.compile(r, params)?),
            ),
        })
    }

    pub fn initial_state(&self) -> Result<State, EvalError> {
        let mut vals = Vec::with_capacity(self.init.len());
        for (i, e) in self.init.iter().enumerate() {
            let v = eval(e, &[], &[])?;
            self.check_range(i, &v)?;
            vals.push(v);
        }
        Ok(State(vals))
    }

    fn check_range(&self, var: usize, v: &Value) -> Result<(), EvalError> {
        let decl = &self.machine.variables[var];
        match (&decl.ty, v) {
            (TypeExpr::Range(lo, hi), Value::Int(n)) if n < lo || n > hi => {
                Err(EvalError::OutOfRange {
                    var: decl.name.clone(),
                    value: *n,
                    ty: decl.ty.to_string(),
                })
            }
            _ => Ok(()),
        }
    }

    /// Evaluates every conjunct (strictly) and reports whether all hold.
    pub fn guard_holds(
        &self,
        event: usize,
        state: &State,
        binding: &[Value],
    ) -> Result<bool, EvalError> {
        let mut all = true;
        for g in &self.events[event].guard {
            all &= eval_bool(g, &state.0, binding)?;
        }
        Ok(all)
    }

    /// Enabled `(event index, binding)` pairs in canonical order.
    pub fn enabled_raw(&self, state: &State) -> Result<Vec<(usize, Vec<Value>)>, EvalError> {
        let mut out = Vec::new();
        for (i, ev) in self.events.iter().enumerate() {
            for b in ev.bindings() {
                if self.guard_holds(i, state, &b)? {
                    out.push((i, b));
                }
            }
        }
        Ok(out)
    }

    pub fn enabled(&self, state: &State) -> Result<Vec<TransitionLabel>, EvalError> {
        Ok(self
            .enabled_raw(state)?
            .into_iter()
            .map(|(i, b)| self.events[i].label(&b))
            .collect())
    }

    /// Simultaneous assignment: right-hand sides read the pre-state.
    pub fn apply(
        &self,
        event: usize,
        state: &State,
        binding: &[Value],
    ) -> Result<State, EvalError> {
        let mut next = state.clone();
        for (var, rhs) in &self.events[event].actions {
            let v = eval(rhs, &state.0, binding)?;
            self.check_range(*var, &v)?;
            next.0[*var] = v;
        }
        Ok(next)
    }

    /// Resolves a label to `(event index, binding)`; `None` if the event is
    /// unknown or the parameters do not match the declaration exactly.
    pub fn resolve_label(&self, label: &TransitionLabel) -> Option<(usize, Vec<Value>)> {
        let i = self.event_index(&label.event)?;
        let ev = &self.events[i];
        if label.params.len() != ev.params.len() {
            return None;
        }
        let mut binding = Vec::with_capacity(ev.params.len());
        for (p, dom) in ev.params.iter().zip(&ev.domains) {
            let v = label.param(&p.name)?;
            if !dom.contains(v) {
                return None;
            }
            binding.push(v.clone());
        }
        Some((i, binding))
    }

    /// Fires `label` from `state`.
    pub fn step(&self, state: &State, label: &TransitionLabel) -> Result<State, StepError> {
        let (i, b) = self
            .resolve_label(label)
            .ok_or_else(|| StepError::InvalidLabel(label.to_string()))?;
        if !self.guard_holds(i, state, &b)? {
            return Err(StepError::NotEnabled(label.to_string()));
        }
        Ok(self.apply(i, state, &b)?)
    }

    pub fn show_state(&self, state: &State) -> String {
        let parts: Vec<String> = self
            .var_names()
            .zip(&state.0)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    pub fn state_map(&self, state: &State) -> Vec<(String, Value)> {
        self.var_names()
            .map(String::from)
            .zip(state.0.iter().cloned())
            .collect()
    }

    /// Checks that `state` is well-typed for this machine.
    pub fn admits(&self, state: &State) -> bool {
        state.0.len() == self.machine.variables.len()
            && self
                .machine
                .variables
                .iter()
                .zip(&state.0)
                .all(|(v, x)| self.domain_contains(&v.ty, x))
    }

    fn domain_contains(&self, ty: &TypeExpr, v: &Value) -> bool {
        match (ty, v) {
            (TypeExpr::Bool, Value::Bool(_)) => true,
            (TypeExpr::Range(lo, hi), Value::Int(n)) => lo <= n && n <= hi,
            (TypeExpr::Enum(s), Value::Elem(m)) => {
                self.members.get(s).is_some_and(|ms| ms.contains(m))
            }
            (TypeExpr::SetOf(s), Value::Set(xs)) => self
                .members
                .get(s)
                .is_some_and(|ms| xs.iter().all(|x| ms.contains(x))),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("{0} does not match any event declaration")]
    InvalidLabel(String),
    #[error("{0} is not enabled")]
    NotEnabled(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn eval_bool(e: &CExpr, vars: &[Value], params: &[Value]) -> Result<bool, EvalError> {
    eval(e, vars, params)?
        .as_bool()
        .ok_or_else(|| EvalError::IllTyped("predicate".into()))
}

/// Strict evaluation: every operand is evaluated, errors propagate.
/// Integer division and remainder truncate toward zero.
pub fn eval(e: &CExpr, vars: &[Value], params: &[Value]) -> Result<Value, EvalError> {
    use BinOp::*;
    Ok(match e {
        CExpr::Const(v) => v.clone(),
        CExpr::Var(i) => vars[*i].clone(),
        CExpr::Param(i) => params[*i].clone(),
        CExpr::SetLit(items) => {
            let mut set = BTreeSet::new();
            for x in items {
                match eval(x, vars, params)? {
                    Value::Elem(m) => {
                        set.insert(m);
                    }
                    _ => return Err(EvalError::IllTyped("{..}".into())),
                }
            }
            Value::Set(set)
        }
        CExpr::Card(x) => match eval(x, vars, params)? {
            Value::Set(s) => Value::Int(s.len() as i64),
            _ => return Err(EvalError::IllTyped("card".into())),
        },
        CExpr::Not(x) => Value::Bool(!eval_bool(x, vars, params)?),
        CExpr::Neg(x) => {
            let n = int(eval(x, vars, params)?, "-")?;
            Value::Int(n.checked_neg().ok_or(EvalError::Overflow)?)
        }
        CExpr::Bin(op, l, r) => {
            let a = eval(l, vars, params)?;
            let b = eval(r, vars, params)?;
            let sym = op.symbol();
            match op {
                Add => Value::Int(
                    int(a, sym)?
                        .checked_add(int(b, sym)?)
                        .ok_or(EvalError::Overflow)?,
                ),
                Sub => Value::Int(
                    int(a, sym)?
                        .checked_sub(int(b, sym)?)
                        .ok_or(EvalError::Overflow)?,
                ),
                Mul => Value::Int(
                    int(a, sym)?
                        .checked_mul(int(b, sym)?)
                        .ok_or(EvalError::Overflow)?,
                ),
                Div | Mod => {
                    let (x, y) = (int(a, sym)?, int(b, sym)?);
                    if y == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    let r = if *op == Div {
                        x.checked_div(y)
                    } else {
                        x.checked_rem(y)
                    };
                    Value::Int(r.ok_or(EvalError::Overflow)?)
                }
                Lt => Value::Bool(int(a, sym)? < int(b, sym)?),
                Le => Value::Bool(int(a, sym)? <= int(b, sym)?),
                Gt => Value::Bool(int(a, sym)? > int(b, sym)?),
                Ge => Value::Bool(int(a, sym)? >= int(b, sym)?),
                Eq => Value::Bool(a == b),
                Ne => Value::Bool(a != b),
                And => Value::Bool(boolean(a, sym)? & boolean(b, sym)?),
                Or => Value::Bool(boolean(a, sym)? | boolean(b, sym)?),
                Implies => Value::Bool(!boolean(a, sym)? | boolean(b, sym)?),
                Union | Inter | Diff => {
                    let (x, y) = (set(a, sym)?, set(b, sym)?);
                    Value::Set(match op {
                        Union => x.union(&y).cloned().collect(),
                        Inter => x.intersection(&y).cloned().collect(),
                        _ => x.difference(&y).cloned().collect(),
                    })
                }
                In => match (a, b) {
                    (Value::Elem(m), Value::Set(s)) => Value::Bool(s.contains(&m)),
                    _ => return Err(EvalError::IllTyped(sym.into())),
                },
            }
        }
    })
}

fn int(v: Value, op: &str) -> Result<i64, EvalError> {
    v.as_int().ok_or_else(|| EvalError::IllTyped(op.into()))
}

fn boolean(v: Value, op: &str) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| EvalError::IllTyped(op.into()))
}

fn set(v: Value, op: &str) -> Result<BTreeSet<Arc<str>>, EvalError> {
    match v {
        Value::Set(s) => Ok(s),
        _ => Err(EvalError::IllTyped(op.into())),
    }
}

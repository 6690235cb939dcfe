use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lattice::{EventTarget, RefinementEdge};
use crate::engine::{domain, eval_bool, Model, State, TransitionLabel, Value};
use crate::lang::{print_expr, BinOp, Expr, Machine, ParseError, Parser, Scope, Ty, TypeExpr};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub label: TransitionLabel,
    /// Checked in the state reached by this step.
    pub assert: Option<Expr>,
}

/// A scenario: a sequence of labelled steps from the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub machine: String,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(machine: &str, labels: impl IntoIterator<Item = TransitionLabel>) -> Self {
        Trace {
            machine: machine.to_string(),
            steps: labels
                .into_iter()
                .map(|label| TraceStep {
                    label,
                    assert: None,
                })
                .collect(),
        }
    }

    pub fn labels(&self) -> Vec<&TransitionLabel> {
        self.steps.iter().map(|s| &s.label).collect()
    }
}

/// `.trace` text: `trace for M`, then `step e n=v, ...` lines, each
/// optionally followed by `assert pred` lines. Multiple asserts after one
/// step are conjoined.
pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    let mut machine = None;
    let mut steps: Vec<TraceStep> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let at = |e: ParseError| ParseError::new(line_no, e.column, e.message);
        let mut p = Parser::new(line).map_err(at)?;
        if machine.is_none() {
            if !(p.eat_kw("trace") && p.eat_kw("for")) {
                return Err(ParseError::new(
                    line_no,
                    1,
                    "expected 'trace for <machine>'",
                ));
            }
            machine = Some(p.ident().map_err(at)?);
            p.expect_eof().map_err(at)?;
            continue;
        }
        if p.eat_kw("step") {
            let event = p.ident().map_err(at)?;
            let mut params = Vec::new();
            if !p.at_eof() {
                loop {
                    let name = p.ident().map_err(at)?;
                    p.expect_sym("=").map_err(at)?;
                    let lit = p.literal().map_err(at)?;
                    params.push((name, Value::from_literal(&lit)));
                    if !p.eat_sym(",") {
                        break;
                    }
                }
            }
            p.expect_eof().map_err(at)?;
            steps.push(TraceStep {
                label: TransitionLabel { event, params },
                assert: None,
            });
        } else if p.eat_kw("assert") {
            let pred = p.expr().map_err(at)?;
            p.expect_eof().map_err(at)?;
            let Some(last) = steps.last_mut() else {
                return Err(ParseError::new(line_no, 1, "assert before the first step"));
            };
            last.assert = Some(match last.assert.take() {
                Some(prev) => Expr::binary(BinOp::And, prev, pred),
                None => pred,
            });
        } else {
            return Err(ParseError::new(line_no, 1, "expected 'step' or 'assert'"));
        }
    }
    let machine = machine.ok_or_else(|| ParseError::new(1, 1, "empty trace file"))?;
    Ok(Trace { machine, steps })
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trace for {}", self.machine)?;
        for s in &self.steps {
            write!(f, "step {}", s.label.event)?;
            let ps: Vec<String> = s
                .label
                .params
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect();
            if !ps.is_empty() {
                write!(f, " {}", ps.join(", "))?;
            }
            writeln!(f)?;
            if let Some(a) = &s.assert {
                writeln!(f, "assert {}", print_expr(a))?;
            }
        }
        Ok(())
    }
}

/// Checks event and parameter names against `machine` and that assertions
/// are predicates.
pub fn validate_trace(trace: &Trace, machine: &Machine) -> Result<(), String> {
    if trace.machine != machine.name {
        return Err(format!(
            "trace is for {}, not {}",
            trace.machine, machine.name
        ));
    }
    let scope = Scope::new(machine, &[]);
    for (i, s) in trace.steps.iter().enumerate() {
        let ev = machine
            .event(&s.label.event)
            .ok_or_else(|| format!("step {i}: unknown event {}", s.label.event))?;
        for (name, _) in &s.label.params {
            if !ev.params.iter().any(|p| &p.name == name) {
                return Err(format!("step {i}: {} has no parameter {name}", ev.name));
            }
        }
        for p in &ev.params {
            if s.label.param(&p.name).is_none() {
                return Err(format!("step {i}: missing parameter {}", p.name));
            }
        }
        if let Some(a) = &s.assert {
            match scope.type_of(a) {
                Ok(Ty::Bool) => {}
                Ok(t) => return Err(format!("step {i}: assertion has type {t}")),
                Err(e) => return Err(format!("step {i}: {e}")),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ReplayOutcome {
    Pass {
        steps: usize,
        final_state: State,
    },
    Fail {
        step: usize,
        reason: String,
        state: State,
    },
}

impl ReplayOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, ReplayOutcome::Pass { .. })
    }
}

/// Replays `trace` from the initial state. Stops at the first step whose
/// label is invalid or disabled, or whose assertion is false or fails to
/// evaluate; `state` is then the state before the failing step.
pub fn replay_trace(model: &Model, trace: &Trace) -> ReplayOutcome {
    let mut state = match model.initial_state() {
        Ok(s) => s,
        Err(e) => {
            return ReplayOutcome::Fail {
                step: 0,
                reason: format!("initial state: {e}"),
                state: State(vec![]),
            }
        }
    };
    for (i, s) in trace.steps.iter().enumerate() {
        let fail = |reason: String, state: &State| ReplayOutcome::Fail {
            step: i,
            reason,
            state: state.clone(),
        };
        let Some((ev, binding)) = model.resolve_label(&s.label) else {
            return fail(
                format!("{} does not match any event declaration", s.label),
                &state,
            );
        };
        match model.guard_holds(ev, &state, &binding) {
            Ok(true) => {}
            Ok(false) => return fail("event not enabled".into(), &state),
            Err(e) => return fail(format!("guard: {e}"), &state),
        }
        let next = match model.apply(ev, &state, &binding) {
            Ok(n) => n,
            Err(e) => return fail(e.to_string(), &state),
        };
        if let Some(a) = &s.assert {
            let verdict = model
                .compile_predicate(a)
                .map_err(|e| e.to_string())
                .and_then(|c| eval_bool(&c, &next.0, &[]).map_err(|e| e.to_string()));
            match verdict {
                Ok(true) => {}
                Ok(false) => return fail(format!("assertion failed: {}", print_expr(a)), &state),
                Err(e) => return fail(format!("assertion {}: {e}", print_expr(a)), &state),
            }
        }
        state = next;
    }
    ReplayOutcome::Pass {
        steps: trace.steps.len(),
        final_state: state,
    }
}

fn members_of(m: &Machine) -> impl Fn(&str) -> Vec<Arc<str>> + '_ {
    |s| {
        m.set(s)
            .map(|d| d.members.iter().map(|x| Arc::from(x.as_str())).collect())
            .unwrap_or_default()
    }
}

/// A concrete parameter carries over to an abstract one when both have the
/// same base type (same set for enumerations) and the value lies in the
/// abstract domain.
pub fn param_carries_over(
    conc_ty: Option<&TypeExpr>,
    abs_ty: &TypeExpr,
    abs: &Machine,
    value: &Value,
) -> bool {
    let same_base = match (conc_ty, abs_ty) {
        (None, _) => true,
        (Some(TypeExpr::Bool), TypeExpr::Bool)
        | (Some(TypeExpr::Range(..)), TypeExpr::Range(..)) => true,
        (Some(TypeExpr::Enum(a)), TypeExpr::Enum(b))
        | (Some(TypeExpr::SetOf(a)), TypeExpr::SetOf(b)) => a == b,
        _ => false,
    };
    same_base && domain(abs_ty, members_of(abs)).contains(value)
}

/// Drops steps mapped to `NEW`, renames the others and keeps the
/// parameters that carry over; assertions are dropped. Parameters come out
/// in the abstract declaration order.
pub fn translate_trace(
    edge: &RefinementEdge,
    conc: &Machine,
    abs: &Machine,
    trace: &Trace,
) -> Trace {
    let mut steps = Vec::new();
    for s in &trace.steps {
        let Some(EventTarget::Abstract(target)) = edge.target_of(&s.label.event) else {
            continue;
        };
        let conc_ev = conc.event(&s.label.event);
        let mut params = Vec::new();
        if let Some(abs_ev) = abs.event(target) {
            for p in &abs_ev.params {
                let Some(v) = s.label.param(&p.name) else {
                    continue;
                };
                let cty = conc_ev
                    .and_then(|e| e.params.iter().find(|q| q.name == p.name))
                    .map(|q| &q.ty);
                if param_carries_over(cty, &p.ty, abs, v) {
                    params.push((p.name.clone(), v.clone()));
                }
            }
        }
        steps.push(TraceStep {
            label: TransitionLabel {
                event: target.clone(),
                params,
            },
            assert: None,
        });
    }
    Trace {
        machine: edge.to.clone(),
        steps,
    }
}

/// Reorders the parameters of each label to the declaration order of
/// `machine`, so that traces can be compared structurally.
pub fn canonical_labels(trace: &Trace, machine: &Machine) -> Vec<TransitionLabel> {
    trace
        .steps
        .iter()
        .map(|s| {
            let mut l = s.label.clone();
            if let Some(ev) = machine.event(&l.event) {
                l.params.sort_by_key(|(n, _)| {
                    ev.params
                        .iter()
                        .position(|p| &p.name == n)
                        .unwrap_or(usize::MAX)
                });
            }
            l
        })
        .collect()
}

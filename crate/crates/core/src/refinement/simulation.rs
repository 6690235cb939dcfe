use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lattice::{EdgeKind, EventTarget, RefinementEdge};
use super::trace::param_carries_over;
use crate::engine::{
    explore, CExpr, EvalError, LimitKind, Limits, Model, State, TransitionLabel, Value,
    DEFAULT_BINDING_CAP,
};
use crate::lang::{Expr, Machine, Scope};
use crate::ltl::{classify_safety, LtlFormula};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SimulationError {
    #[error("edge {edge}: {message}")]
    Unsupported { edge: String, message: String },
    #[error("edge {edge}: glue does not compile: {message}")]
    Glue { edge: String, message: String },
    #[error("evaluation failed in concrete state {state}: {error}")]
    Eval { state: usize, error: EvalError },
    #[error("glue: {0}")]
    GlueEval(EvalError),
    #[error("abstract event {event} has {count} candidate bindings, above the cap of {cap}")]
    BindingCap {
        event: String,
        count: u128,
        cap: u128,
    },
}

/// Compiled glue of an edge: one expression per abstract variable.
#[derive(Debug, Clone)]
pub struct Glue {
    exprs: Vec<(String, CExpr)>,
    abs: Model,
}

impl Glue {
    pub fn new(edge: &RefinementEdge, conc: &Model, abs: &Model) -> Result<Self, SimulationError> {
        let exprs = edge
            .glue
            .iter()
            .map(|(v, e)| {
                let (c, _) = conc
                    .compile_checked(e, &[])
                    .map_err(|err| SimulationError::Glue {
                        edge: edge.id(),
                        message: format!("{v}: {err}"),
                    })?;
                Ok((v.clone(), c))
            })
            .collect::<Result<_, SimulationError>>()?;
        Ok(Glue {
            exprs,
            abs: abs.clone(),
        })
    }

    /// Abstract valuation of a concrete state. Values outside an abstract
    /// variable's type are reported as out of range.
    pub fn apply(&self, conc: &State) -> Result<State, EvalError> {
        let mut vals = Vec::with_capacity(self.exprs.len());
        for (v, e) in &self.exprs {
            vals.push(crate::engine::eval(e, &conc.0, &[])?);
            let decl = self
                .abs
                .machine()
                .variable(v)
                .expect("glue covers abstract variables");
            let last = vals.last().unwrap();
            if !self.abs.domain(&decl.ty).contains(last) {
                return Err(EvalError::OutOfRange {
                    var: v.clone(),
                    value: last.as_int().unwrap_or_default(),
                    ty: decl.ty.to_string(),
                });
            }
        }
        Ok(State(vals))
    }
}

/// Glues one concrete state along `edge`.
pub fn glue_state(
    edge: &RefinementEdge,
    conc: &Model,
    abs: &Model,
    state: &State,
) -> Result<State, SimulationError> {
    Glue::new(edge, conc, abs)?
        .apply(state)
        .map_err(SimulationError::GlueEval)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationWitness {
    /// Concrete state index in breadth-first order.
    pub state: usize,
    pub concrete_state: String,
    /// `None` when the initial states disagree.
    pub label: Option<TransitionLabel>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SimulationVerdict {
    Pass { transitions: usize },
    Fail { witness: SimulationWitness },
    Inconclusive { limit: LimitKind },
}

impl SimulationVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, SimulationVerdict::Pass { .. })
    }
}

/// Checks that every concrete transition is matched by the abstract
/// machine under the glue: `NEW` events leave the glued state unchanged,
/// mapped events are enabled in the glued source and lead to the glued
/// target. Abstract parameters not carried over from the concrete label
/// are searched over their domains.
pub fn check_simulation(
    edge: &RefinementEdge,
    conc: &Model,
    abs: &Model,
    limits: Limits,
) -> Result<SimulationVerdict, SimulationError> {
    if edge.kind == EdgeKind::Instantiates {
        return Err(SimulationError::Unsupported {
            edge: edge.id(),
            message: "instantiation edges are not checked by simulation".into(),
        });
    }
    let glue = Glue::new(edge, conc, abs)?;
    let space = explore(conc, limits).map_err(|error| SimulationError::Eval { state: 0, error })?;
    if let Some(f) = &space.failure {
        return Err(SimulationError::Eval {
            state: f.state,
            error: f.error.clone(),
        });
    }
    let glued: Vec<State> = (0..space.len())
        .map(|i| {
            glue.apply(space.state(i))
                .map_err(|error| SimulationError::Eval { state: i, error })
        })
        .collect::<Result<_, _>>()?;
    let witness =
        |state: usize, label: Option<TransitionLabel>, reason: String| SimulationWitness {
            state,
            concrete_state: conc.show_state(space.state(state)),
            label,
            reason,
        };

    let abs_init = abs
        .initial_state()
        .map_err(|error| SimulationError::Eval { state: 0, error })?;
    if glued[0] != abs_init {
        let reason = format!(
            "initial state mismatch: glued {} but abstract initial {}",
            abs.show_state(&glued[0]),
            abs.show_state(&abs_init)
        );
        return Ok(SimulationVerdict::Fail {
            witness: witness(0, None, reason),
        });
    }

    let mut candidates: HashMap<BindingKey, Vec<Vec<Value>>> = HashMap::new();
    for t in &space.transitions {
        let label = space.label(t);
        let (gs, gt) = (&glued[t.from], &glued[t.to]);
        let target = edge
            .target_of(&label.event)
            .cloned()
            .unwrap_or(EventTarget::New);
        let EventTarget::Abstract(aname) = target else {
            if gs != gt {
                let reason = format!(
                    "new event changes the abstract state from {} to {}",
                    abs.show_state(gs),
                    abs.show_state(gt)
                );
                return Ok(SimulationVerdict::Fail {
                    witness: witness(t.from, Some(label), reason),
                });
            }
            continue;
        };
        let ai = abs.event_index(&aname).expect("validated event map");
        let key = (ai, label.params.clone());
        if !candidates.contains_key(&key) {
            let bs = abstract_bindings(conc.machine(), abs, ai, &label)?;
            candidates.insert(key.clone(), bs);
        }
        let mut enabled = false;
        let mut matched = false;
        for b in &candidates[&key] {
            let err = |error| SimulationError::Eval {
                state: t.from,
                error,
            };
            if !abs.guard_holds(ai, gs, b).map_err(err)? {
                continue;
            }
            enabled = true;
            if &abs.apply(ai, gs, b).map_err(err)? == gt {
                matched = true;
                break;
            }
        }
        if !matched {
            let reason = if enabled {
                format!(
                    "abstract successor mismatch: {aname} from {} cannot reach {}",
                    abs.show_state(gs),
                    abs.show_state(gt)
                )
            } else {
                format!(
                    "abstract event {aname} not enabled in {}",
                    abs.show_state(gs)
                )
            };
            return Ok(SimulationVerdict::Fail {
                witness: witness(t.from, Some(label), reason),
            });
        }
    }
    Ok(match space.truncated {
        Some(limit) => SimulationVerdict::Inconclusive { limit },
        None => SimulationVerdict::Pass {
            transitions: space.transitions.len(),
        },
    })
}

/// Abstract event index and the concrete label's parameters.
type BindingKey = (usize, Vec<(String, Value)>);

fn abstract_bindings(
    conc: &Machine,
    abs: &Model,
    ai: usize,
    label: &TransitionLabel,
) -> Result<Vec<Vec<Value>>, SimulationError> {
    let ev = &abs.events()[ai];
    let conc_ev = conc.event(&label.event);
    let mut doms = Vec::new();
    let mut count: u128 = 1;
    for (p, dom) in ev.params.iter().zip(&ev.domains) {
        let cty = conc_ev
            .and_then(|e| e.params.iter().find(|q| q.name == p.name))
            .map(|q| &q.ty);
        let d = match label.param(&p.name) {
            Some(v) if param_carries_over(cty, &p.ty, abs.machine(), v) => vec![v.clone()],
            _ => dom.clone(),
        };
        count = count.saturating_mul(d.len() as u128);
        doms.push(d);
    }
    if count > DEFAULT_BINDING_CAP {
        return Err(SimulationError::BindingCap {
            event: ev.name.clone(),
            count,
            cap: DEFAULT_BINDING_CAP,
        });
    }
    let mut out = vec![Vec::new()];
    for d in doms {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Value>| {
                d.iter().map(move |v| {
                    let mut b = prefix.clone();
                    b.push(v.clone());
                    b
                })
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inheritance {
    pub applicable: bool,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_formula: Option<String>,
}

/// Rewrites every abstract variable in the state atoms of `f` with its
/// glue expression.
pub fn translate_formula(edge: &RefinementEdge, f: &LtlFormula) -> LtlFormula {
    f.map_state(&|e: &Expr| e.substitute(&|name| edge.glue_of(name).cloned()))
}

/// Decides whether an LTL result on `edge.to` carries over to `edge.from`.
/// Requires an X-free safety formula without event atoms, a currently
/// discharged simulation on the edge, and a translated formula that
/// type-checks on the concrete machine.
pub fn inheritance_check(
    formula: &LtlFormula,
    edge: &RefinementEdge,
    conc: &Machine,
    simulation_discharged: bool,
) -> (Inheritance, Option<LtlFormula>) {
    let class = classify_safety(formula);
    let no = |reason: &str| {
        (
            Inheritance {
                applicable: false,
                reason: reason.to_string(),
                translated_formula: None,
            },
            None,
        )
    };
    if edge.kind == EdgeKind::Instantiates {
        return no("instantiation edges do not propagate results");
    }
    if !class.safety {
        return no("not a safety formula");
    }
    if !class.inheritance_eligible {
        return no("formula uses X or event atoms");
    }
    if !simulation_discharged {
        return no("simulation not currently discharged");
    }
    let translated = translate_formula(edge, formula);
    let scope = Scope::new(conc, &[]);
    let mut problem = None;
    translated.for_each_atom(&mut |a| {
        if let LtlFormula::State(e) = a {
            if let Err(msg) = scope.type_of(e) {
                problem.get_or_insert(msg);
            }
        }
    });
    if let Some(msg) = problem {
        return no(&format!("translated formula does not type-check: {msg}"));
    }
    (
        Inheritance {
            applicable: true,
            reason: format!("safety formula inherited along {}", edge.id()),
            translated_formula: Some(translated.to_string()),
        },
        Some(translated),
    )
}

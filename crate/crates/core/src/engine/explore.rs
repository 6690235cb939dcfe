use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::model::{EvalError, Model, State, TransitionLabel};
use super::value::Value;
use crate::lang::print_expr;

pub const DEFAULT_MAX_STATES: usize = 100_000;
pub const DEFAULT_MAX_TRANSITIONS: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_states: usize,
    pub max_transitions: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: DEFAULT_MAX_STATES,
            max_transitions: DEFAULT_MAX_TRANSITIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    MaxStates,
    MaxTransitions,
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitKind::MaxStates => "max_states",
            LimitKind::MaxTransitions => "max_transitions",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub event: usize,
    pub binding: Vec<Value>,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub state: usize,
    pub invariant: usize,
    pub predicate: String,
}

/// Evaluation failure during exploration, with the state being processed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreFailure {
    pub state: usize,
    pub error: EvalError,
}

/// Explicit reachable graph. State 0 is the initial state; states are
/// numbered in breadth-first discovery order.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub states: IndexSet<State>,
    pub transitions: Vec<Transition>,
    pub invariant_violations: Vec<InvariantViolation>,
    pub deadlocks: Vec<usize>,
    pub truncated: Option<LimitKind>,
    pub failure: Option<ExploreFailure>,
    event_names: Vec<String>,
    param_names: Vec<Vec<String>>,
}

impl StateSpace {
    pub fn state(&self, i: usize) -> &State {
        &self.states[i]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated.is_some()
    }

    /// Exploration finished without hitting a limit or an evaluation error.
    pub fn is_complete(&self) -> bool {
        self.truncated.is_none() && self.failure.is_none()
    }

    pub fn label(&self, t: &Transition) -> TransitionLabel {
        TransitionLabel {
            event: self.event_names[t.event].clone(),
            params: self.param_names[t.event]
                .iter()
                .cloned()
                .zip(t.binding.iter().cloned())
                .collect(),
        }
    }

    pub fn event_name(&self, event: usize) -> &str {
        &self.event_names[event]
    }

    /// Outgoing transition indices per state.
    pub fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.states.len()];
        for (i, t) in self.transitions.iter().enumerate() {
            out[t.from].push(i);
        }
        out
    }

    /// Text edge list: `from<TAB>event(params)<TAB>to`, one line per transition.
    pub fn edge_list(&self) -> String {
        let mut s = String::new();
        for t in &self.transitions {
            s.push_str(&format!("{}\t{}\t{}\n", t.from, self.label(t), t.to));
        }
        s
    }
}

/// Breadth-first exploration from the initial state with canonical successor
/// order. Fails only when the initial state itself cannot be evaluated.
pub fn explore(model: &Model, limits: Limits) -> Result<StateSpace, EvalError> {
    let init = model.initial_state()?;
    let mut space = StateSpace {
        states: IndexSet::new(),
        transitions: Vec::new(),
        invariant_violations: Vec::new(),
        deadlocks: Vec::new(),
        truncated: None,
        failure: None,
        event_names: model.events().iter().map(|e| e.name.clone()).collect(),
        param_names: model
            .events()
            .iter()
            .map(|e| e.params.iter().map(|p| p.name.clone()).collect())
            .collect(),
    };
    space.states.insert(init);
    if let Err(error) = record_invariants(model, &mut space, 0) {
        space.failure = Some(ExploreFailure { state: 0, error });
        return Ok(space);
    }

    let mut next = 0;
    'bfs: while next < space.states.len() {
        let source = space.states[next].clone();
        let enabled = match model.enabled_raw(&source) {
            Ok(e) => e,
            Err(error) => {
                space.failure = Some(ExploreFailure { state: next, error });
                break;
            }
        };
        if enabled.is_empty() {
            space.deadlocks.push(next);
        }
        for (event, binding) in enabled {
            let target = match model.apply(event, &source, &binding) {
                Ok(s) => s,
                Err(error) => {
                    space.failure = Some(ExploreFailure { state: next, error });
                    break 'bfs;
                }
            };
            let to = match space.states.get_index_of(&target) {
                Some(j) => j,
                None => {
                    if space.states.len() >= limits.max_states {
                        space.truncated = Some(LimitKind::MaxStates);
                        break 'bfs;
                    }
                    let (j, _) = space.states.insert_full(target);
                    if let Err(error) = record_invariants(model, &mut space, j) {
                        space.failure = Some(ExploreFailure { state: j, error });
                        break 'bfs;
                    }
                    j
                }
            };
            if space.transitions.len() >= limits.max_transitions {
                space.truncated = Some(LimitKind::MaxTransitions);
                break 'bfs;
            }
            space.transitions.push(Transition {
                from: next,
                event,
                binding,
                to,
            });
        }
        next += 1;
    }
    Ok(space)
}

fn record_invariants(model: &Model, space: &mut StateSpace, idx: usize) -> Result<(), EvalError> {
    let state = &space.states[idx];
    for (i, inv) in model.invariants().iter().enumerate() {
        if !super::model::eval_bool(inv, &state.0, &[])? {
            space.invariant_violations.push(InvariantViolation {
                state: idx,
                invariant: i,
                predicate: print_expr(&model.machine().invariants[i]),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctCoverage {
    pub conjunct: String,
    pub seen_true: usize,
    pub seen_false: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub errors: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCoverage {
    pub event: String,
    pub fired: usize,
    pub conjuncts: Vec<ConjunctCoverage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub events: Vec<EventCoverage>,
}

impl CoverageReport {
    pub fn uncovered_events(&self) -> Vec<&str> {
        self.events
            .iter()
            .filter(|e| e.fired == 0)
            .map(|e| e.event.as_str())
            .collect()
    }

    /// Fraction of events fired at least once; 1.0 for a machine without events.
    pub fn event_coverage(&self) -> f64 {
        if self.events.is_empty() {
            return 1.0;
        }
        let fired = self.events.iter().filter(|e| e.fired > 0).count();
        fired as f64 / self.events.len() as f64
    }

    /// Conjuncts not observed with both truth values, as `event: conjunct`.
    pub fn single_polarity_conjuncts(&self) -> Vec<String> {
        self.events
            .iter()
            .flat_map(|e| {
                e.conjuncts
                    .iter()
                    .filter(|c| c.seen_true == 0 || c.seen_false == 0)
                    .map(move |c| format!("{}: {}", e.event, c.conjunct))
            })
            .collect()
    }
}

/// Event firing counts over the stored transitions and per-conjunct truth
/// counts over every reachable state and every canonical binding.
pub fn coverage(space: &StateSpace, model: &Model) -> CoverageReport {
    let mut events: Vec<EventCoverage> = model
        .events()
        .iter()
        .map(|e| EventCoverage {
            event: e.name.clone(),
            fired: 0,
            conjuncts: e
                .guard_text
                .iter()
                .map(|g| ConjunctCoverage {
                    conjunct: g.clone(),
                    seen_true: 0,
                    seen_false: 0,
                    errors: 0,
                })
                .collect(),
        })
        .collect();
    for t in &space.transitions {
        events[t.event].fired += 1;
    }
    for (ei, ev) in model.events().iter().enumerate() {
        let bindings = ev.bindings();
        for state in &space.states {
            for b in &bindings {
                for (ci, g) in ev.guard.iter().enumerate() {
                    let c = &mut events[ei].conjuncts[ci];
                    match super::model::eval_bool(g, &state.0, b) {
                        Ok(true) => c.seen_true += 1,
                        Ok(false) => c.seen_false += 1,
                        Err(_) => c.errors += 1,
                    }
                }
            }
        }
    }
    CoverageReport { events }
}

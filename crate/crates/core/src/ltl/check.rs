use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::buchi::{to_buchi, BuchiAutomaton};
use super::syntax::{LtlFormula, STUTTER_EVENT};
use crate::engine::{
    eval_bool, explore, CExpr, EvalError, LimitKind, Limits, Model, StateSpace, TransitionLabel,
};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum LtlError {
    #[error("atom {atom}: {message}")]
    Atom { atom: String, message: String },
    #[error("atom {atom} in state {state}: {error}")]
    AtomEval {
        atom: String,
        state: usize,
        error: EvalError,
    },
    #[error("exploration failed in state {state}: {error}")]
    Explore { state: usize, error: EvalError },
    #[error("state space too large for the oracle: {states} states")]
    OracleGuard { states: usize },
}

/// One position of a lasso: the source state and the label taken from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LassoStep {
    pub state: usize,
    pub label: TransitionLabel,
}

/// Ultimately periodic path: `prefix` followed by `cycle` repeated forever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lasso {
    pub prefix: Vec<LassoStep>,
    pub cycle: Vec<LassoStep>,
}

impl Lasso {
    /// Steps of the infinite unrolling, up to `n` positions.
    pub fn unroll(&self, n: usize) -> Vec<&LassoStep> {
        self.prefix
            .iter()
            .chain(self.cycle.iter().cycle())
            .take(n)
            .collect()
    }

    /// `PREFIX:` and `CYCLE:` sections with one `state → event(params)` line
    /// per step.
    pub fn render(&self, model: &Model, space: &StateSpace) -> String {
        let mut s = String::from("PREFIX:\n");
        let line = |s: &mut String, st: &LassoStep| {
            s.push_str(&format!(
                "  {} {} → {}\n",
                st.state,
                model.show_state(space.state(st.state)),
                st.label
            ));
        };
        for st in &self.prefix {
            line(&mut s, st);
        }
        s.push_str("CYCLE:\n");
        for st in &self.cycle {
            line(&mut s, st);
        }
        s
    }
}

impl fmt::Display for Lasso {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "PREFIX:")?;
        for st in &self.prefix {
            writeln!(f, "  {} → {}", st.state, st.label)?;
        }
        writeln!(f, "CYCLE:")?;
        for st in &self.cycle {
            writeln!(f, "  {} → {}", st.state, st.label)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LtlVerdict {
    Pass,
    Fail { lasso: Lasso },
    Inconclusive { limit: LimitKind },
}

impl LtlVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, LtlVerdict::Pass)
    }

    pub fn lasso(&self) -> Option<&Lasso> {
        match self {
            LtlVerdict::Fail { lasso } => Some(lasso),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphEdge {
    pub from: usize,
    pub label: TransitionLabel,
    pub to: usize,
}

/// The state space with a `$stutter` self-loop on every deadlocked state.
#[derive(Debug, Clone)]
pub struct StutteredGraph {
    pub edges: Vec<GraphEdge>,
    pub out: Vec<Vec<usize>>,
}

impl StutteredGraph {
    pub fn new(space: &StateSpace) -> Self {
        let mut edges: Vec<GraphEdge> = space
            .transitions
            .iter()
            .map(|t| GraphEdge {
                from: t.from,
                label: space.label(t),
                to: t.to,
            })
            .collect();
        for &d in &space.deadlocks {
            edges.push(GraphEdge {
                from: d,
                label: TransitionLabel::plain(STUTTER_EVENT),
                to: d,
            });
        }
        let mut out = vec![Vec::new(); space.len()];
        for (i, e) in edges.iter().enumerate() {
            out[e.from].push(i);
        }
        StutteredGraph { edges, out }
    }

    fn step(&self, e: usize) -> LassoStep {
        LassoStep {
            state: self.edges[e].from,
            label: self.edges[e].label.clone(),
        }
    }
}

enum CompiledAtom {
    State(CExpr),
    Event(String),
}

pub(crate) struct AtomEvaluator {
    atoms: Vec<(String, CompiledAtom)>,
}

impl AtomEvaluator {
    pub(crate) fn new(model: &Model, atoms: &[LtlFormula]) -> Result<Self, LtlError> {
        let mut out = Vec::new();
        for a in atoms {
            let text = a.to_string();
            let c = match a {
                LtlFormula::State(e) => {
                    CompiledAtom::State(model.compile_predicate(e).map_err(|err| {
                        LtlError::Atom {
                            atom: text.clone(),
                            message: err.to_string(),
                        }
                    })?)
                }
                LtlFormula::Event(name) => {
                    if model.event_index(name).is_none() {
                        return Err(LtlError::Atom {
                            atom: text,
                            message: format!("unknown event {name}"),
                        });
                    }
                    CompiledAtom::Event(name.clone())
                }
                _ => unreachable!("atom tables hold only atoms"),
            };
            out.push((text, c));
        }
        Ok(AtomEvaluator { atoms: out })
    }

    /// Truth value of every atom at a position (source state, outgoing label).
    pub(crate) fn letter(
        &self,
        space: &StateSpace,
        state: usize,
        label: &TransitionLabel,
    ) -> Result<Vec<bool>, LtlError> {
        self.atoms
            .iter()
            .map(|(text, a)| match a {
                CompiledAtom::State(c) => {
                    eval_bool(c, &space.state(state).0, &[]).map_err(|error| LtlError::AtomEval {
                        atom: text.clone(),
                        state,
                        error,
                    })
                }
                CompiledAtom::Event(name) => Ok(&label.event == name),
            })
            .collect()
    }
}

pub(crate) fn collect_atoms(f: &LtlFormula) -> Vec<LtlFormula> {
    let mut atoms: Vec<LtlFormula> = Vec::new();
    f.for_each_atom(&mut |a| {
        if !matches!(a, LtlFormula::State(crate::lang::Expr::Bool(_))) && !atoms.contains(a) {
            atoms.push(a.clone());
        }
    });
    atoms
}

/// Type-checks every atom of `f` against `model`.
pub fn check_atoms(model: &Model, f: &LtlFormula) -> Result<(), LtlError> {
    AtomEvaluator::new(model, &collect_atoms(f)).map(|_| ())
}

/// Explores `model` within `limits` and checks `formula` on it.
pub fn check_ltl(
    model: &Model,
    formula: &LtlFormula,
    limits: Limits,
) -> Result<LtlVerdict, LtlError> {
    check_atoms(model, formula)?;
    let space = explore(model, limits).map_err(|error| LtlError::Explore { state: 0, error })?;
    check_ltl_on(model, &space, formula)
}

/// Checks `formula` on an already explored state space. A counterexample
/// found in a truncated space is genuine; absence of one is inconclusive.
pub fn check_ltl_on(
    model: &Model,
    space: &StateSpace,
    formula: &LtlFormula,
) -> Result<LtlVerdict, LtlError> {
    if let Some(f) = &space.failure {
        return Err(LtlError::Explore {
            state: f.state,
            error: f.error.clone(),
        });
    }
    let aut = to_buchi(&LtlFormula::negate(formula.clone()));
    let eval = AtomEvaluator::new(model, &aut.atoms.0)?;
    let graph = StutteredGraph::new(space);
    let letters = graph
        .edges
        .iter()
        .map(|e| eval.letter(space, e.from, &e.label))
        .collect::<Result<Vec<_>, _>>()?;
    let product = Product {
        graph: &graph,
        aut: &aut,
        letters: &letters,
    };
    match product.find_accepting_lasso() {
        Some(lasso) => Ok(LtlVerdict::Fail { lasso }),
        None => match space.truncated {
            Some(limit) => Ok(LtlVerdict::Inconclusive { limit }),
            None => Ok(LtlVerdict::Pass),
        },
    }
}

struct Product<'a> {
    graph: &'a StutteredGraph,
    aut: &'a BuchiAutomaton,
    letters: &'a [Vec<bool>],
}

type Node = (usize, usize);

impl Product<'_> {
    fn admits(&self, q: usize, edge: usize) -> bool {
        self.aut.admits(q, |a| self.letters[edge][a])
    }

    fn initial(&self) -> Vec<Node> {
        let mut v = Vec::new();
        if self.graph.out.is_empty() {
            return v;
        }
        for &e in &self.graph.out[0] {
            for &q in &self.aut.initial_states {
                if self.admits(q, e) {
                    v.push((e, q));
                }
            }
        }
        v
    }

    fn successors(&self, (e, q): Node) -> Vec<Node> {
        let mut v = Vec::new();
        for &e2 in &self.graph.out[self.graph.edges[e].to] {
            for &q2 in &self.aut.successors[q] {
                if self.admits(q2, e2) {
                    v.push((e2, q2));
                }
            }
        }
        v
    }

    /// Nested depth-first search. The inner search from an accepting node
    /// stops at any node on the outer stack, which closes a cycle through
    /// the seed.
    fn find_accepting_lasso(&self) -> Option<Lasso> {
        let mut visited: HashSet<Node> = HashSet::new();
        let mut inner_visited: HashSet<Node> = HashSet::new();
        let mut on_stack: HashMap<Node, usize> = HashMap::new();

        for root in self.initial() {
            if !visited.insert(root) {
                continue;
            }
            let mut stack: Vec<(Node, Vec<Node>, usize)> = vec![(root, self.successors(root), 0)];
            on_stack.insert(root, 0);
            while let Some(frame) = stack.last_mut() {
                if frame.2 < frame.1.len() {
                    let next = frame.1[frame.2];
                    frame.2 += 1;
                    if visited.insert(next) {
                        on_stack.insert(next, stack.len());
                        let succ = self.successors(next);
                        stack.push((next, succ, 0));
                    }
                    continue;
                }
                let seed = frame.0;
                if self.aut.accepting[seed.1] {
                    if let Some((target, path)) = self.inner(seed, &on_stack, &mut inner_visited) {
                        let outer: Vec<Node> = stack.iter().map(|f| f.0).collect();
                        let at = on_stack[&target];
                        let prefix = outer[..at].iter().map(|n| self.graph.step(n.0)).collect();
                        let cycle = outer[at..]
                            .iter()
                            .chain(path.iter())
                            .map(|n| self.graph.step(n.0))
                            .collect();
                        return Some(compress(Lasso { prefix, cycle }));
                    }
                }
                on_stack.remove(&seed);
                stack.pop();
            }
        }
        None
    }

    /// Returns the reached outer-stack node and the inner path strictly
    /// between the seed and it.
    fn inner(
        &self,
        seed: Node,
        on_stack: &HashMap<Node, usize>,
        visited: &mut HashSet<Node>,
    ) -> Option<(Node, Vec<Node>)> {
        let mut stack: Vec<(Node, Vec<Node>, usize)> = vec![(seed, self.successors(seed), 0)];
        while let Some(frame) = stack.last_mut() {
            if frame.2 < frame.1.len() {
                let next = frame.1[frame.2];
                frame.2 += 1;
                if on_stack.contains_key(&next) {
                    let path = stack[1..].iter().map(|f| f.0).collect();
                    return Some((next, path));
                }
                if visited.insert(next) {
                    let succ = self.successors(next);
                    stack.push((next, succ, 0));
                }
                continue;
            }
            stack.pop();
        }
        None
    }
}

/// Folds prefix steps that repeat the end of the cycle into the cycle, and
/// shortens a cycle that is a repetition of a shorter one.
fn compress(mut l: Lasso) -> Lasso {
    while let (Some(p), Some(c)) = (l.prefix.last(), l.cycle.last()) {
        if p != c {
            break;
        }
        l.prefix.pop();
        let last = l.cycle.pop().unwrap();
        l.cycle.insert(0, last);
    }
    let n = l.cycle.len();
    for d in 1..n {
        if n.is_multiple_of(d) && (0..n).all(|i| l.cycle[i] == l.cycle[i % d]) {
            l.cycle.truncate(d);
            break;
        }
    }
    l
}

/// Direct semantics of `f` on the positions of a lasso with `n` positions,
/// where position `i` is followed by `succ(i)`. `atom(a, i)` gives the truth
/// of atom `a` at position `i`. Temporal operators are computed as
/// fixpoints over the finite position graph.
pub fn eval_on_lasso(
    f: &LtlFormula,
    n: usize,
    succ: &impl Fn(usize) -> usize,
    atom: &impl Fn(&LtlFormula, usize) -> bool,
) -> Vec<bool> {
    use LtlFormula as L;
    let fix = |init: bool, step: &dyn Fn(usize, &[bool]) -> bool| {
        let mut v = vec![init; n];
        loop {
            let next: Vec<bool> = (0..n).map(|i| step(i, &v)).collect();
            if next == v {
                return v;
            }
            v = next;
        }
    };
    match f {
        L::Bool(b) | L::State(crate::lang::Expr::Bool(b)) => vec![*b; n],
        L::State(_) | L::Event(_) => (0..n).map(|i| atom(f, i)).collect(),
        L::Not(a) => eval_on_lasso(a, n, succ, atom)
            .into_iter()
            .map(|x| !x)
            .collect(),
        L::And(a, b) | L::Or(a, b) | L::Implies(a, b) => {
            let (x, y) = (
                eval_on_lasso(a, n, succ, atom),
                eval_on_lasso(b, n, succ, atom),
            );
            (0..n)
                .map(|i| match f {
                    L::And(..) => x[i] && y[i],
                    L::Or(..) => x[i] || y[i],
                    _ => !x[i] || y[i],
                })
                .collect()
        }
        L::Next(a) => {
            let x = eval_on_lasso(a, n, succ, atom);
            (0..n).map(|i| x[succ(i)]).collect()
        }
        L::Finally(a) => {
            let x = eval_on_lasso(a, n, succ, atom);
            fix(false, &|i, v| x[i] || v[succ(i)])
        }
        L::Globally(a) => {
            let x = eval_on_lasso(a, n, succ, atom);
            fix(true, &|i, v| x[i] && v[succ(i)])
        }
        L::Until(a, b) => {
            let (x, y) = (
                eval_on_lasso(a, n, succ, atom),
                eval_on_lasso(b, n, succ, atom),
            );
            fix(false, &|i, v| y[i] || (x[i] && v[succ(i)]))
        }
    }
}

/// Whether the infinite unrolling of `lasso` satisfies `f`, by direct
/// evaluation of atoms in the model.
pub fn lasso_satisfies(
    model: &Model,
    space: &StateSpace,
    f: &LtlFormula,
    lasso: &Lasso,
) -> Result<bool, LtlError> {
    let atoms = collect_atoms(f);
    let eval = AtomEvaluator::new(model, &atoms)?;
    let steps: Vec<&LassoStep> = lasso.prefix.iter().chain(&lasso.cycle).collect();
    let letters = steps
        .iter()
        .map(|s| eval.letter(space, s.state, &s.label))
        .collect::<Result<Vec<_>, _>>()?;
    let n = steps.len();
    let p = lasso.prefix.len();
    let v = eval_on_lasso(f, n, &|i| if i + 1 < n { i + 1 } else { p }, &|a, i| {
        letters[i][atoms.iter().position(|x| x == a).expect("collected atom")]
    });
    Ok(n > 0 && v[0])
}

/// Checks that `lasso` is a path of `model` through `space`: starts at the
/// initial state, each label is enabled at its source (or is `$stutter` on a
/// deadlock) and leads to the next step's state, and the cycle closes.
pub fn lasso_replays(model: &Model, space: &StateSpace, lasso: &Lasso) -> Result<(), String> {
    let steps: Vec<&LassoStep> = lasso.prefix.iter().chain(&lasso.cycle).collect();
    if lasso.cycle.is_empty() {
        return Err("empty cycle".into());
    }
    if steps[0].state != 0 {
        return Err(format!("lasso starts at state {}", steps[0].state));
    }
    for (i, s) in steps.iter().enumerate() {
        let next_state = if i + 1 < steps.len() {
            steps[i + 1].state
        } else {
            lasso.cycle[0].state
        };
        let source = space.state(s.state);
        let target = if s.label.event == STUTTER_EVENT {
            if !model.enabled(source).map_err(|e| e.to_string())?.is_empty() {
                return Err(format!(
                    "step {i}: stutter at non-deadlocked state {}",
                    s.state
                ));
            }
            source.clone()
        } else {
            model
                .step(source, &s.label)
                .map_err(|e| format!("step {i}: {e}"))?
        };
        if &target != space.state(next_state) {
            return Err(format!(
                "step {i}: {} leads to {}, lasso continues at state {next_state}",
                s.label,
                model.show_state(&target)
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{instantiate, parse_machine, Literal};
    use crate::ltl::parse_ltl;
    use std::collections::BTreeMap;

    fn switch() -> Model {
        let src = "machine Switch var on : BOOL init false \
            event turn_on when on = false then on := true end \
            event turn_off when on = true then on := false end end";
        Model::new(&parse_machine(src).unwrap()).unwrap()
    }

    fn counter3() -> Model {
        let g = parse_machine(
            "machine Counter const MAX : 0..10 var c : 0..10 init 0 event inc when c < MAX then c := c + 1 end end",
        )
        .unwrap();
        Model::new(
            &instantiate(
                &g,
                "Counter3",
                &BTreeMap::from([("MAX".into(), Literal::Int(3))]),
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn check(m: &Model, f: &str) -> LtlVerdict {
        check_ltl(m, &parse_ltl(f).unwrap(), Limits::default()).unwrap()
    }

    #[test]
    fn switch_never_on_fails_after_turn_on() {
        let m = switch();
        let v = check(&m, "G {on = false}");
        let lasso = v.lasso().expect("counterexample");
        let first = lasso.unroll(1)[0];
        assert_eq!((first.state, first.label.event.as_str()), (0, "turn_on"));
        let space = explore(&m, Limits::default()).unwrap();
        lasso_replays(&m, &space, lasso).unwrap();
        assert!(
            !lasso_satisfies(&m, &space, &parse_ltl("G {on = false}").unwrap(), lasso).unwrap()
        );
    }

    #[test]
    fn switch_infinitely_often_turn_on() {
        assert_eq!(check(&switch(), "G F [turn_on]"), LtlVerdict::Pass);
    }

    #[test]
    fn counter_stabilises_under_stutter() {
        let m = counter3();
        assert_eq!(check(&m, "F G {c = 3}"), LtlVerdict::Pass);
        assert!(!check(&m, "F G [inc]").is_pass());
        let v = check(&m, "G F [inc]");
        let lasso = v.lasso().unwrap();
        assert_eq!(
            lasso.cycle,
            vec![LassoStep {
                state: 3,
                label: TransitionLabel::plain(STUTTER_EVENT)
            }]
        );
    }

    #[test]
    fn tautology_always_passes() {
        assert_eq!(check(&switch(), "G {true}"), LtlVerdict::Pass);
        assert_eq!(check(&counter3(), "G {true}"), LtlVerdict::Pass);
    }

    #[test]
    fn truncation_is_inconclusive() {
        let v = check_ltl(
            &switch(),
            &parse_ltl("G {on = false or on = true}").unwrap(),
            Limits {
                max_states: 1,
                max_transitions: 10,
            },
        )
        .unwrap();
        assert_eq!(
            v,
            LtlVerdict::Inconclusive {
                limit: LimitKind::MaxStates
            }
        );
    }

    #[test]
    fn atom_errors() {
        let m = switch();
        let err = check_ltl(&m, &parse_ltl("G [explode]").unwrap(), Limits::default()).unwrap_err();
        assert!(matches!(err, LtlError::Atom { .. }));
        let err =
            check_ltl(&m, &parse_ltl("G {on + 1 = 2}").unwrap(), Limits::default()).unwrap_err();
        assert!(matches!(err, LtlError::Atom { .. }));
        let c = counter3();
        let err = check_ltl(
            &c,
            &parse_ltl("G {c div (c - 2) >= 0}").unwrap(),
            Limits::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            LtlError::AtomEval {
                atom: "{((c div (c - 2)) >= 0)}".into(),
                state: 2,
                error: EvalError::DivisionByZero
            }
        );
    }

    #[test]
    fn lasso_rendering() {
        let m = switch();
        let space = explore(&m, Limits::default()).unwrap();
        let lasso = Lasso {
            prefix: vec![LassoStep {
                state: 0,
                label: TransitionLabel::plain("turn_on"),
            }],
            cycle: vec![
                LassoStep {
                    state: 1,
                    label: TransitionLabel::plain("turn_off"),
                },
                LassoStep {
                    state: 0,
                    label: TransitionLabel::plain("turn_on"),
                },
            ],
        };
        assert_eq!(
            lasso.render(&m, &space),
            "PREFIX:\n  0 {on=false} → turn_on\nCYCLE:\n  1 {on=true} → turn_off\n  0 {on=false} → turn_on\n"
        );
        assert_eq!(compress(lasso.clone()).prefix, vec![]);
        lasso_replays(&m, &space, &lasso).unwrap();
    }

    #[test]
    fn replay_rejects_broken_lassos() {
        let m = switch();
        let space = explore(&m, Limits::default()).unwrap();
        let bad = Lasso {
            prefix: vec![],
            cycle: vec![LassoStep {
                state: 0,
                label: TransitionLabel::plain("turn_on"),
            }],
        };
        assert!(lasso_replays(&m, &space, &bad).is_err());
        let stutter = Lasso {
            prefix: vec![],
            cycle: vec![LassoStep {
                state: 0,
                label: TransitionLabel::plain(STUTTER_EVENT),
            }],
        };
        assert!(lasso_replays(&m, &space, &stutter).is_err());
    }

    #[test]
    fn direct_semantics_on_small_lassos() {
        // positions 0 1 2, 2 loops to 1; p holds only at 0
        let succ = |i: usize| if i < 2 { i + 1 } else { 1 };
        let p = parse_ltl("{p}").unwrap();
        let atom = |a: &LtlFormula, i: usize| a == &p && i == 0;
        let at0 = |src: &str| eval_on_lasso(&parse_ltl(src).unwrap(), 3, &succ, &atom)[0];
        assert!(at0("{p}"));
        assert!(!at0("X {p}"));
        assert!(at0("F G not {p}"));
        assert!(!at0("G F {p}"));
        assert!(at0("{p} U not {p}"));
        assert!(!at0("G {p}"));
    }
}

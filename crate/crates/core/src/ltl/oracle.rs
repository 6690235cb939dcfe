//! Brute-force reference checker for small state spaces.

use super::check::{
    collect_atoms, eval_on_lasso, AtomEvaluator, Lasso, LtlError, LtlVerdict, StutteredGraph,
};
use super::syntax::LtlFormula;
use crate::engine::{Model, StateSpace};

pub const ORACLE_MAX_STATES: usize = 12;

/// Enumerates every lasso of the stuttered graph with at most
/// `max_lasso_len` positions, shortest first, and evaluates `formula` on
/// each directly. Returns the first violating lasso.
pub fn ltl_oracle(
    model: &Model,
    space: &StateSpace,
    formula: &LtlFormula,
    max_lasso_len: usize,
) -> Result<LtlVerdict, LtlError> {
    if space.len() > ORACLE_MAX_STATES {
        return Err(LtlError::OracleGuard {
            states: space.len(),
        });
    }
    let atoms = collect_atoms(formula);
    let eval = AtomEvaluator::new(model, &atoms)?;
    let graph = StutteredGraph::new(space);
    let letters = graph
        .edges
        .iter()
        .map(|e| eval.letter(space, e.from, &e.label))
        .collect::<Result<Vec<_>, _>>()?;

    // Edges with the same source, target and letter are interchangeable for
    // the semantics; one representative of each class is enough.
    let out: Vec<Vec<usize>> = graph
        .out
        .iter()
        .map(|es| {
            let mut seen = Vec::new();
            es.iter()
                .copied()
                .filter(|&e| {
                    let key = (graph.edges[e].to, &letters[e]);
                    let fresh = !seen.contains(&key);
                    if fresh {
                        seen.push(key);
                    }
                    fresh
                })
                .collect()
        })
        .collect();

    for len in 1..=max_lasso_len {
        let mut path: Vec<usize> = Vec::with_capacity(len);
        if let Some(l) = search(&graph, &out, &letters, &atoms, formula, len, 0, &mut path) {
            return Ok(LtlVerdict::Fail { lasso: l });
        }
    }
    Ok(LtlVerdict::Pass)
}

#[allow(clippy::too_many_arguments)]
fn search(
    graph: &StutteredGraph,
    out: &[Vec<usize>],
    letters: &[Vec<bool>],
    atoms: &[LtlFormula],
    formula: &LtlFormula,
    len: usize,
    at: usize,
    path: &mut Vec<usize>,
) -> Option<Lasso> {
    if path.len() == len {
        for loop_to in 0..len {
            if graph.edges[path[loop_to]].from != at {
                continue;
            }
            let succ = |i: usize| if i + 1 < len { i + 1 } else { loop_to };
            let atom = |a: &LtlFormula, i: usize| {
                letters[path[i]][atoms.iter().position(|x| x == a).unwrap()]
            };
            if !eval_on_lasso(formula, len, &succ, &atom)[0] {
                let step = |&e: &usize| super::check::LassoStep {
                    state: graph.edges[e].from,
                    label: graph.edges[e].label.clone(),
                };
                return Some(Lasso {
                    prefix: path[..loop_to].iter().map(step).collect(),
                    cycle: path[loop_to..].iter().map(step).collect(),
                });
            }
        }
        return None;
    }
    if at >= out.len() {
        return None;
    }
    for &e in &out[at] {
        path.push(e);
        let found = search(
            graph,
            out,
            letters,
            atoms,
            formula,
            len,
            graph.edges[e].to,
            path,
        );
        path.pop();
        if found.is_some() {
            return found;
        }
    }
    None
}

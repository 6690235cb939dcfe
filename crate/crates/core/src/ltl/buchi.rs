use std::collections::{BTreeMap, BTreeSet};

use super::nnf::{to_nnf, AtomTable, Nnf};
use super::syntax::LtlFormula;

const INIT: usize = usize::MAX;

/// Tableau node: the literals it obliges and its predecessors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuchiNode {
    /// Predecessor node ids; `initial` marks the virtual initial predecessor.
    pub incoming: BTreeSet<usize>,
    pub initial: bool,
    /// `(atom index, required truth value)`.
    pub obligations: Vec<(usize, bool)>,
    old: BTreeSet<Nnf>,
    next: BTreeSet<Nnf>,
}

/// Büchi automaton with state-based labels. `nodes` and `accepting_sets`
/// form the generalized automaton produced by the tableau; `states` is its
/// counter-degeneralized form with a single acceptance condition.
#[derive(Debug, Clone)]
pub struct BuchiAutomaton {
    pub atoms: AtomTable,
    pub nodes: Vec<BuchiNode>,
    pub accepting_sets: Vec<BTreeSet<usize>>,
    /// Degeneralized states `(node, counter)`.
    pub states: Vec<(usize, usize)>,
    pub initial_states: Vec<usize>,
    pub successors: Vec<Vec<usize>>,
    pub accepting: Vec<bool>,
    /// Number of distinct subformulas of the normal form.
    pub closure_size: usize,
}

struct Pending {
    incoming: BTreeSet<usize>,
    new: BTreeSet<Nnf>,
    old: BTreeSet<Nnf>,
    next: BTreeSet<Nnf>,
}

struct Tableau {
    nodes: Vec<BuchiNode>,
}

impl Tableau {
    fn expand(&mut self, mut n: Pending) {
        let Some(eta) = n.new.pop_first() else {
            if let Some(existing) = self
                .nodes
                .iter_mut()
                .find(|m| m.old == n.old && m.next == n.next)
            {
                existing.incoming.extend(n.incoming);
                return;
            }
            let id = self.nodes.len();
            self.nodes.push(BuchiNode {
                incoming: n.incoming,
                initial: false,
                obligations: Vec::new(),
                old: n.old,
                next: n.next.clone(),
            });
            self.expand(Pending {
                incoming: BTreeSet::from([id]),
                new: n.next,
                old: BTreeSet::new(),
                next: BTreeSet::new(),
            });
            return;
        };
        match &eta {
            Nnf::False => {}
            Nnf::True => {
                n.old.insert(eta);
                self.expand(n);
            }
            Nnf::Lit { atom, positive } => {
                if n.old.contains(&Nnf::Lit {
                    atom: *atom,
                    positive: !positive,
                }) {
                    return;
                }
                n.old.insert(eta);
                self.expand(n);
            }
            Nnf::And(a, b) => {
                for x in [a, b] {
                    if !n.old.contains(&**x) {
                        n.new.insert((**x).clone());
                    }
                }
                n.old.insert(eta);
                self.expand(n);
            }
            Nnf::Next(a) => {
                n.next.insert((**a).clone());
                n.old.insert(eta);
                self.expand(n);
            }
            Nnf::Or(a, b) | Nnf::Until(a, b) | Nnf::Release(a, b) => {
                // Until:   a U b  =  b  or (a and X(a U b))
                // Release: a R b  = (a and b) or (b and X(a R b))
                let (first_now, first_next, second_now): (Vec<&Nnf>, bool, Vec<&Nnf>) = match &eta {
                    Nnf::Or(..) => (vec![a], false, vec![b]),
                    Nnf::Until(..) => (vec![a], true, vec![b]),
                    _ => (vec![b], true, vec![a, b]),
                };
                let mut n1 = Pending {
                    incoming: n.incoming.clone(),
                    new: n.new.clone(),
                    old: n.old.clone(),
                    next: n.next.clone(),
                };
                for x in first_now {
                    if !n1.old.contains(x) {
                        n1.new.insert(x.clone());
                    }
                }
                if first_next {
                    n1.next.insert(eta.clone());
                }
                n1.old.insert(eta.clone());
                let mut n2 = n;
                for x in second_now {
                    if !n2.old.contains(x) {
                        n2.new.insert(x.clone());
                    }
                }
                n2.old.insert(eta);
                self.expand(n1);
                self.expand(n2);
            }
        }
    }
}

/// Classic on-the-fly tableau (expand/cover) translation of `f` into a
/// generalized Büchi automaton, followed by counter degeneralization.
pub fn to_buchi(f: &LtlFormula) -> BuchiAutomaton {
    let mut atoms = AtomTable::default();
    let nnf = to_nnf(f, false, &mut atoms);
    let mut closure = Vec::new();
    nnf.subformulas(&mut closure);

    let mut t = Tableau { nodes: Vec::new() };
    t.expand(Pending {
        incoming: BTreeSet::from([INIT]),
        new: BTreeSet::from([nnf]),
        old: BTreeSet::new(),
        next: BTreeSet::new(),
    });
    let mut nodes = t.nodes;
    for node in &mut nodes {
        node.initial = node.incoming.remove(&INIT);
        node.obligations = node
            .old
            .iter()
            .filter_map(|x| match x {
                Nnf::Lit { atom, positive } => Some((*atom, *positive)),
                _ => None,
            })
            .collect();
    }

    let untils: Vec<&Nnf> = closure
        .iter()
        .filter(|x| matches!(x, Nnf::Until(..)))
        .collect();
    let accepting_sets: Vec<BTreeSet<usize>> = untils
        .iter()
        .map(|u| {
            let Nnf::Until(_, rhs) = u else {
                unreachable!()
            };
            (0..nodes.len())
                .filter(|&i| !nodes[i].old.contains(*u) || nodes[i].old.contains(&**rhs))
                .collect()
        })
        .collect();

    let mut aut = BuchiAutomaton {
        atoms,
        nodes,
        accepting_sets,
        states: Vec::new(),
        initial_states: Vec::new(),
        successors: Vec::new(),
        accepting: Vec::new(),
        closure_size: closure.len(),
    };
    aut.degeneralize();
    aut
}

impl BuchiAutomaton {
    fn node_successors(&self, q: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&r| self.nodes[r].incoming.contains(&q))
            .collect()
    }

    fn in_set(&self, set: usize, q: usize) -> bool {
        // Without eventualities every node is accepting.
        self.accepting_sets.get(set).is_none_or(|s| s.contains(&q))
    }

    fn degeneralize(&mut self) {
        let k = self.accepting_sets.len().max(1);
        let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let intern = |key: (usize, usize),
                      states: &mut Vec<(usize, usize)>,
                      index: &mut BTreeMap<(usize, usize), usize>| {
            *index.entry(key).or_insert_with(|| {
                states.push(key);
                states.len() - 1
            })
        };
        let mut states = Vec::new();
        let initial: Vec<usize> = (0..self.nodes.len())
            .filter(|&q| self.nodes[q].initial)
            .collect();
        for q in initial {
            let id = intern((q, 0), &mut states, &mut index);
            self.initial_states.push(id);
        }
        let mut succ: Vec<Vec<usize>> = Vec::new();
        let mut head = 0;
        while head < states.len() {
            let (q, j) = states[head];
            let j2 = if self.in_set(j, q) { (j + 1) % k } else { j };
            let mut out = Vec::new();
            for r in self.node_successors(q) {
                out.push(intern((r, j2), &mut states, &mut index));
            }
            succ.push(out);
            head += 1;
        }
        self.accepting = states
            .iter()
            .map(|&(q, j)| j == 0 && self.in_set(0, q))
            .collect();
        self.states = states;
        self.successors = succ;
    }

    /// True when no accepting cycle is reachable, ignoring atom semantics
    /// beyond per-node consistency.
    pub fn is_language_empty(&self) -> bool {
        let n = self.states.len();
        let mut reach = vec![false; n];
        let mut stack: Vec<usize> = self.initial_states.clone();
        while let Some(s) = stack.pop() {
            if !reach[s] {
                reach[s] = true;
                stack.extend(&self.successors[s]);
            }
        }
        // an accepting state that can reach itself
        (0..n).filter(|&s| reach[s] && self.accepting[s]).all(|s| {
            let mut seen = vec![false; n];
            let mut stack = self.successors[s].clone();
            while let Some(x) = stack.pop() {
                if x == s {
                    return false;
                }
                if !seen[x] {
                    seen[x] = true;
                    stack.extend(&self.successors[x]);
                }
            }
            true
        })
    }

    /// Whether degeneralized state `s` is compatible with a letter, given
    /// the truth value of each atom.
    pub fn admits(&self, s: usize, atom_value: impl Fn(usize) -> bool) -> bool {
        let (q, _) = self.states[s];
        self.nodes[q]
            .obligations
            .iter()
            .all(|&(a, want)| atom_value(a) == want)
    }

    /// Runs the automaton on an ultimately periodic word of atom valuations
    /// (`prefix` then `cycle` repeated) and reports acceptance. Used to
    /// compare the automaton's language against direct evaluation.
    pub fn accepts_lasso(&self, prefix: &[Vec<bool>], cycle: &[Vec<bool>]) -> bool {
        assert!(!cycle.is_empty());
        // Product of automaton states with word positions; positions after
        // the prefix wrap into the cycle.
        let n = prefix.len() + cycle.len();
        let letter = |i: usize| {
            if i < prefix.len() {
                &prefix[i]
            } else {
                &cycle[i - prefix.len()]
            }
        };
        let succ_pos = |i: usize| if i + 1 < n { i + 1 } else { prefix.len() };
        let m = self.states.len();
        let id = |s: usize, i: usize| s * n + i;
        let ok = |s: usize, i: usize| self.admits(s, |a| letter(i)[a]);
        let mut reach = vec![false; m * n];
        let mut stack: Vec<(usize, usize)> = self
            .initial_states
            .iter()
            .filter(|&&s| ok(s, 0))
            .map(|&s| (s, 0))
            .collect();
        while let Some((s, i)) = stack.pop() {
            if reach[id(s, i)] {
                continue;
            }
            reach[id(s, i)] = true;
            let j = succ_pos(i);
            for &t in &self.successors[s] {
                if ok(t, j) {
                    stack.push((t, j));
                }
            }
        }
        for s in 0..m {
            for i in 0..n {
                if !(reach[id(s, i)] && self.accepting[s]) {
                    continue;
                }
                let mut seen = vec![false; m * n];
                let j = succ_pos(i);
                let mut stack: Vec<(usize, usize)> = self.successors[s]
                    .iter()
                    .filter(|&&t| ok(t, j))
                    .map(|&t| (t, j))
                    .collect();
                while let Some((t, k)) = stack.pop() {
                    if (t, k) == (s, i) {
                        return true;
                    }
                    if seen[id(t, k)] {
                        continue;
                    }
                    seen[id(t, k)] = true;
                    let k2 = succ_pos(k);
                    for &u in &self.successors[t] {
                        if ok(u, k2) {
                            stack.push((u, k2));
                        }
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse_ltl;

    fn aut(src: &str) -> BuchiAutomaton {
        to_buchi(&parse_ltl(src).unwrap())
    }

    fn letters(bits: &[bool]) -> Vec<Vec<bool>> {
        bits.iter().map(|b| vec![*b]).collect()
    }

    #[test]
    fn eventually_not_p() {
        let a = aut("not (G {p})");
        // waiting node, the node that sees not p, and the unconstrained sink
        assert_eq!(a.nodes.len(), 3);
        let obligations: Vec<_> = a.nodes.iter().map(|n| n.obligations.clone()).collect();
        assert_eq!(
            obligations
                .iter()
                .filter(|o| o.as_slice() == [(0, false)])
                .count(),
            1
        );
        assert_eq!(obligations.iter().filter(|o| o.is_empty()).count(), 2);
        assert!(a.accepts_lasso(&letters(&[true]), &letters(&[false])));
        assert!(a.accepts_lasso(&[], &letters(&[true, false])));
        assert!(!a.accepts_lasso(&letters(&[true, true]), &letters(&[true])));
    }

    #[test]
    fn single_atom_checks_first_letter() {
        let a = aut("{p}");
        assert!(a.accepts_lasso(&letters(&[true]), &letters(&[false])));
        assert!(!a.accepts_lasso(&letters(&[false]), &letters(&[true])));
    }

    #[test]
    fn negated_tautology_is_empty() {
        assert!(aut("not G {true}").is_language_empty());
        assert!(!aut("G {true}").is_language_empty());
        assert!(aut("{p} and not {p}").is_language_empty());
    }

    #[test]
    fn obligations_are_consistent() {
        let a = aut("G ({p} U not {p}) and F ({q} and not X {q})");
        for n in &a.nodes {
            for &(x, v) in &n.obligations {
                assert!(!n.obligations.contains(&(x, !v)));
            }
        }
    }

    #[test]
    fn node_count_within_closure_bound() {
        for src in [
            "G F {p}",
            "F G {p}",
            "({p} U {q}) U {r}",
            "G ({p} => X ({q} U {r}))",
            "not (G F {p} => G F {q})",
        ] {
            let a = aut(src);
            let bound = 1usize << (2 * a.closure_size).min(60);
            assert!(
                a.nodes.len() <= bound,
                "{src}: {} nodes, bound {bound}",
                a.nodes.len()
            );
        }
    }

    #[test]
    fn generalized_acceptance_is_degeneralized() {
        let a = aut("G F {p} and G F {q}");
        assert_eq!(a.accepting_sets.len(), 2);
        // p and q alternate: both infinitely often
        let word = vec![vec![true, false], vec![false, true]];
        assert!(a.accepts_lasso(&[], &word));
        let only_p = vec![vec![true, false]];
        assert!(!a.accepts_lasso(&[], &only_p));
    }
}

use serde::{Deserialize, Serialize};

use super::syntax::LtlFormula;
use crate::lang::Expr;

/// Negation normal form over an atom table; negation only on atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nnf {
    True,
    False,
    Lit { atom: usize, positive: bool },
    And(Box<Nnf>, Box<Nnf>),
    Or(Box<Nnf>, Box<Nnf>),
    Next(Box<Nnf>),
    Until(Box<Nnf>, Box<Nnf>),
    Release(Box<Nnf>, Box<Nnf>),
}

impl Nnf {
    pub fn any(&self, pred: &impl Fn(&Nnf) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Nnf::True | Nnf::False | Nnf::Lit { .. } => false,
            Nnf::Next(a) => a.any(pred),
            Nnf::And(a, b) | Nnf::Or(a, b) | Nnf::Until(a, b) | Nnf::Release(a, b) => {
                a.any(pred) || b.any(pred)
            }
        }
    }

    pub fn subformulas(&self, out: &mut Vec<Nnf>) {
        if !out.contains(self) {
            out.push(self.clone());
        }
        match self {
            Nnf::True | Nnf::False | Nnf::Lit { .. } => {}
            Nnf::Next(a) => a.subformulas(out),
            Nnf::And(a, b) | Nnf::Or(a, b) | Nnf::Until(a, b) | Nnf::Release(a, b) => {
                a.subformulas(out);
                b.subformulas(out);
            }
        }
    }
}

/// Atoms of a formula in first-occurrence order; only `State` and `Event`
/// variants are stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomTable(pub Vec<LtlFormula>);

impl AtomTable {
    fn intern(&mut self, atom: &LtlFormula) -> usize {
        if let Some(i) = self.0.iter().position(|a| a == atom) {
            return i;
        }
        self.0.push(atom.clone());
        self.0.len() - 1
    }
}

/// Converts `f` (negated when `negate` is set) to negation normal form.
pub fn to_nnf(f: &LtlFormula, negate: bool, atoms: &mut AtomTable) -> Nnf {
    use LtlFormula as L;
    let b = Box::new;
    match f {
        L::Bool(v) | L::State(Expr::Bool(v)) => {
            if *v != negate {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        L::State(_) | L::Event(_) => Nnf::Lit {
            atom: atoms.intern(f),
            positive: !negate,
        },
        L::Not(a) => to_nnf(a, !negate, atoms),
        L::And(x, y) => {
            let (x, y) = (to_nnf(x, negate, atoms), to_nnf(y, negate, atoms));
            if negate {
                Nnf::Or(b(x), b(y))
            } else {
                Nnf::And(b(x), b(y))
            }
        }
        L::Or(x, y) => {
            let (x, y) = (to_nnf(x, negate, atoms), to_nnf(y, negate, atoms));
            if negate {
                Nnf::And(b(x), b(y))
            } else {
                Nnf::Or(b(x), b(y))
            }
        }
        L::Implies(x, y) => {
            let (x, y) = (to_nnf(x, !negate, atoms), to_nnf(y, negate, atoms));
            if negate {
                Nnf::And(b(x), b(y))
            } else {
                Nnf::Or(b(x), b(y))
            }
        }
        L::Next(a) => Nnf::Next(b(to_nnf(a, negate, atoms))),
        L::Finally(a) => {
            let a = to_nnf(a, negate, atoms);
            if negate {
                Nnf::Release(b(Nnf::False), b(a))
            } else {
                Nnf::Until(b(Nnf::True), b(a))
            }
        }
        L::Globally(a) => {
            let a = to_nnf(a, negate, atoms);
            if negate {
                Nnf::Until(b(Nnf::True), b(a))
            } else {
                Nnf::Release(b(Nnf::False), b(a))
            }
        }
        L::Until(x, y) => {
            let (x, y) = (to_nnf(x, negate, atoms), to_nnf(y, negate, atoms));
            if negate {
                Nnf::Release(b(x), b(y))
            } else {
                Nnf::Until(b(x), b(y))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyClass {
    pub safety: bool,
    pub inheritance_eligible: bool,
}

/// Syntactic safety: the negation normal form has no `F`/`U`. Inheritance
/// along refinement edges additionally requires no `X` and no event atoms.
pub fn classify_safety(f: &LtlFormula) -> SafetyClass {
    let mut atoms = AtomTable::default();
    let nnf = to_nnf(f, false, &mut atoms);
    let safety = !nnf.any(&|n| matches!(n, Nnf::Until(..)));
    let has_next = nnf.any(&|n| matches!(n, Nnf::Next(_)));
    let has_event = nnf.any(
        &|n| matches!(n, Nnf::Lit { atom, .. } if matches!(atoms.0[*atom], LtlFormula::Event(_))),
    );
    SafetyClass {
        safety,
        inheritance_eligible: safety && !has_next && !has_event,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse_ltl;

    fn class(src: &str) -> (bool, bool) {
        let c = classify_safety(&parse_ltl(src).unwrap());
        (c.safety, c.inheritance_eligible)
    }

    #[test]
    fn classification_examples() {
        assert_eq!(class("G {p}"), (true, true));
        assert_eq!(class("F {p}"), (false, false));
        assert_eq!(class("G ({p} => X {q})"), (true, false));
    }

    #[test]
    fn negation_moves_through_temporal_operators() {
        assert_eq!(class("not F {p}"), (true, true));
        assert_eq!(class("not G {p}"), (false, false));
        assert_eq!(class("not ({p} U {q})"), (true, true));
        assert_eq!(class("G [e]"), (true, false));
        assert_eq!(class("G not G {p}"), (false, false));
    }

    #[test]
    fn constant_atoms_fold() {
        let mut atoms = AtomTable::default();
        let n = to_nnf(&parse_ltl("G {true}").unwrap(), true, &mut atoms);
        assert_eq!(n, Nnf::Until(Box::new(Nnf::True), Box::new(Nnf::False)));
        assert!(atoms.0.is_empty());
    }

    #[test]
    fn shared_atoms_are_interned_once() {
        let mut atoms = AtomTable::default();
        to_nnf(
            &parse_ltl("G ({p} => F {p}) and [e] U [e]").unwrap(),
            false,
            &mut atoms,
        );
        assert_eq!(atoms.0.len(), 2);
    }
}

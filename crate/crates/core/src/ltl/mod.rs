//! Linear temporal logic over machine runs: parsing, safety
//! classification, tableau translation to Büchi automata and product
//! emptiness checking.
//!
//! Positions of a run are (state, outgoing transition) pairs. State atoms
//! `{pred}` read the state, event atoms `[e]` read the transition.
//! Deadlocked states get a `$stutter` self-loop so every run is infinite.

mod buchi;
mod check;
mod nnf;
mod oracle;
mod syntax;

pub use buchi::{to_buchi, BuchiAutomaton, BuchiNode};
pub use check::{
    check_atoms, check_ltl, check_ltl_on, eval_on_lasso, lasso_replays, lasso_satisfies, GraphEdge,
    Lasso, LassoStep, LtlError, LtlVerdict, StutteredGraph,
};
pub use nnf::{classify_safety, to_nnf, AtomTable, Nnf, SafetyClass};
pub use oracle::{ltl_oracle, ORACLE_MAX_STATES};
pub use syntax::{parse_ltl, LtlFormula, STUTTER_EVENT};

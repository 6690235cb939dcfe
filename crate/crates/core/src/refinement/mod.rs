//! Refinement lattice: edges between machines with event maps and
//! functional glue, trace files and their translation along edges,
//! simulation checking and inheritance of LTL results.

mod lattice;
mod simulation;
mod trace;

pub use lattice::{
    build_lattice, EdgeKind, EdgeSpec, EventTarget, Lattice, LatticeError, RefinementEdge,
};
pub use simulation::{
    check_simulation, glue_state, inheritance_check, translate_formula, Glue, Inheritance,
    SimulationError, SimulationVerdict, SimulationWitness,
};
pub use trace::{
    canonical_labels, param_carries_over, parse_trace, replay_trace, translate_trace,
    validate_trace, ReplayOutcome, Trace, TraceStep,
};

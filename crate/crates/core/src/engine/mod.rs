//! Expression evaluation, successor computation, breadth-first exploration
//! and coverage collection.

mod explore;
mod model;
mod value;

pub use explore::{
    coverage, explore, ConjunctCoverage, CoverageReport, EventCoverage, ExploreFailure,
    InvariantViolation, LimitKind, Limits, StateSpace, Transition, DEFAULT_MAX_STATES,
    DEFAULT_MAX_TRANSITIONS,
};
pub use model::{
    eval, eval_bool, CExpr, CompiledEvent, EvalError, Model, ModelError, State, StepError,
    TransitionLabel, DEFAULT_BINDING_CAP,
};
pub use value::{domain, Value};

use crate::lang::Expr;

/// Type-checks and evaluates `expr` in `state`, with `binding` supplying
/// values for the parameters of `event` (if any).
pub fn eval_expr(
    model: &Model,
    expr: &Expr,
    state: &State,
    event: Option<&str>,
    binding: &[Value],
) -> Result<Value, EvalExprError> {
    let params = match event {
        Some(name) => {
            let i = model
                .event_index(name)
                .ok_or_else(|| EvalExprError::Compile(format!("unknown event {name}")))?;
            model.events()[i].params.clone()
        }
        None => Vec::new(),
    };
    let (c, _) = model
        .compile_checked(expr, &params)
        .map_err(|e| EvalExprError::Compile(e.to_string()))?;
    Ok(eval(&c, &state.0, binding)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalExprError {
    #[error("{0}")]
    Compile(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

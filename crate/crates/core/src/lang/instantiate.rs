use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::*;
use super::check::check_literal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstantiateError {
    #[error("missing binding for constant {0}")]
    MissingBinding(String),
    #[error("binding for {name}: {message}")]
    TypeMismatch { name: String, message: String },
    #[error("{0} is not a generic constant of the machine")]
    NotAConstant(String),
}

/// Binds every generic constant of `generic` to a literal, producing a new
/// machine named `name` in which those constants are replaced by the literals.
pub fn instantiate(
    generic: &Machine,
    name: &str,
    bindings: &BTreeMap<String, Literal>,
) -> Result<Machine, InstantiateError> {
    for key in bindings.keys() {
        match generic.constant(key) {
            Some(c) if c.value.is_none() => {}
            _ => return Err(InstantiateError::NotAConstant(key.clone())),
        }
    }
    let mut header_bindings = Vec::new();
    for c in generic.constants.iter().filter(|c| c.value.is_none()) {
        let lit = bindings
            .get(&c.name)
            .ok_or_else(|| InstantiateError::MissingBinding(c.name.clone()))?;
        check_literal(generic, lit, &c.ty).map_err(|message| InstantiateError::TypeMismatch {
            name: c.name.clone(),
            message,
        })?;
        header_bindings.push((c.name.clone(), lit.clone()));
    }

    let subst = |id: &str| bindings.get(id).map(Literal::to_expr);
    let sub = |e: &Expr| e.substitute(&subst);
    Ok(Machine {
        name: name.to_string(),
        header: Header::Instantiates {
            generic: generic.name.clone(),
            bindings: header_bindings,
        },
        sets: generic.sets.clone(),
        constants: generic
            .constants
            .iter()
            .filter(|c| c.value.is_some())
            .cloned()
            .collect(),
        variables: generic
            .variables
            .iter()
            .map(|v| VarDecl {
                name: v.name.clone(),
                ty: v.ty.clone(),
                init: sub(&v.init),
            })
            .collect(),
        invariants: generic.invariants.iter().map(sub).collect(),
        events: generic
            .events
            .iter()
            .map(|e| Event {
                name: e.name.clone(),
                params: e.params.clone(),
                guard: e.guard.iter().map(sub).collect(),
                actions: e.actions.iter().map(|(v, x)| (v.clone(), sub(x))).collect(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_machine, print_expr, well_formed};

    fn counter() -> Machine {
        parse_machine(
            "machine Counter const MAX : 0..10 var c : 0..10 init 0 \
             event inc when c < MAX then c := c + 1 end end",
        )
        .unwrap()
    }

    fn bind(name: &str, lit: Literal) -> BTreeMap<String, Literal> {
        BTreeMap::from([(name.to_string(), lit)])
    }

    #[test]
    fn substitutes_constant() {
        let m = instantiate(&counter(), "Counter3", &bind("MAX", Literal::Int(3))).unwrap();
        assert_eq!(m.name, "Counter3");
        assert!(m.constants.is_empty());
        assert_eq!(print_expr(&m.events[0].guard[0]), "(c < 3)");
        assert!(well_formed(&m).is_empty());
        assert!(!m.is_generic());
    }

    #[test]
    fn rejects_type_mismatch() {
        let err = instantiate(&counter(), "C", &bind("MAX", Literal::Bool(true))).unwrap_err();
        assert!(matches!(err, InstantiateError::TypeMismatch { .. }));
        let err = instantiate(&counter(), "C", &bind("MAX", Literal::Int(11))).unwrap_err();
        assert!(matches!(err, InstantiateError::TypeMismatch { .. }));
    }

    #[test]
    fn rejects_missing_and_extra_bindings() {
        let err = instantiate(&counter(), "C", &BTreeMap::new()).unwrap_err();
        assert_eq!(err, InstantiateError::MissingBinding("MAX".into()));
        let mut b = bind("MAX", Literal::Int(3));
        b.insert("c".into(), Literal::Int(0));
        let err = instantiate(&counter(), "C", &b).unwrap_err();
        assert_eq!(err, InstantiateError::NotAConstant("c".into()));
    }
}

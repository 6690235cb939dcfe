use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{parse_expr, print_expr, Expr, Header, Literal, Machine, Scope, Ty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Refines,
    Views,
    Instantiates,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Refines => "refines",
            EdgeKind::Views => "views",
            EdgeKind::Instantiates => "instantiates",
        })
    }
}

/// Image of a concrete event under an event map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventTarget {
    Abstract(String),
    New,
}

impl EventTarget {
    pub const NEW: &'static str = "NEW";

    fn parse(s: &str) -> Self {
        if s == Self::NEW {
            EventTarget::New
        } else {
            EventTarget::Abstract(s.to_string())
        }
    }
}

impl fmt::Display for EventTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventTarget::Abstract(e) => f.write_str(e),
            EventTarget::New => f.write_str(Self::NEW),
        }
    }
}

/// Edge as written by the user: maps are partial and glue is source text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub kind: Option<EdgeKind>,
    pub event_map: BTreeMap<String, String>,
    pub glue: BTreeMap<String, String>,
    pub bind: BTreeMap<String, Literal>,
}

/// Validated edge from a concrete machine to an abstract one, with total
/// event map and glue.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    /// One entry per concrete event, in declaration order.
    pub event_map: Vec<(String, EventTarget)>,
    /// One entry per abstract variable, in declaration order.
    pub glue: Vec<(String, Expr)>,
    pub bind: BTreeMap<String, Literal>,
}

impl RefinementEdge {
    pub fn id(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }

    pub fn target_of(&self, event: &str) -> Option<&EventTarget> {
        self.event_map
            .iter()
            .find(|(e, _)| e == event)
            .map(|(_, t)| t)
    }

    pub fn glue_of(&self, var: &str) -> Option<&Expr> {
        self.glue.iter().find(|(v, _)| v == var).map(|(_, e)| e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("edge {edge}: unknown model {model}")]
    UnknownModel { edge: String, model: String },
    #[error("duplicate edge {edge}")]
    DuplicateEdge { edge: String },
    #[error("refinement cycle through {}", .models.join(", "))]
    Cycle { models: Vec<String> },
    #[error("edge {edge}: {event} is not an event of {model}")]
    UnknownEvent {
        edge: String,
        model: String,
        event: String,
    },
    #[error("edge {edge}: {var} is not a variable of {model}")]
    UnknownVariable {
        edge: String,
        model: String,
        var: String,
    },
    #[error("edge {edge}: unglued variable {var}")]
    UngluedVariable { edge: String, var: String },
    #[error("edge {edge}: glue for {var}: {message}")]
    Glue {
        edge: String,
        var: String,
        message: String,
    },
    #[error("model {model}: {message}")]
    HeaderMismatch { model: String, message: String },
    #[error("edge {edge}: {message}")]
    Instantiation { edge: String, message: String },
}

/// Acyclic multi-parent graph of machines.
#[derive(Debug, Clone, Default)]
pub struct Lattice {
    pub models: BTreeMap<String, Machine>,
    pub edges: Vec<RefinementEdge>,
}

impl Lattice {
    pub fn model(&self, name: &str) -> Option<&Machine> {
        self.models.get(name)
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<&RefinementEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn outgoing<'a>(&'a self, from: &'a str) -> impl Iterator<Item = &'a RefinementEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == from)
    }

    pub fn incoming<'a>(&'a self, to: &'a str) -> impl Iterator<Item = &'a RefinementEdge> + 'a {
        self.edges.iter().filter(move |e| e.to == to)
    }

    /// Models ordered so that every edge target precedes its source
    /// (abstract first); ties broken by name.
    pub fn topological_order(&self) -> Vec<String> {
        topo(
            &self.models.keys().cloned().collect::<Vec<_>>(),
            &self.edges,
        )
        .unwrap_or_default()
    }
}

fn topo(models: &[String], edges: &[RefinementEdge]) -> Result<Vec<String>, Vec<String>> {
    let mut pending: BTreeMap<&str, usize> = models.iter().map(|m| (m.as_str(), 0)).collect();
    for e in edges {
        *pending.get_mut(e.from.as_str()).unwrap() += 1;
    }
    let mut ready: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(m, _)| *m)
        .collect();
    let mut out = Vec::new();
    while let Some(m) = ready.pop_first() {
        out.push(m.to_string());
        for e in edges.iter().filter(|e| e.to == m) {
            let n = pending.get_mut(e.from.as_str()).unwrap();
            *n -= 1;
            if *n == 0 {
                ready.insert(e.from.as_str());
            }
        }
    }
    if out.len() == models.len() {
        Ok(out)
    } else {
        let done: BTreeSet<&String> = out.iter().collect();
        Err(models
            .iter()
            .filter(|m| !done.contains(m))
            .cloned()
            .collect())
    }
}

/// Validates edges against the machines and fills in default maps:
/// shared event names map to themselves (others to `NEW`), shared variable
/// names glue to themselves.
pub fn build_lattice(models: Vec<Machine>, specs: Vec<EdgeSpec>) -> Result<Lattice, LatticeError> {
    let models: BTreeMap<String, Machine> =
        models.into_iter().map(|m| (m.name.clone(), m)).collect();
    let mut edges: Vec<RefinementEdge> = Vec::new();
    let mut seen = BTreeSet::new();
    for spec in specs {
        let id = format!("{}->{}", spec.from, spec.to);
        let get = |name: &str| {
            models.get(name).ok_or_else(|| LatticeError::UnknownModel {
                edge: id.clone(),
                model: name.to_string(),
            })
        };
        let (conc, abs) = (get(&spec.from)?, get(&spec.to)?);
        if !seen.insert((spec.from.clone(), spec.to.clone())) {
            return Err(LatticeError::DuplicateEdge { edge: id });
        }
        let kind = spec.kind.unwrap_or(EdgeKind::Refines);
        edges.push(resolve_edge(&id, kind, conc, abs, spec)?);
    }
    let names: Vec<String> = models.keys().cloned().collect();
    if let Err(models) = topo(&names, &edges) {
        return Err(LatticeError::Cycle { models });
    }
    for m in models.values() {
        let (parent, kind) = match &m.header {
            Header::None => continue,
            Header::Refines(p) => (p, EdgeKind::Refines),
            Header::Views(p) => (p, EdgeKind::Views),
            Header::Instantiates { generic, .. } => (generic, EdgeKind::Instantiates),
        };
        match edges.iter().find(|e| e.from == m.name && &e.to == parent) {
            Some(e) if e.kind == kind => {}
            Some(e) => {
                return Err(LatticeError::HeaderMismatch {
                    model: m.name.clone(),
                    message: format!("header says {kind} {parent}, project edge is {}", e.kind),
                })
            }
            None => {
                return Err(LatticeError::HeaderMismatch {
                    model: m.name.clone(),
                    message: format!("header says {kind} {parent}, project has no such edge"),
                })
            }
        }
    }
    Ok(Lattice { models, edges })
}

fn resolve_edge(
    id: &str,
    kind: EdgeKind,
    conc: &Machine,
    abs: &Machine,
    spec: EdgeSpec,
) -> Result<RefinementEdge, LatticeError> {
    if kind == EdgeKind::Instantiates {
        if !spec.event_map.is_empty() || !spec.glue.is_empty() {
            return Err(LatticeError::Instantiation {
                edge: id.to_string(),
                message: "instantiation edges take identity event map and glue".into(),
            });
        }
        for name in spec.bind.keys() {
            if abs.constant(name).is_none() {
                return Err(LatticeError::Instantiation {
                    edge: id.to_string(),
                    message: format!("{name} is not a constant of {}", abs.name),
                });
            }
        }
    } else if !spec.bind.is_empty() {
        return Err(LatticeError::Instantiation {
            edge: id.to_string(),
            message: format!("bindings are only allowed on instantiation edges, not {kind}"),
        });
    }

    for (c, a) in &spec.event_map {
        if conc.event(c).is_none() {
            return Err(LatticeError::UnknownEvent {
                edge: id.into(),
                model: conc.name.clone(),
                event: c.clone(),
            });
        }
        if a != EventTarget::NEW && abs.event(a).is_none() {
            return Err(LatticeError::UnknownEvent {
                edge: id.into(),
                model: abs.name.clone(),
                event: a.clone(),
            });
        }
    }
    let event_map = conc
        .events
        .iter()
        .map(|ev| {
            let target = match spec.event_map.get(&ev.name) {
                Some(t) => EventTarget::parse(t),
                None if abs.event(&ev.name).is_some() => EventTarget::Abstract(ev.name.clone()),
                None => EventTarget::New,
            };
            (ev.name.clone(), target)
        })
        .collect();

    for v in spec.glue.keys() {
        if abs.variable(v).is_none() {
            return Err(LatticeError::UnknownVariable {
                edge: id.into(),
                model: abs.name.clone(),
                var: v.clone(),
            });
        }
    }
    let scope = Scope::new(conc, &[]);
    let mut glue = Vec::new();
    for var in &abs.variables {
        let expr = match spec.glue.get(&var.name) {
            Some(text) => parse_expr(text).map_err(|e| LatticeError::Glue {
                edge: id.into(),
                var: var.name.clone(),
                message: e.to_string(),
            })?,
            None if conc.variable(&var.name).is_some() => Expr::Ident(var.name.clone()),
            None => {
                return Err(LatticeError::UngluedVariable {
                    edge: id.into(),
                    var: var.name.clone(),
                })
            }
        };
        let ty = scope.type_of(&expr).map_err(|message| LatticeError::Glue {
            edge: id.into(),
            var: var.name.clone(),
            message,
        })?;
        if !ty.fits(&var.ty) {
            return Err(LatticeError::Glue {
                edge: id.into(),
                var: var.name.clone(),
                message: format!(
                    "{} has type {ty}, expected {}",
                    print_expr(&expr),
                    Ty::of_decl(&var.ty)
                ),
            });
        }
        glue.push((var.name.clone(), expr));
    }
    Ok(RefinementEdge {
        from: spec.from,
        to: spec.to,
        kind,
        event_map,
        glue,
        bind: spec.bind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_machine;

    fn m(src: &str) -> Machine {
        parse_machine(src).unwrap()
    }

    fn edge(from: &str, to: &str) -> EdgeSpec {
        EdgeSpec {
            from: from.into(),
            to: to.into(),
            ..Default::default()
        }
    }

    fn chain() -> Vec<Machine> {
        vec![
            m("machine M0 var on : BOOL init false event go then on := true end end"),
            m("machine M1 refines M0 var on : BOOL init false var n : 0..3 init 0 event go then on := true end end"),
            m("machine M2 refines M1 var on : BOOL init false var n : 0..3 init 0 var k : BOOL init true \
               event go then on := true end event tick then k := not k end end"),
            m("machine A1 var k : BOOL init true event tick then k := not k end end"),
        ]
    }

    #[test]
    fn nonlinear_chain_with_view() {
        let mut view = edge("M2", "A1");
        view.kind = Some(EdgeKind::Views);
        let l = build_lattice(chain(), vec![edge("M1", "M0"), edge("M2", "M1"), view]).unwrap();
        assert_eq!((l.models.len(), l.edges.len()), (4, 3));
        assert_eq!(l.topological_order(), ["A1", "M0", "M1", "M2"]);
        let e = l.edge("M2", "M1").unwrap();
        assert_eq!(e.target_of("tick"), Some(&EventTarget::New));
        assert_eq!(e.target_of("go"), Some(&EventTarget::Abstract("go".into())));
        assert_eq!(
            e.glue.iter().map(|(v, _)| v.as_str()).collect::<Vec<_>>(),
            ["on", "n"]
        );
        assert_eq!(l.outgoing("M2").count(), 2);
    }

    #[test]
    fn cycles_are_rejected() {
        let ms = vec![
            m("machine M0 var on : BOOL init false end"),
            m("machine M1 var on : BOOL init false end"),
        ];
        let err = build_lattice(ms, vec![edge("M0", "M1"), edge("M1", "M0")]).unwrap_err();
        assert_eq!(
            err,
            LatticeError::Cycle {
                models: vec!["M0".into(), "M1".into()]
            }
        );
    }

    #[test]
    fn missing_glue_is_rejected() {
        let ms = vec![
            m("machine Abs set MODE = {idle, busy} var mode : MODE init idle end"),
            m("machine Conc var busy_flag : BOOL init false end"),
        ];
        let err = build_lattice(ms.clone(), vec![edge("Conc", "Abs")]).unwrap_err();
        assert_eq!(
            err,
            LatticeError::UngluedVariable {
                edge: "Conc->Abs".into(),
                var: "mode".into()
            }
        );

        let mut e = edge("Conc", "Abs");
        e.glue.insert("mode".into(), "busy_flag".into());
        assert!(matches!(
            build_lattice(ms, vec![e]).unwrap_err(),
            LatticeError::Glue { .. }
        ));
    }

    #[test]
    fn glue_must_type_check() {
        let ms = vec![
            m("machine Abs var on : BOOL init false end"),
            m("machine Conc var level : 0..5 init 0 end"),
        ];
        let mut e = edge("Conc", "Abs");
        e.glue.insert("on".into(), "level > 0".into());
        assert!(build_lattice(ms.clone(), vec![e.clone()]).is_ok());
        e.glue.insert("on".into(), "level + 1".into());
        assert!(matches!(
            build_lattice(ms.clone(), vec![e.clone()]).unwrap_err(),
            LatticeError::Glue { .. }
        ));
        e.glue.insert("on".into(), "level >".into());
        assert!(matches!(
            build_lattice(ms, vec![e]).unwrap_err(),
            LatticeError::Glue { .. }
        ));
    }

    #[test]
    fn event_map_targets_must_exist() {
        let ms = vec![
            m("machine Abs var on : BOOL init false event a then on := true end end"),
            m("machine Conc var on : BOOL init false event c then on := true end end"),
        ];
        let mut e = edge("Conc", "Abs");
        e.event_map.insert("c".into(), "b".into());
        assert!(matches!(
            build_lattice(ms.clone(), vec![e.clone()]).unwrap_err(),
            LatticeError::UnknownEvent { .. }
        ));
        e.event_map.insert("c".into(), "a".into());
        let l = build_lattice(ms.clone(), vec![e.clone()]).unwrap();
        assert_eq!(
            l.edges[0].event_map,
            [("c".to_string(), EventTarget::Abstract("a".into()))]
        );
        e.event_map.clear();
        e.event_map.insert("x".into(), "NEW".into());
        assert!(matches!(
            build_lattice(ms, vec![e]).unwrap_err(),
            LatticeError::UnknownEvent { .. }
        ));
    }

    #[test]
    fn header_must_match_an_edge() {
        let ms = vec![
            m("machine Abs var on : BOOL init false end"),
            m("machine Conc refines Abs var on : BOOL init false end"),
        ];
        assert!(matches!(
            build_lattice(ms.clone(), vec![]).unwrap_err(),
            LatticeError::HeaderMismatch { .. }
        ));
        let mut e = edge("Conc", "Abs");
        e.kind = Some(EdgeKind::Views);
        assert!(matches!(
            build_lattice(ms.clone(), vec![e]).unwrap_err(),
            LatticeError::HeaderMismatch { .. }
        ));
        assert!(build_lattice(ms, vec![edge("Conc", "Abs")]).is_ok());
    }

    #[test]
    fn unknown_endpoints_and_duplicates() {
        let ms = vec![
            m("machine A var on : BOOL init false end"),
            m("machine B var on : BOOL init false end"),
        ];
        assert!(matches!(
            build_lattice(ms.clone(), vec![edge("A", "Z")]).unwrap_err(),
            LatticeError::UnknownModel { .. }
        ));
        assert!(matches!(
            build_lattice(ms, vec![edge("A", "B"), edge("A", "B")]).unwrap_err(),
            LatticeError::DuplicateEdge { .. }
        ));
    }
}

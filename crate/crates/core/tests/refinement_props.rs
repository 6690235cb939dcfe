mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use vobs_core::engine::{explore, Limits, Model};
use vobs_core::lang::parse_machine;
use vobs_core::refinement::{
    build_lattice, check_simulation, glue_state, replay_trace, translate_trace, EdgeKind, EdgeSpec,
    LatticeError, RefinementEdge, Trace,
};
use vobs_core::vo::{KindRegistry, Project};

fn projects() -> &'static [Project] {
    static P: OnceLock<Vec<Project>> = OnceLock::new();
    P.get_or_init(|| {
        ["basic", "lighting"]
            .iter()
            .map(|p| {
                Project::load(
                    &common::corpus(p),
                    &KindRegistry::standard(),
                    Limits::default(),
                )
                .unwrap()
            })
            .collect()
    })
}

/// Checkable corpus edges whose simulation passes.
fn passing_edges() -> Vec<(&'static Project, &'static RefinementEdge)> {
    let mut out = Vec::new();
    for p in projects() {
        for e in p
            .lattice
            .edges
            .iter()
            .filter(|e| e.kind != EdgeKind::Instantiates)
        {
            let conc = Model::new(p.machine(&e.from).unwrap()).unwrap();
            let abs = Model::new(p.machine(&e.to).unwrap()).unwrap();
            if check_simulation(e, &conc, &abs, Limits::default())
                .unwrap()
                .is_pass()
            {
                out.push((p, e));
            }
        }
    }
    out
}

#[test]
fn glue_is_total_and_functional_on_reachable_states() {
    let edges = passing_edges();
    assert_eq!(edges.len(), 4);
    for (p, e) in edges {
        let conc = Model::new(p.machine(&e.from).unwrap()).unwrap();
        let abs = Model::new(p.machine(&e.to).unwrap()).unwrap();
        let cs = explore(&conc, Limits::default()).unwrap();
        let abs_space = explore(&abs, Limits::default()).unwrap();
        for s in &cs.states {
            let g = glue_state(e, &conc, &abs, s).unwrap_or_else(|err| panic!("{}: {err}", e.id()));
            assert_eq!(g, glue_state(e, &conc, &abs, s).unwrap());
            // simulation puts every glued reachable state in the abstract reachable set
            assert!(
                abs_space.states.contains(&g),
                "{}: {} glues outside",
                e.id(),
                conc.show_state(s)
            );
        }
    }
}

/// A walk of at most `choices.len()` steps, each choosing among the
/// enabled labels; stops at deadlocks.
fn random_walk(model: &Model, choices: &[prop::sample::Index]) -> Trace {
    let mut state = model.initial_state().unwrap();
    let mut labels = Vec::new();
    for c in choices {
        let enabled = model.enabled(&state).unwrap();
        if enabled.is_empty() {
            break;
        }
        let l = enabled[c.index(enabled.len())].clone();
        state = model.step(&state, &l).unwrap();
        labels.push(l);
    }
    Trace::new(model.name(), labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn translated_walks_replay_on_the_abstraction(
        which in any::<prop::sample::Index>(),
        choices in prop::collection::vec(any::<prop::sample::Index>(), 0..16),
    ) {
        let edges = passing_edges();
        let (p, e) = edges[which.index(edges.len())];
        let (cm, am) = (p.machine(&e.from).unwrap(), p.machine(&e.to).unwrap());
        let conc = Model::new(cm).unwrap();
        let trace = random_walk(&conc, &choices);
        prop_assert!(replay_trace(&conc, &trace).is_pass());
        let abs_trace = translate_trace(e, cm, am, &trace);
        let out = replay_trace(&Model::new(am).unwrap(), &abs_trace);
        prop_assert!(out.is_pass(), "{} along {}: {:?}", trace, e.id(), out);
    }

    #[test]
    fn lattice_order_respects_every_edge(n in 2usize..7, pairs in prop::collection::vec((0usize..7, 0usize..7), 0..12)) {
        let models: Vec<_> = (0..n)
            .map(|i| parse_machine(&format!("machine M{i} var v : BOOL init false event flip then v := not v end end")).unwrap())
            .collect();
        let mut specs: Vec<EdgeSpec> = Vec::new();
        for (a, b) in pairs {
            let (a, b) = (a % n, b % n);
            // higher index refines lower: acyclic by construction
            let (from, to) = if a > b { (a, b) } else if b > a { (b, a) } else { continue };
            let (from, to) = (format!("M{from}"), format!("M{to}"));
            if !specs.iter().any(|s| s.from == from && s.to == to) {
                specs.push(EdgeSpec { from, to, kind: Some(EdgeKind::Views), ..EdgeSpec::default() });
            }
        }
        let lattice = build_lattice(models.clone(), specs.clone()).unwrap();
        let order = lattice.topological_order();
        prop_assert_eq!(order.len(), n);
        let pos = |m: &str| order.iter().position(|x| x == m).unwrap();
        for e in &lattice.edges {
            prop_assert!(pos(&e.to) < pos(&e.from), "{} before {}", e.from, e.to);
        }
        if let Some(first) = specs.first() {
            let mut cyclic = specs.clone();
            cyclic.push(EdgeSpec { from: first.to.clone(), to: first.from.clone(), kind: Some(EdgeKind::Views), ..EdgeSpec::default() });
            let cycle_err = matches!(build_lattice(models, cyclic), Err(LatticeError::Cycle { .. }));
            prop_assert!(cycle_err);
        }
    }
}

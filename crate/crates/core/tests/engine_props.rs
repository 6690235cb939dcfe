mod common;

use std::collections::HashSet;
use std::fs;

use proptest::prelude::*;
use vobs_core::engine::{eval_bool, explore, Limits, Model, State, StateSpace};
use vobs_core::lang::{parse_machine, well_formed};
use vobs_core::vo::{KindRegistry, Project};

fn corpus_models() -> Vec<Model> {
    let mut out = Vec::new();
    for project in ["basic", "lighting"] {
        let p = Project::load(
            &common::corpus(project),
            &KindRegistry::standard(),
            Limits::default(),
        )
        .unwrap();
        out.extend(
            p.lattice
                .models
                .values()
                .filter(|m| !m.is_generic())
                .map(|m| Model::new(m).unwrap()),
        );
    }
    out
}

/// A machine over `vars` bounded counters and one flag, with one guarded
/// event per spec `(var, kind, bound)`.
fn machine_text(bounds: &[i64], events: &[(usize, u8, i64)], inv: i64) -> String {
    let mut s = String::from("machine R\n  var flag : BOOL init false\n");
    for (i, b) in bounds.iter().enumerate() {
        s.push_str(&format!("  var x{i} : 0..{b} init 0\n"));
    }
    s.push_str(&format!("  invariant x0 <= {inv}\n"));
    for (k, &(v, kind, c)) in events.iter().enumerate() {
        let v = v % bounds.len();
        let b = bounds[v];
        let c = c.rem_euclid(b + 1);
        let body = match kind % 5 {
            0 => format!("when x{v} < {b} then x{v} := x{v} + 1"),
            1 => format!("when x{v} > 0 then x{v} := x{v} - 1"),
            2 => format!("when x{v} = {c} & flag = false then flag := true; x{v} := 0"),
            3 => "when flag = true then flag := false".to_string(),
            _ => format!("(p : 0..{b}) when p >= {c} & x{v} /= p then x{v} := p"),
        };
        s.push_str(&format!("  event e{k} {body} end\n"));
    }
    s.push_str("end\n");
    s
}

fn random_machine() -> impl Strategy<Value = Model> {
    (
        prop::collection::vec(1i64..4, 1..3),
        prop::collection::vec((0usize..3, any::<u8>(), 0i64..4), 1..5),
        0i64..4,
    )
        .prop_map(|(bounds, events, inv)| {
            let text = machine_text(&bounds, &events, inv);
            let m = parse_machine(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            assert!(well_formed(&m).is_empty(), "{:?}\n{text}", well_formed(&m));
            Model::new(&m).unwrap()
        })
}

fn domain_product(model: &Model) -> u128 {
    model
        .machine()
        .variables
        .iter()
        .map(|v| model.domain(&v.ty).len() as u128)
        .product()
}

fn same_space(a: &StateSpace, b: &StateSpace) -> bool {
    a.states == b.states
        && a.transitions == b.transitions
        && a.deadlocks == b.deadlocks
        && a.invariant_violations == b.invariant_violations
        && a.truncated == b.truncated
}

/// Re-derives every per-state fact of `space` from scratch.
fn recheck(model: &Model, space: &StateSpace) -> Result<(), String> {
    let index: HashSet<&State> = space.states.iter().collect();
    for (i, s) in space.states.iter().enumerate() {
        let enabled = model.enabled_raw(s).map_err(|e| e.to_string())?;
        for (ev, binding) in model
            .events()
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.bindings().into_iter().map(move |b| (i, b)))
        {
            let listed = enabled.contains(&(ev, binding.clone()));
            let holds = model.guard_holds(ev, s, &binding).unwrap_or(false);
            if listed != holds {
                return Err(format!(
                    "state {i}: event {ev} {binding:?} listed={listed} guard={holds}"
                ));
            }
        }
        if space.truncated.is_none() {
            for (ev, binding) in &enabled {
                let next = model.apply(*ev, s, binding).map_err(|e| e.to_string())?;
                if !index.contains(&next) {
                    return Err(format!("successor of state {i} missing"));
                }
            }
            let dead = space.deadlocks.contains(&i);
            if dead != enabled.is_empty() {
                return Err(format!(
                    "state {i}: deadlock flag {dead}, enabled {}",
                    enabled.len()
                ));
            }
        }
        for (k, inv) in model.invariants().iter().enumerate() {
            let ok = eval_bool(inv, &s.0, &[]).map_err(|e| e.to_string())?;
            let flagged = space
                .invariant_violations
                .iter()
                .any(|v| v.state == i && v.invariant == k);
            if ok == flagged {
                return Err(format!(
                    "state {i}: invariant {k} holds={ok} flagged={flagged}"
                ));
            }
        }
    }
    Ok(())
}

#[test]
fn corpus_spaces_are_bounded_and_consistent() {
    for m in corpus_models() {
        let s = explore(&m, Limits::default()).unwrap();
        assert!(s.is_complete(), "{}", m.name());
        assert!((s.len() as u128) <= domain_product(&m), "{}", m.name());
        assert!(
            same_space(&s, &explore(&m, Limits::default()).unwrap()),
            "{}",
            m.name()
        );
        recheck(&m, &s).unwrap_or_else(|e| panic!("{}: {e}", m.name()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exploration_is_deterministic_sound_and_closed(m in random_machine()) {
        let s = explore(&m, Limits::default()).unwrap();
        prop_assume!(s.failure.is_none());
        prop_assert!((s.len() as u128) <= domain_product(&m));
        prop_assert!(same_space(&s, &explore(&m, Limits::default()).unwrap()));
        prop_assert_eq!(recheck(&m, &s), Ok(()));
    }

    #[test]
    fn truncation_respects_limits(m in random_machine(), cap in 1usize..6) {
        let s = explore(&m, Limits { max_states: cap, max_transitions: 10_000 }).unwrap();
        prop_assert!(s.len() <= cap);
        let full = explore(&m, Limits::default()).unwrap();
        if full.len() > cap {
            prop_assert!(s.truncated.is_some());
        }
        // the truncated space is a prefix of the full discovery order
        let n = s.len().min(full.len());
        prop_assert_eq!(&s.states.as_slice()[..n], &full.states.as_slice()[..n]);
    }

    /// Whatever the parser accepts, `well_formed` and model construction
    /// return instead of aborting.
    #[test]
    fn well_formed_is_total(file in 0usize..9, cut in any::<prop::sample::Index>(), len in 0usize..12, junk in "[ a-z0-9:=<>+\\-{}();&,.]{0,6}") {
        let mut files: Vec<_> = ["basic", "lighting"]
            .iter()
            .flat_map(|p| fs::read_dir(common::corpus(p).join("models")).unwrap().map(|e| e.unwrap().path()))
            .collect();
        files.sort();
        let src = fs::read_to_string(&files[file % files.len()]).unwrap();
        let at = cut.index(src.len());
        let end = (at + len).min(src.len());
        if !src.is_char_boundary(at) || !src.is_char_boundary(end) {
            return Ok(());
        }
        let mutated = format!("{}{junk}{}", &src[..at], &src[end..]);
        if let Ok(m) = parse_machine(&mutated) {
            let errs = well_formed(&m);
            if errs.is_empty() && m.unbound_constants().is_empty() {
                if let Ok(model) = Model::new(&m) {
                    let _ = explore(&model, Limits { max_states: 200, max_transitions: 2_000 });
                }
            }
        }
    }
}

use std::fmt::Write;

use vobs_core::engine::{Model, StateSpace};
use vobs_core::vo::VoRecord;

fn indent(out: &mut String, text: &str) {
    for line in text.lines() {
        let _ = writeln!(out, "    {line}");
    }
}

/// `id: status [via ...]`, then the summary and any evidence text indented.
pub fn record(r: &VoRecord) -> String {
    let mut out = format!("{}: {}", r.id, r.status);
    if let Some(via) = &r.via {
        let _ = write!(out, " via {via}");
    }
    out.push('\n');
    if let Some(reason) = &r.stale_reason {
        indent(&mut out, reason);
    }
    if let Some(ev) = &r.evidence {
        indent(&mut out, &ev.summary);
        if let Some(text) = &ev.text {
            indent(&mut out, text);
        }
    }
    out
}

pub fn space(model: &Model, s: &StateSpace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "machine {}", model.name());
    let _ = writeln!(out, "states {}", s.len());
    let _ = writeln!(out, "transitions {}", s.transitions.len());
    let _ = writeln!(out, "deadlocks {}", s.deadlocks.len());
    for &d in &s.deadlocks {
        let _ = writeln!(out, "  {d} {}", model.show_state(s.state(d)));
    }
    for v in &s.invariant_violations {
        let _ = writeln!(
            out,
            "invariant {} violated in {} {}",
            v.predicate,
            v.state,
            model.show_state(s.state(v.state))
        );
    }
    if let Some(limit) = s.truncated {
        let _ = writeln!(out, "truncated at {limit}");
    }
    if let Some(f) = &s.failure {
        let _ = writeln!(out, "evaluation failed in state {}: {}", f.state, f.error);
    }
    out
}

use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ast::*;

/// SHA-256 over the canonical printing of a machine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelHash(pub String);

impl ModelHash {
    pub fn of_text(text: &str) -> Self {
        ModelHash(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(12)]
    }
}

impl fmt::Display for ModelHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_hash(m: &Machine) -> ModelHash {
    ModelHash::of_text(&canonical_print(m))
}

/// Fully parenthesized rendering; atoms are printed bare.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Bool(b) => write!(out, "{b}").unwrap(),
        Expr::Int(n) if *n < 0 => write!(out, "(-{})", n.unsigned_abs()).unwrap(),
        Expr::Int(n) => write!(out, "{n}").unwrap(),
        Expr::Ident(n) => out.push_str(n),
        Expr::SetLit(items) => {
            out.push('{');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, item);
            }
            out.push('}');
        }
        Expr::Card(inner) => {
            out.push_str("card(");
            write_expr(out, inner);
            out.push(')');
        }
        Expr::Unary(UnOp::Not, inner) => {
            out.push_str("(not ");
            write_expr(out, inner);
            out.push(')');
        }
        Expr::Unary(UnOp::Neg, inner) => {
            out.push_str("(-");
            write_expr(out, inner);
            out.push(')');
        }
        Expr::Binary(op, l, r) => {
            out.push('(');
            write_expr(out, l);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, r);
            out.push(')');
        }
    }
}

/// Deterministic source form: one declaration per line, declarations in
/// source order, single spaces, fully parenthesized expressions. Reparsing
/// the output yields a structurally equal machine.
pub fn canonical_print(m: &Machine) -> String {
    let mut out = String::new();
    write!(out, "machine {}", m.name).unwrap();
    match &m.header {
        Header::None => {}
        Header::Refines(x) => write!(out, " refines {x}").unwrap(),
        Header::Views(x) => write!(out, " views {x}").unwrap(),
        Header::Instantiates { generic, bindings } => {
            write!(out, " instantiates {generic} with ").unwrap();
            let parts: Vec<String> = bindings.iter().map(|(c, l)| format!("{c} = {l}")).collect();
            out.push_str(&parts.join(", "));
        }
    }
    out.push('\n');
    for s in &m.sets {
        writeln!(out, "set {} = {{{}}}", s.name, s.members.join(", ")).unwrap();
    }
    for c in &m.constants {
        write!(out, "const {} : {}", c.name, c.ty).unwrap();
        if let Some(v) = &c.value {
            write!(out, " = {v}").unwrap();
        }
        out.push('\n');
    }
    for v in &m.variables {
        writeln!(
            out,
            "var {} : {} init {}",
            v.name,
            v.ty,
            print_expr(&v.init)
        )
        .unwrap();
    }
    if !m.invariants.is_empty() {
        let invs: Vec<String> = m.invariants.iter().map(print_expr).collect();
        writeln!(out, "invariant {}", invs.join("; ")).unwrap();
    }
    for e in &m.events {
        write!(out, "event {}", e.name).unwrap();
        if !e.params.is_empty() {
            let ps: Vec<String> = e
                .params
                .iter()
                .map(|p| format!("{} : {}", p.name, p.ty))
                .collect();
            write!(out, "({})", ps.join(", ")).unwrap();
        }
        if !e.guard.is_empty() {
            let gs: Vec<String> = e.guard.iter().map(print_expr).collect();
            write!(out, " when {}", gs.join(" & ")).unwrap();
        }
        let acts: Vec<String> = e
            .actions
            .iter()
            .map(|(v, x)| format!("{v} := {}", print_expr(x)))
            .collect();
        writeln!(out, " then {} end", acts.join("; ")).unwrap();
    }
    out.push_str("end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_machine;

    const SWITCH: &str = "machine Switch var on : BOOL init false \
        event turn_on when on = false then on := true end \
        event turn_off when on = true then on := false end end";

    #[test]
    fn canonical_form_of_switch() {
        let m = parse_machine(SWITCH).unwrap();
        assert_eq!(
            canonical_print(&m),
            "machine Switch\nvar on : BOOL init false\n\
             event turn_on when (on = false) then on := true end\n\
             event turn_off when (on = true) then on := false end\nend\n"
        );
    }

    #[test]
    fn hash_ignores_comments_and_layout() {
        let a = parse_machine(SWITCH).unwrap();
        let b = parse_machine(
            "# a switch\nmachine   Switch\n  var on : BOOL init (false)  # off\n\
             event turn_on\n  when on = false\n  then on := true\nend\n\
             event turn_off when (on = true) then on := false end\nend\n",
        )
        .unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&b));
        assert_eq!(canonical_hash(&a), canonical_hash(&a.clone()));
    }

    #[test]
    fn hash_detects_init_change() {
        let a = parse_machine(SWITCH).unwrap();
        let b = parse_machine(&SWITCH.replace("init false", "init true")).unwrap();
        assert_ne!(canonical_hash(&a), canonical_hash(&b));
    }

    #[test]
    fn negation_round_trips() {
        let m = parse_machine(
            "machine N var x : -3..3 init -2 event e when x > -(1) then x := -x end end",
        )
        .unwrap();
        let again = parse_machine(&canonical_print(&m)).unwrap();
        assert_eq!(m, again);
    }
}

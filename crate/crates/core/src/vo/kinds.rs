//! Obligation kinds. Each kind validates its payload at load time and
//! discharges obligations against a loaded project; the registry maps the
//! `kind` field of a `[[vo]]` table to its implementation.

use std::collections::BTreeMap;
use std::fs;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::ledger::Evidence;
use super::project::{edge_key, Project, VoSpec};
use crate::engine::{coverage, explore, Limits, Model, ModelError, StateSpace};
use crate::lang::Machine;
use crate::ltl::{check_atoms, check_ltl_on, parse_ltl, LtlFormula, LtlVerdict};
use crate::refinement::{
    canonical_labels, check_simulation, parse_trace, replay_trace, translate_formula,
    translate_trace, validate_trace, EdgeKind, RefinementEdge, ReplayOutcome, SimulationVerdict,
    Trace,
};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum CheckError {
    #[error("unknown obligation {0}")]
    UnknownVo(String),
    #[error("model {model} has unbound constants: {}", .constants.join(", "))]
    Unbound {
        model: String,
        constants: Vec<String>,
    },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{0}")]
    Engine(String),
    #[error("{0} is a manual obligation")]
    Manual(String),
}

impl CheckError {
    fn engine(e: impl ToString) -> Self {
        CheckError::Engine(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Discharged,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub evidence: Evidence,
}

impl Outcome {
    fn pass(evidence: Evidence) -> Self {
        Outcome {
            verdict: Verdict::Discharged,
            evidence,
        }
    }

    fn fail(evidence: Evidence) -> Self {
        Outcome {
            verdict: Verdict::Failed,
            evidence,
        }
    }

    fn inconclusive(limit: impl std::fmt::Display) -> Self {
        Outcome::fail(Evidence::summary(format!(
            "inconclusive: truncated ({limit})"
        )))
    }
}

pub struct ValidateCtx<'a> {
    pub project: &'a Project,
}

pub struct CheckCtx<'a> {
    pub project: &'a Project,
    pub limits: Limits,
}

impl CheckCtx<'_> {
    pub fn model(&self, name: &str) -> Result<Model, CheckError> {
        let m = self
            .project
            .machine(name)
            .ok_or_else(|| CheckError::Engine(format!("unknown model {name}")))?;
        Model::new(m).map_err(|e| match e {
            ModelError::UnboundConstants { machine, constants } => CheckError::Unbound {
                model: machine,
                constants,
            },
            e => CheckError::engine(e),
        })
    }

    fn explore(&self, model: &Model) -> Result<StateSpace, CheckError> {
        let space = explore(model, self.limits).map_err(CheckError::engine)?;
        if let Some(f) = &space.failure {
            return Err(CheckError::Engine(format!(
                "evaluation failed in state {}: {}",
                f.state, f.error
            )));
        }
        Ok(space)
    }

    fn trace(&self, rel: &str) -> Result<Trace, CheckError> {
        read_trace(self.project, rel)
    }
}

fn read_trace(project: &Project, rel: &str) -> Result<Trace, CheckError> {
    let path = project.resolve(rel);
    let file = |message: String| CheckError::File {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(&path).map_err(|e| file(e.to_string()))?;
    parse_trace(&text).map_err(|e| file(e.to_string()))
}

pub trait VoKind: Send + Sync {
    fn name(&self) -> &'static str;

    /// Checks the payload fields; the message names the problem.
    fn validate(&self, vo: &VoSpec, ctx: &ValidateCtx) -> Result<(), String>;

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError>;

    /// Manual kinds are never discharged by a check.
    fn automatic(&self) -> bool {
        true
    }

    /// Models and edges the verdict depends on, as dependency keys.
    fn dependencies(&self, vo: &VoSpec, project: &Project) -> Vec<String> {
        project.model_closure(&vo.target)
    }
}

#[derive(Clone)]
pub struct KindRegistry {
    kinds: BTreeMap<&'static str, Arc<dyn VoKind>>,
}

impl KindRegistry {
    pub fn empty() -> Self {
        KindRegistry {
            kinds: BTreeMap::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(LtlKind));
        r.register(Arc::new(InvariantKind));
        r.register(Arc::new(DeadlockKind));
        r.register(Arc::new(TraceKind));
        r.register(Arc::new(CoverageKind));
        r.register(Arc::new(SimulationKind));
        r.register(Arc::new(AbstractWitnessKind));
        r.register(Arc::new(ManualKind));
        r
    }

    pub fn register(&mut self, kind: Arc<dyn VoKind>) {
        self.kinds.insert(kind.name(), kind);
    }

    pub fn get(&self, name: &str) -> Option<&dyn VoKind> {
        self.kinds.get(name).map(|k| k.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.kinds.keys().copied()
    }
}

impl Default for KindRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

fn require<'a>(field: &'a Option<String>, name: &str) -> Result<&'a str, String> {
    field
        .as_deref()
        .ok_or_else(|| format!("missing field '{name}'"))
}

/// Resolves the `edge` field and requires it to leave the target.
fn vo_edge<'a>(vo: &VoSpec, project: &'a Project) -> Result<&'a RefinementEdge, String> {
    let raw = require(&vo.edge, "edge")?;
    let (from, to) = vo
        .edge_ref()
        .ok_or_else(|| format!("edge '{raw}' is not of the form 'From -> To'"))?;
    let edge = project
        .edge(&from, &to)
        .ok_or_else(|| format!("no edge {from} -> {to} in the project"))?;
    if edge.from != vo.target {
        return Err(format!(
            "edge {from} -> {to} does not start at target {}",
            vo.target
        ));
    }
    if edge.kind == EdgeKind::Instantiates {
        return Err(format!("edge {from} -> {to} is an instantiation"));
    }
    Ok(edge)
}

fn edge_dependencies(vo: &VoSpec, project: &Project) -> Vec<String> {
    let mut deps = project.model_closure(&vo.target);
    if let Some((from, to)) = vo.edge_ref() {
        deps.extend(project.model_closure(&to));
        deps.push(edge_key(&from, &to));
    }
    deps
}

/// Type-checks a formula against a machine when the machine is explorable;
/// generic targets fail later at check time.
fn check_formula_on(f: &LtlFormula, m: &Machine) -> Result<(), String> {
    match Model::new(m) {
        Ok(model) => check_atoms(&model, f).map_err(|e| e.to_string()),
        Err(_) => Ok(()),
    }
}

/// Parses a trace file if present and checks it against `machine`. A
/// missing file is reported by the check, not at load time.
fn validate_trace_file(project: &Project, rel: &str, machine: &str) -> Result<(), String> {
    let path = project.resolve(rel);
    if !path.exists() {
        return Ok(());
    }
    let trace = read_trace(project, rel).map_err(|e| e.to_string())?;
    if trace.machine != machine {
        return Err(format!(
            "{rel}: trace is for {}, expected {machine}",
            trace.machine
        ));
    }
    let m = project
        .machine(machine)
        .ok_or_else(|| format!("unknown model {machine}"))?;
    validate_trace(&trace, m).map_err(|e| format!("{rel}: {e}"))
}

pub struct LtlKind;

impl LtlKind {
    /// The formula checked for `vo`: its own, or the parent's translated
    /// along the edge from the target to the parent's target.
    pub fn formula(vo: &VoSpec, project: &Project) -> Result<LtlFormula, String> {
        if let Some(text) = &vo.formula {
            return parse_ltl(text).map_err(|e| format!("formula: {e}"));
        }
        let parent_id = vo.inherits.as_deref().ok_or("missing field 'formula'")?;
        let parent = project
            .vo(parent_id)
            .ok_or_else(|| format!("inherits unknown obligation {parent_id}"))?;
        let edge = project
            .edge(&vo.target, &parent.target)
            .ok_or_else(|| format!("no edge {} -> {}", vo.target, parent.target))?;
        let f = Self::formula(parent, project)?;
        Ok(translate_formula(edge, &f))
    }
}

impl VoKind for LtlKind {
    fn name(&self) -> &'static str {
        "ltl"
    }

    fn validate(&self, vo: &VoSpec, ctx: &ValidateCtx) -> Result<(), String> {
        if let Some(parent_id) = &vo.inherits {
            let parent = ctx
                .project
                .vo(parent_id)
                .ok_or_else(|| format!("inherits unknown obligation {parent_id}"))?;
            if parent.kind != "ltl" {
                return Err(format!(
                    "inherits {parent_id}, which is not an ltl obligation"
                ));
            }
            let edge = ctx
                .project
                .edge(&vo.target, &parent.target)
                .ok_or_else(|| {
                    format!(
                        "inherits {parent_id} but there is no edge {} -> {}",
                        vo.target, parent.target
                    )
                })?;
            if edge.kind == EdgeKind::Instantiates {
                return Err(format!("edge {} is an instantiation", edge.id()));
            }
        }
        let f = Self::formula(vo, ctx.project)?;
        let m = ctx.project.machine(&vo.target).expect("target validated");
        check_formula_on(&f, m).map_err(|e| format!("formula: {e}"))
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let f = Self::formula(vo, ctx.project).map_err(CheckError::Engine)?;
        let model = ctx.model(&vo.target)?;
        let space = ctx.explore(&model)?;
        let verdict = check_ltl_on(&model, &space, &f).map_err(CheckError::engine)?;
        Ok(match verdict {
            LtlVerdict::Pass => Outcome::pass(
                Evidence::summary(format!("{f} holds on {} states", space.len()))
                    .with_detail(json!({ "formula": f.to_string(), "states": space.len() })),
            ),
            LtlVerdict::Fail { lasso } => Outcome::fail(
                Evidence::summary(format!("{f} violated: counterexample lasso"))
                    .with_text(lasso.render(&model, &space))
                    .with_detail(json!({ "formula": f.to_string(), "lasso": lasso })),
            ),
            LtlVerdict::Inconclusive { limit } => Outcome::inconclusive(limit),
        })
    }

    fn dependencies(&self, vo: &VoSpec, project: &Project) -> Vec<String> {
        let mut deps = project.model_closure(&vo.target);
        if vo.formula.is_none() {
            // Derived formula: depends on the parent definition and the edge glue.
            let mut cur = vo;
            while let Some(parent) = cur.inherits.as_deref().and_then(|p| project.vo(p)) {
                deps.extend(project.model_closure(&parent.target));
                deps.push(edge_key(&cur.target, &parent.target));
                deps.push(super::project::vo_key(&parent.id));
                if parent.formula.is_some() {
                    break;
                }
                cur = parent;
            }
        }
        deps
    }
}

pub struct InvariantKind;

impl VoKind for InvariantKind {
    fn name(&self) -> &'static str {
        "invariant_mc"
    }

    fn validate(&self, _vo: &VoSpec, _ctx: &ValidateCtx) -> Result<(), String> {
        Ok(())
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let model = ctx.model(&vo.target)?;
        let space = ctx.explore(&model)?;
        if let Some(v) = space.invariant_violations.first() {
            let shown = model.show_state(space.state(v.state));
            return Ok(Outcome::fail(
                Evidence::summary(format!(
                    "invariant {} violated in state {shown}",
                    v.predicate
                ))
                .with_detail(
                    json!({ "state": v.state, "valuation": shown, "invariant": v.predicate,
                        "violations": space.invariant_violations.len() }),
                ),
            ));
        }
        if let Some(limit) = space.truncated {
            return Ok(Outcome::inconclusive(limit));
        }
        Ok(Outcome::pass(
            Evidence::summary(format!("invariants hold on {} states", space.len())).with_detail(
                json!({ "states": space.len(), "transitions": space.transitions.len() }),
            ),
        ))
    }
}

pub struct DeadlockKind;

impl VoKind for DeadlockKind {
    fn name(&self) -> &'static str {
        "deadlock"
    }

    fn validate(&self, _vo: &VoSpec, _ctx: &ValidateCtx) -> Result<(), String> {
        Ok(())
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let model = ctx.model(&vo.target)?;
        let space = ctx.explore(&model)?;
        if let Some(&d) = space.deadlocks.first() {
            let shown = model.show_state(space.state(d));
            return Ok(Outcome::fail(
                Evidence::summary(format!("deadlock in state {shown}")).with_detail(
                    json!({ "state": d, "valuation": shown, "deadlocks": space.deadlocks.len() }),
                ),
            ));
        }
        if let Some(limit) = space.truncated {
            return Ok(Outcome::inconclusive(limit));
        }
        Ok(Outcome::pass(Evidence::summary(format!(
            "no deadlock in {} states",
            space.len()
        ))))
    }
}

pub struct TraceKind;

/// Evidence of a replay: step count, or the failing step (0-based) with the
/// state before it.
pub fn replay_evidence(model: &Model, trace: &Trace, out: &ReplayOutcome) -> Evidence {
    match out {
        ReplayOutcome::Pass { steps, .. } => {
            Evidence::summary(format!("replayed {steps} steps")).with_detail(out)
        }
        ReplayOutcome::Fail {
            step,
            reason,
            state,
        } => {
            let label = trace
                .steps
                .get(*step)
                .map(|s| s.label.to_string())
                .unwrap_or_else(|| "initial".into());
            Evidence::summary(format!("step {step} ({label}): {reason}"))
                .with_text(format!("before step {step}: {}", model.show_state(state)))
                .with_detail(out)
        }
    }
}

impl VoKind for TraceKind {
    fn name(&self) -> &'static str {
        "trace"
    }

    fn validate(&self, vo: &VoSpec, ctx: &ValidateCtx) -> Result<(), String> {
        validate_trace_file(ctx.project, require(&vo.trace, "trace")?, &vo.target)
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let trace = ctx.trace(vo.trace.as_deref().unwrap_or_default())?;
        let model = ctx.model(&vo.target)?;
        let out = replay_trace(&model, &trace);
        let ev = replay_evidence(&model, &trace, &out);
        Ok(if out.is_pass() {
            Outcome::pass(ev)
        } else {
            Outcome::fail(ev)
        })
    }
}

pub struct CoverageKind;

impl VoKind for CoverageKind {
    fn name(&self) -> &'static str {
        "coverage"
    }

    fn validate(&self, vo: &VoSpec, _ctx: &ValidateCtx) -> Result<(), String> {
        let t = vo.thresholds.unwrap_or_default();
        if !(0.0..=1.0).contains(&t.min_event_coverage) {
            return Err(format!(
                "min_event_coverage {} is not a fraction",
                t.min_event_coverage
            ));
        }
        Ok(())
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let t = vo.thresholds.unwrap_or_default();
        let model = ctx.model(&vo.target)?;
        let space = ctx.explore(&model)?;
        let report = coverage(&space, &model);
        let ratio = report.event_coverage();
        let mut gaps = Vec::new();
        if ratio < t.min_event_coverage {
            gaps.push(format!(
                "event coverage {ratio:.3} below {:.3}; never fired: {}",
                t.min_event_coverage,
                report.uncovered_events().join(", ")
            ));
        }
        if t.require_conjunct_both_polarities {
            gaps.extend(
                report
                    .single_polarity_conjuncts()
                    .into_iter()
                    .map(|c| format!("single polarity: {c}")),
            );
        }
        let detail = json!({ "event_coverage": ratio, "report": report, "gaps": gaps });
        if gaps.is_empty() {
            return Ok(Outcome::pass(
                Evidence::summary(format!("event coverage {ratio:.3}, thresholds met"))
                    .with_detail(detail),
            ));
        }
        if let Some(limit) = space.truncated {
            return Ok(Outcome::inconclusive(limit));
        }
        Ok(Outcome::fail(
            Evidence::summary(format!("{} coverage gap(s)", gaps.len()))
                .with_text(gaps.join("\n"))
                .with_detail(detail),
        ))
    }
}

pub struct SimulationKind;

impl VoKind for SimulationKind {
    fn name(&self) -> &'static str {
        "simulation"
    }

    fn validate(&self, vo: &VoSpec, ctx: &ValidateCtx) -> Result<(), String> {
        vo_edge(vo, ctx.project).map(|_| ())
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let edge = vo_edge(vo, ctx.project).map_err(CheckError::Engine)?;
        let conc = ctx.model(&edge.from)?;
        let abs = ctx.model(&edge.to)?;
        let verdict =
            check_simulation(edge, &conc, &abs, ctx.limits).map_err(CheckError::engine)?;
        Ok(match verdict {
            SimulationVerdict::Pass { transitions } => Outcome::pass(
                Evidence::summary(format!(
                    "{} simulates {} on {transitions} transitions",
                    edge.to, edge.from
                ))
                .with_detail(&verdict),
            ),
            SimulationVerdict::Fail { ref witness } => {
                let step = witness
                    .label
                    .as_ref()
                    .map(|l| format!(" --{l}-->"))
                    .unwrap_or_default();
                Outcome::fail(
                    Evidence::summary(format!(
                        "simulation broken at state {}{step}",
                        witness.state
                    ))
                    .with_text(format!(
                        "{} {}{step}: {}",
                        witness.state, witness.concrete_state, witness.reason
                    ))
                    .with_detail(&verdict),
                )
            }
            SimulationVerdict::Inconclusive { limit } => Outcome::inconclusive(limit),
        })
    }

    fn dependencies(&self, vo: &VoSpec, project: &Project) -> Vec<String> {
        edge_dependencies(vo, project)
    }
}

pub struct AbstractWitnessKind;

impl VoKind for AbstractWitnessKind {
    fn name(&self) -> &'static str {
        "abstract_witness"
    }

    fn validate(&self, vo: &VoSpec, ctx: &ValidateCtx) -> Result<(), String> {
        let edge = vo_edge(vo, ctx.project)?;
        validate_trace_file(ctx.project, require(&vo.trace, "trace")?, &edge.from)?;
        validate_trace_file(
            ctx.project,
            require(&vo.abstract_trace, "abstract_trace")?,
            &edge.to,
        )
    }

    fn check(&self, vo: &VoSpec, ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        let edge = vo_edge(vo, ctx.project).map_err(CheckError::Engine)?;
        let conc_trace = ctx.trace(vo.trace.as_deref().unwrap_or_default())?;
        let abs_trace = ctx.trace(vo.abstract_trace.as_deref().unwrap_or_default())?;
        let (cm, am) = (
            ctx.project.machine(&edge.from).unwrap(),
            ctx.project.machine(&edge.to).unwrap(),
        );
        let translated = translate_trace(edge, cm, am, &conc_trace);
        let got = canonical_labels(&translated, am);
        let want = canonical_labels(&abs_trace, am);
        if got != want {
            let show = |ls: &[crate::engine::TransitionLabel]| {
                ls.iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            return Ok(Outcome::fail(
                Evidence::summary("translated trace differs from the stored abstract trace")
                    .with_text(format!(
                        "translated: [{}]\nstored:     [{}]",
                        show(&got),
                        show(&want)
                    ))
                    .with_detail(json!({ "translated": got, "stored": want })),
            ));
        }
        let conc = ctx.model(&edge.from)?;
        let abs = ctx.model(&edge.to)?;
        for (model, trace, side) in [
            (&conc, &conc_trace, "concrete"),
            (&abs, &abs_trace, "abstract"),
        ] {
            let out = replay_trace(model, trace);
            if !out.is_pass() {
                let ev = replay_evidence(model, trace, &out);
                return Ok(Outcome::fail(Evidence {
                    summary: format!("{side} trace: {}", ev.summary),
                    ..ev
                }));
            }
        }
        Ok(Outcome::pass(
            Evidence::summary(format!(
                "translated trace matches ({} abstract steps); both replay",
                want.len()
            ))
            .with_detail(json!({ "translated": got })),
        ))
    }

    fn dependencies(&self, vo: &VoSpec, project: &Project) -> Vec<String> {
        edge_dependencies(vo, project)
    }
}

pub struct ManualKind;

impl VoKind for ManualKind {
    fn name(&self) -> &'static str {
        "manual"
    }

    fn validate(&self, vo: &VoSpec, _ctx: &ValidateCtx) -> Result<(), String> {
        match vo.description.as_deref().map(str::trim) {
            Some(d) if !d.is_empty() => Ok(()),
            _ => Err("manual obligations need a 'description'".into()),
        }
    }

    fn check(&self, vo: &VoSpec, _ctx: &CheckCtx) -> Result<Outcome, CheckError> {
        Err(CheckError::Manual(vo.id.clone()))
    }

    fn automatic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_registry_has_every_kind() {
        let r = KindRegistry::standard();
        let names: Vec<_> = r.names().collect();
        assert_eq!(
            names,
            [
                "abstract_witness",
                "coverage",
                "deadlock",
                "invariant_mc",
                "ltl",
                "manual",
                "simulation",
                "trace"
            ]
        );
        assert!(!r.get("manual").unwrap().automatic());
        assert!(r.get("ltl").unwrap().automatic());
        assert!(r.get("nosuch").is_none());
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

use super::kinds::{CheckCtx, CheckError, KindRegistry, LtlKind, Verdict, VoKind};
use super::ledger::{Clock, Evidence, Ledger, LedgerError, Status, Via, VoRecord};
use super::project::{current_hashes, vo_key, LoadError, Project, VoSpec};
use crate::engine::Limits;
use crate::ltl::parse_ltl;
use crate::refinement::inheritance_check;

/// Stored in place of a hash that could not be computed.
pub const UNAVAILABLE: &str = "unavailable";

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("unknown obligation {0}")]
    UnknownVo(String),
    #[error("{0} is not a manual VO")]
    NotManual(String),
    #[error("evidence note must not be empty")]
    EmptyNote,
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// A loaded project together with the kind registry and clock used to
/// produce records.
#[derive(Clone)]
pub struct VoManager {
    project: Project,
    registry: KindRegistry,
    clock: Arc<dyn Clock>,
    forced: Option<Limits>,
}

impl VoManager {
    pub fn new(project: Project, registry: KindRegistry, clock: Arc<dyn Clock>) -> Self {
        VoManager {
            project,
            registry,
            clock,
            forced: None,
        }
    }

    /// Loads the project at `path` with the standard kinds.
    pub fn load(path: &Path, base: Limits, clock: Arc<dyn Clock>) -> Result<Self, LoadError> {
        let registry = KindRegistry::standard();
        let project = Project::load(path, &registry, base)?;
        Ok(Self::new(project, registry, clock))
    }

    /// Limits used for every check, replacing project and obligation limits.
    pub fn with_limits(mut self, limits: Option<Limits>) -> Self {
        self.forced = limits;
        self
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn registry(&self) -> &KindRegistry {
        &self.registry
    }

    fn spec(&self, id: &str) -> Result<&VoSpec, ManagerError> {
        self.project
            .vo(id)
            .ok_or_else(|| ManagerError::UnknownVo(id.to_string()))
    }

    pub fn kind_of(&self, vo: &VoSpec) -> &dyn VoKind {
        self.registry
            .get(&vo.kind)
            .expect("kinds validated at load")
    }

    pub fn is_manual(&self, id: &str) -> bool {
        self.project
            .vo(id)
            .is_some_and(|v| !self.kind_of(v).automatic())
    }

    /// Ledger on disk aligned to the project obligations.
    pub fn read_ledger(&self) -> Result<Ledger, LedgerError> {
        let mut l = Ledger::load(&self.project.ledger_path())?;
        l.align(self.project.vos.iter().map(|v| v.id.as_str()));
        Ok(l)
    }

    pub fn write_ledger(&self, ledger: &Ledger) -> Result<(), LedgerError> {
        ledger.save(&self.project.ledger_path())
    }

    /// Reads the ledger, refreshes staleness and returns it with the ids
    /// that became stale.
    pub fn refreshed_ledger(&self) -> Result<(Ledger, Vec<String>), ManagerError> {
        let mut l = self.read_ledger()?;
        let stale = refresh_staleness(&self.project.project_file_path(), &mut l)?;
        Ok((l, stale))
    }

    fn dependency_keys(&self, vo: &VoSpec) -> BTreeSet<String> {
        let mut keys: BTreeSet<String> = self
            .kind_of(vo)
            .dependencies(vo, &self.project)
            .into_iter()
            .collect();
        keys.insert(vo_key(&vo.id));
        keys
    }

    fn hashes(&self, keys: &BTreeSet<String>) -> Result<BTreeMap<String, String>, String> {
        keys.iter()
            .map(|k| self.project.dep_hash(k).map(|h| (k.clone(), h)))
            .collect()
    }

    fn lenient_hashes(&self, keys: &BTreeSet<String>) -> BTreeMap<String, String> {
        keys.iter()
            .map(|k| {
                (
                    k.clone(),
                    self.project
                        .dep_hash(k)
                        .unwrap_or_else(|_| UNAVAILABLE.to_string()),
                )
            })
            .collect()
    }

    fn record(
        &self,
        id: &str,
        verdict: Verdict,
        via: Option<Via>,
        evidence: Evidence,
        hashes: BTreeMap<String, String>,
    ) -> VoRecord {
        VoRecord {
            status: match verdict {
                Verdict::Discharged => Status::Discharged,
                Verdict::Failed => Status::Failed,
            },
            via: (verdict == Verdict::Discharged).then(|| via.unwrap_or(Via::Auto)),
            evidence: Some(evidence),
            dep_hashes: hashes,
            timestamp: Some(self.clock.now()),
            ..VoRecord::unchecked(id)
        }
    }

    /// Checks one obligation directly. Manual obligations return their
    /// current record from `ledger` unchanged.
    pub fn check_vo(
        &self,
        id: &str,
        limits: Option<Limits>,
        ledger: &Ledger,
    ) -> Result<VoRecord, ManagerError> {
        let vo = self.spec(id)?;
        let kind = self.kind_of(vo);
        if !kind.automatic() {
            return Ok(ledger
                .get(id)
                .cloned()
                .unwrap_or_else(|| VoRecord::unchecked(id)));
        }
        let limits = limits
            .or(self.forced)
            .unwrap_or_else(|| vo.limits.unwrap_or_default().over(self.project.limits));
        let outcome = kind.check(
            vo,
            &CheckCtx {
                project: &self.project,
                limits,
            },
        )?;
        let hashes =
            self.hashes(&self.dependency_keys(vo))
                .map_err(|message| CheckError::File {
                    path: vo.id.clone(),
                    message,
                })?;
        Ok(self.record(id, outcome.verdict, None, outcome.evidence, hashes))
    }

    /// Failed record with the given evidence and the current dependency
    /// hashes, for results not produced by a kind (errors, time budgets).
    pub fn failed_record(&self, id: &str, evidence: Evidence) -> VoRecord {
        let keys = self
            .project
            .vo(id)
            .map(|v| self.dependency_keys(v))
            .unwrap_or_default();
        self.record(
            id,
            Verdict::Failed,
            None,
            evidence,
            self.lenient_hashes(&keys),
        )
    }

    /// Failed record standing for an error raised while checking.
    pub fn error_record(&self, id: &str, err: &ManagerError) -> VoRecord {
        self.failed_record(id, Evidence::summary(format!("error: {err}")))
    }

    /// Tries to discharge an LTL obligation by inheritance from its parent.
    /// Returns the record, or the reason inheritance did not apply.
    fn try_inherit(&self, vo: &VoSpec, ledger: &Ledger) -> Result<VoRecord, String> {
        let parent_id = vo.inherits.as_deref().ok_or("no parent obligation")?;
        let parent = self
            .project
            .vo(parent_id)
            .ok_or("unknown parent obligation")?;
        let edge = self
            .project
            .edge(&vo.target, &parent.target)
            .ok_or("no edge to the parent's target")?;
        if !ledger.get(parent_id).is_some_and(VoRecord::is_discharged) {
            return Err(format!("parent {parent_id} is not discharged"));
        }
        let sim = self.project.vos.iter().find(|s| {
            s.kind == "simulation"
                && s.edge_ref() == Some((edge.from.clone(), edge.to.clone()))
                && ledger.get(&s.id).is_some_and(VoRecord::is_discharged)
        });
        let parent_formula = LtlKind::formula(parent, &self.project)?;
        let conc = self.project.machine(&vo.target).ok_or("unknown target")?;
        let (inh, translated) = inheritance_check(&parent_formula, edge, conc, sim.is_some());
        let translated = translated.ok_or(inh.reason.clone())?;
        if let Some(own) = &vo.formula {
            let own = parse_ltl(own).map_err(|e| e.to_string())?;
            if own != translated {
                return Err(format!("formula differs from the translation {translated}"));
            }
        }
        let sim = sim.expect("applicable inheritance needs a discharged simulation");
        let mut keys = self.dependency_keys(vo);
        keys.extend(self.dependency_keys(parent));
        keys.extend(self.dependency_keys(sim));
        let hashes = self.hashes(&keys)?;
        let ev = Evidence::summary(format!(
            "inherited from {parent_id} along {}: {translated}",
            edge.id()
        ))
        .with_detail(json!({ "parent": parent_id, "simulation": sim.id, "inheritance": inh }));
        Ok(self.record(
            &vo.id,
            Verdict::Discharged,
            Some(Via::Inherited { edge: edge.id() }),
            ev,
            hashes,
        ))
    }

    /// Checks every automatic obligation, abstract models first and
    /// simulation obligations first within a model. LTL obligations with a
    /// parent are discharged by inheritance when possible. Returns the
    /// records of all obligations in project order.
    pub fn check_all(&self, ledger: &mut Ledger) -> Vec<VoRecord> {
        ledger.align(self.project.vos.iter().map(|v| v.id.as_str()));
        for model in self.project.lattice.topological_order() {
            let mut vos: Vec<&VoSpec> = self
                .project
                .vos
                .iter()
                .filter(|v| v.target == model)
                .collect();
            vos.sort_by_key(|v| v.kind != "simulation");
            for vo in vos {
                if !self.kind_of(vo).automatic() {
                    continue;
                }
                let mut record = None;
                let mut declined = None;
                if vo.inherits.is_some() {
                    match self.try_inherit(vo, ledger) {
                        Ok(r) => record = Some(r),
                        Err(reason) => declined = Some(reason),
                    }
                }
                let mut record = record.unwrap_or_else(|| {
                    self.check_vo(&vo.id, None, ledger)
                        .unwrap_or_else(|e| self.error_record(&vo.id, &e))
                });
                if let (Some(reason), Some(ev)) = (declined, record.evidence.as_mut()) {
                    if let Some(obj) = ev.detail.as_object_mut() {
                        obj.insert("inheritance_declined".into(), json!(reason));
                    } else {
                        ev.detail = json!({ "inheritance_declined": reason });
                    }
                }
                ledger.upsert(record);
            }
        }
        ledger.records.clone()
    }

    pub fn discharge_manual(
        &self,
        ledger: &mut Ledger,
        id: &str,
        note: &str,
        actor: &str,
    ) -> Result<VoRecord, ManagerError> {
        let vo = self.spec(id)?;
        if self.kind_of(vo).automatic() {
            return Err(ManagerError::NotManual(id.to_string()));
        }
        if note.trim().is_empty() {
            return Err(ManagerError::EmptyNote);
        }
        let hashes =
            self.hashes(&self.dependency_keys(vo))
                .map_err(|message| CheckError::File {
                    path: id.to_string(),
                    message,
                })?;
        let mut r = self.record(
            id,
            Verdict::Discharged,
            Some(Via::Manual),
            Evidence::summary(note.trim()),
            hashes,
        );
        r.note = Some(note.trim().to_string());
        r.actor = Some(actor.to_string());
        ledger.upsert(r.clone());
        Ok(r)
    }

    /// Refresh, check everything and write the ledger once at the end.
    pub fn run_check_all(&self) -> Result<Ledger, ManagerError> {
        let (mut ledger, _) = self.refreshed_ledger()?;
        self.check_all(&mut ledger);
        self.write_ledger(&ledger)?;
        Ok(ledger)
    }

    /// Re-reads the ledger, stores `record` and writes it back. Callers
    /// serialize concurrent commits.
    pub fn commit(&self, record: VoRecord) -> Result<Ledger, ManagerError> {
        let (mut ledger, _) = self.refreshed_ledger()?;
        ledger.upsert(record);
        self.write_ledger(&ledger)?;
        Ok(ledger)
    }
}

/// Marks discharged and failed records stale when a dependency hash no
/// longer matches the files. Returns the ids that became stale. Never
/// rechecks anything.
pub fn refresh_staleness(
    project_file: &Path,
    ledger: &mut Ledger,
) -> Result<Vec<String>, LoadError> {
    let current = current_hashes(project_file)?;
    let mut changed = Vec::new();
    for r in &mut ledger.records {
        if !matches!(r.status, Status::Discharged | Status::Failed) {
            continue;
        }
        let reason = r
            .dep_hashes
            .iter()
            .find_map(|(key, old)| match current.get(key) {
                None => Some(format!("{key} no longer in the project")),
                Some(Err(msg)) if old != UNAVAILABLE => Some(msg.clone()),
                Some(Ok(h)) if h != old => Some(format!("{key} changed")),
                _ => None,
            });
        if let Some(reason) = reason {
            r.make_stale(reason);
            changed.push(r.id.clone());
        }
    }
    Ok(changed)
}

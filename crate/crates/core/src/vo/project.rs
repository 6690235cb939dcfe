use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinds::{KindRegistry, ValidateCtx};
use crate::engine::Limits;
use crate::lang::{
    canonical_hash, instantiate, parse_machine, well_formed, Header, Literal, Machine, ModelHash,
};
use crate::refinement::{build_lattice, parse_trace, EdgeKind, EdgeSpec, Lattice, RefinementEdge};

pub const PROJECT_FILE: &str = "project.vobs";
pub const LEDGER_PATH: &str = ".vobs/status.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{location}: {message}")]
pub struct LoadError {
    pub location: String,
    pub message: String,
}

impl LoadError {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        LoadError {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSpec {
    pub max_states: Option<usize>,
    pub max_transitions: Option<usize>,
}

impl LimitsSpec {
    pub fn over(&self, base: Limits) -> Limits {
        Limits {
            max_states: self.max_states.unwrap_or(base.max_states),
            max_transitions: self.max_transitions.unwrap_or(base.max_transitions),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "one")]
    pub min_event_coverage: f64,
    #[serde(default)]
    pub require_conjunct_both_polarities: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_event_coverage: 1.0,
            require_conjunct_both_polarities: false,
        }
    }
}

/// One `[[vo]]` table. Which optional fields apply depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoSpec {
    pub id: String,
    pub target: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    /// Id of an LTL obligation on an abstract model this one is derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherits: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_trace: Option<String>,
    /// `"From -> To"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl VoSpec {
    /// Resolves the `edge` field to `(from, to)`.
    pub fn edge_ref(&self) -> Option<(String, String)> {
        parse_edge_ref(self.edge.as_deref()?)
    }
}

pub fn parse_edge_ref(s: &str) -> Option<(String, String)> {
    let (a, b) = s.split_once("->")?;
    let (a, b) = (a.trim(), b.trim());
    (!a.is_empty() && !b.is_empty()).then(|| (a.to_string(), b.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSection {
    pub name: String,
    #[serde(default)]
    pub limits: Option<LimitsSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub instantiates: Option<String>,
    #[serde(default)]
    pub with: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub kind: Option<EdgeKind>,
    #[serde(default)]
    pub event_map: BTreeMap<String, String>,
    #[serde(default)]
    pub glue: BTreeMap<String, String>,
}

/// Raw contents of `project.vobs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub project: ProjectSection,
    #[serde(default)]
    pub model: Vec<ModelEntry>,
    #[serde(default)]
    pub edge: Vec<EdgeEntry>,
    #[serde(default)]
    pub vo: Vec<VoSpec>,
}

impl ProjectFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
    }
}

/// A fully resolved project.
#[derive(Debug, Clone)]
pub struct Project {
    pub root: PathBuf,
    pub name: String,
    pub file: ProjectFile,
    pub lattice: Lattice,
    /// Source file per model; `None` for instantiations.
    pub model_files: BTreeMap<String, Option<PathBuf>>,
    pub vos: Vec<VoSpec>,
    pub limits: Limits,
}

fn project_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(PROJECT_FILE)
    } else {
        path.to_path_buf()
    }
}

fn toml_literal(v: &toml::Value) -> Option<Literal> {
    Some(match v {
        toml::Value::Boolean(b) => Literal::Bool(*b),
        toml::Value::Integer(n) => Literal::Int(*n),
        toml::Value::String(s) => Literal::Member(s.clone()),
        toml::Value::Array(items) => Literal::Set(
            items
                .iter()
                .map(|i| i.as_str().map(String::from))
                .collect::<Option<Vec<_>>>()?,
        ),
        _ => return None,
    })
}

impl Project {
    /// Loads a project from its directory or its `project.vobs` path, using
    /// `base` as the default exploration limits.
    pub fn load(path: &Path, registry: &KindRegistry, base: Limits) -> Result<Project, LoadError> {
        let file_path = project_path(path);
        let root = file_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let loc = file_path.display().to_string();
        let text =
            fs::read_to_string(&file_path).map_err(|e| LoadError::new(&loc, e.to_string()))?;
        let file = ProjectFile::parse(&text).map_err(|m| LoadError::new(&loc, m))?;

        let mut machines: BTreeMap<String, Machine> = BTreeMap::new();
        let mut model_files = BTreeMap::new();
        for entry in &file.model {
            if model_files.contains_key(&entry.name) {
                return Err(LoadError::new(
                    &loc,
                    format!("duplicate model {}", entry.name),
                ));
            }
            match (&entry.file, &entry.instantiates) {
                (Some(f), None) => {
                    let p = root.join(f);
                    let m = load_machine(&p)?;
                    if m.name != entry.name {
                        return Err(LoadError::new(
                            p.display().to_string(),
                            format!(
                                "file declares machine {}, project expects {}",
                                m.name, entry.name
                            ),
                        ));
                    }
                    machines.insert(m.name.clone(), m);
                    model_files.insert(entry.name.clone(), Some(p));
                }
                (None, Some(_)) => {
                    model_files.insert(entry.name.clone(), None);
                }
                _ => {
                    return Err(LoadError::new(
                        &loc,
                        format!(
                            "model {}: give exactly one of 'file' and 'instantiates'",
                            entry.name
                        ),
                    ))
                }
            }
        }

        let mut specs: Vec<EdgeSpec> = Vec::new();
        for entry in &file.model {
            let Some(generic_name) = &entry.instantiates else {
                continue;
            };
            let at = format!("{loc}: model {}", entry.name);
            let generic = machines.get(generic_name).ok_or_else(|| {
                LoadError::new(&at, format!("unknown generic model {generic_name}"))
            })?;
            let mut bind = BTreeMap::new();
            for (k, v) in &entry.with {
                let lit = toml_literal(v)
                    .ok_or_else(|| LoadError::new(&at, format!("{k}: unsupported literal {v}")))?;
                bind.insert(k.clone(), lit);
            }
            let m = instantiate(generic, &entry.name, &bind)
                .map_err(|e| LoadError::new(&at, e.to_string()))?;
            specs.push(EdgeSpec {
                from: entry.name.clone(),
                to: generic_name.clone(),
                kind: Some(EdgeKind::Instantiates),
                bind,
                ..Default::default()
            });
            machines.insert(m.name.clone(), m);
        }

        for e in &file.edge {
            if e.kind == Some(EdgeKind::Instantiates) {
                return Err(LoadError::new(
                    &loc,
                    format!(
                        "edge {} -> {}: instantiation edges are implied by [[model]] entries",
                        e.from, e.to
                    ),
                ));
            }
            specs.push(EdgeSpec {
                from: e.from.clone(),
                to: e.to.clone(),
                kind: e.kind,
                event_map: e.event_map.clone(),
                glue: e.glue.clone(),
                bind: BTreeMap::new(),
            });
        }
        let lattice = build_lattice(machines.into_values().collect(), specs)
            .map_err(|e| LoadError::new(&loc, e.to_string()))?;

        let limits = file.project.limits.unwrap_or_default().over(base);
        let mut project = Project {
            root,
            name: file.project.name.clone(),
            vos: file.vo.clone(),
            file,
            lattice,
            model_files,
            limits,
        };
        project.validate_vos(registry)?;
        Ok(project)
    }

    fn validate_vos(&mut self, registry: &KindRegistry) -> Result<(), LoadError> {
        let mut ids = BTreeSet::new();
        for vo in &self.vos {
            let at = format!("vo {}", vo.id);
            if !ids.insert(vo.id.as_str()) {
                return Err(LoadError::new(at, "duplicate id"));
            }
            if self.lattice.model(&vo.target).is_none() {
                return Err(LoadError::new(at, format!("unknown target {}", vo.target)));
            }
            let kind = registry
                .get(&vo.kind)
                .ok_or_else(|| LoadError::new(&at, format!("unknown kind {}", vo.kind)))?;
            kind.validate(vo, &ValidateCtx { project: self })
                .map_err(|m| LoadError::new(&at, m))?;
        }
        Ok(())
    }

    pub fn vo(&self, id: &str) -> Option<&VoSpec> {
        self.vos.iter().find(|v| v.id == id)
    }

    pub fn machine(&self, name: &str) -> Option<&Machine> {
        self.lattice.model(name)
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<&RefinementEdge> {
        self.lattice.edge(from, to)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join(LEDGER_PATH)
    }

    pub fn project_file_path(&self) -> PathBuf {
        self.root.join(PROJECT_FILE)
    }

    /// Models whose content an obligation on `model` depends on: the model
    /// itself and, for instantiations, the generic it came from.
    pub fn model_closure(&self, model: &str) -> Vec<String> {
        let mut out = vec![model.to_string()];
        let mut cur = model.to_string();
        while let Some(Header::Instantiates { generic, .. }) = self.machine(&cur).map(|m| &m.header)
        {
            out.push(generic.clone());
            cur = generic.clone();
        }
        out
    }

    /// Hash of one dependency key computed from the loaded project.
    pub fn dep_hash(&self, key: &str) -> Result<String, String> {
        if let Some(edge) = key.strip_prefix("@edge:") {
            let (from, to) = edge
                .split_once("->")
                .ok_or_else(|| format!("bad key {key}"))?;
            if let Some(e) = self.file.edge.iter().find(|e| e.from == from && e.to == to) {
                return Ok(edge_hash(e));
            }
            return self
                .file
                .model
                .iter()
                .find(|m| m.name == from && m.instantiates.as_deref() == Some(to))
                .map(|m| bind_hash(&m.with))
                .ok_or_else(|| format!("edge {from} -> {to} no longer in the project"));
        }
        if let Some(id) = key.strip_prefix("@vo:") {
            let vo = self
                .vo(id)
                .ok_or_else(|| format!("obligation {id} no longer in the project"))?;
            return vo_payload_hash(&self.root, vo);
        }
        self.machine(key)
            .map(|m| canonical_hash(m).0)
            .ok_or_else(|| format!("model {key} no longer in the project"))
    }
}

fn load_machine(path: &Path) -> Result<Machine, LoadError> {
    let loc = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| LoadError::new(&loc, e.to_string()))?;
    let m = parse_machine(&text)
        .map_err(|e| LoadError::new(format!("{loc}:{}:{}", e.line, e.column), e.message))?;
    if matches!(m.header, Header::Instantiates { .. }) {
        return Err(LoadError::new(
            &loc,
            "instantiations are declared in the project file, not in machine files",
        ));
    }
    let errs = well_formed(&m);
    if !errs.is_empty() {
        let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        return Err(LoadError::new(&loc, msgs.join("; ")));
    }
    Ok(m)
}

pub fn edge_key(from: &str, to: &str) -> String {
    format!("@edge:{from}->{to}")
}

pub fn vo_key(id: &str) -> String {
    format!("@vo:{id}")
}

/// Hashes of every dependency key computed directly from the files, one
/// entry per model, edge and obligation. Per-entry failures (a missing or
/// unparsable file) are reported as `Err` so that dependent records can be
/// marked stale; only an unreadable project file fails as a whole.
pub fn current_hashes(
    project_file: &Path,
) -> Result<BTreeMap<String, Result<String, String>>, LoadError> {
    let loc = project_file.display().to_string();
    let root = project_file
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let text = fs::read_to_string(project_file).map_err(|e| LoadError::new(&loc, e.to_string()))?;
    let file = ProjectFile::parse(&text).map_err(|m| LoadError::new(&loc, m))?;
    let mut out = BTreeMap::new();

    let mut parsed: BTreeMap<String, Result<Machine, String>> = BTreeMap::new();
    for e in &file.model {
        if let Some(f) = &e.file {
            let m = load_machine(&root.join(f)).map_err(|e| e.to_string());
            parsed.insert(e.name.clone(), m);
        }
    }
    for e in &file.model {
        if let Some(g) = &e.instantiates {
            let m = match parsed.get(g) {
                Some(Ok(generic)) => e
                    .with
                    .iter()
                    .map(|(k, v)| {
                        toml_literal(v)
                            .map(|l| (k.clone(), l))
                            .ok_or_else(|| format!("{k}: bad literal"))
                    })
                    .collect::<Result<BTreeMap<_, _>, _>>()
                    .and_then(|bind| {
                        instantiate(generic, &e.name, &bind).map_err(|e| e.to_string())
                    }),
                Some(Err(msg)) => Err(format!("generic {g}: {msg}")),
                None => Err(format!("unknown generic model {g}")),
            };
            parsed.insert(e.name.clone(), m);
        }
    }
    for (name, m) in parsed {
        out.insert(name, m.map(|m| canonical_hash(&m).0));
    }
    for e in &file.edge {
        out.insert(edge_key(&e.from, &e.to), Ok(edge_hash(e)));
    }
    for e in &file.model {
        if let Some(g) = &e.instantiates {
            out.insert(edge_key(&e.name, g), Ok(bind_hash(&e.with)));
        }
    }
    for vo in &file.vo {
        out.insert(vo_key(&vo.id), vo_payload_hash(&root, vo));
    }
    Ok(out)
}

fn edge_hash(e: &EdgeEntry) -> String {
    ModelHash::of_text(&serde_json::to_string(e).expect("edge entries serialize")).0
}

fn bind_hash(with: &BTreeMap<String, toml::Value>) -> String {
    ModelHash::of_text(&serde_json::to_string(with).expect("bindings serialize")).0
}

/// Hash of an obligation's definition together with the contents of the
/// files it references. The requirement tag is bookkeeping and excluded.
fn vo_payload_hash(root: &Path, vo: &VoSpec) -> Result<String, String> {
    let mut def = vo.clone();
    def.requirement_tag = None;
    let mut text = serde_json::to_string(&def).expect("vo specs serialize");
    for f in [&vo.trace, &vo.abstract_trace].into_iter().flatten() {
        let content = fs::read_to_string(root.join(f)).map_err(|e| format!("{f}: {e}"))?;
        text.push('\0');
        // formatting and comments in a trace file do not count as a change
        match parse_trace(&content) {
            Ok(t) => text.push_str(&t.to_string()),
            Err(_) => text.push_str(&content),
        }
    }
    Ok(ModelHash::of_text(&text).0)
}

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Unchecked,
    Discharged,
    Failed,
    Stale,
}

impl Status {
    pub const ALL: [Status; 4] = [
        Status::Unchecked,
        Status::Discharged,
        Status::Failed,
        Status::Stale,
    ];
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Unchecked => "unchecked",
            Status::Discharged => "discharged",
            Status::Failed => "failed",
            Status::Stale => "stale",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Via {
    Auto,
    Manual,
    Inherited { edge: String },
}

impl fmt::Display for Via {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Via::Auto => f.write_str("auto"),
            Via::Manual => f.write_str("manual"),
            Via::Inherited { edge } => write!(f, "inherited({edge})"),
        }
    }
}

/// Result of a check: a one-line summary, an optional multi-line rendering
/// (lassos, witnesses, coverage gaps) and structured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub detail: serde_json::Value,
}

impl Evidence {
    pub fn summary(s: impl Into<String>) -> Self {
        Evidence {
            summary: s.into(),
            text: None,
            detail: serde_json::Value::Null,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_detail(mut self, detail: impl Serialize) -> Self {
        self.detail = serde_json::to_value(detail).expect("evidence detail serializes");
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoRecord {
    pub id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<Via>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
    #[serde(default)]
    pub dep_hashes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    /// Status before the record went stale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<Status>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stale_reason: Option<String>,
}

impl VoRecord {
    pub fn unchecked(id: &str) -> Self {
        VoRecord {
            id: id.to_string(),
            status: Status::Unchecked,
            via: None,
            evidence: None,
            dep_hashes: BTreeMap::new(),
            actor: None,
            note: None,
            timestamp: None,
            previous: None,
            stale_reason: None,
        }
    }

    /// Marks the record stale, keeping the prior verdict for display.
    pub fn make_stale(&mut self, reason: String) {
        if self.status == Status::Stale {
            return;
        }
        self.previous = Some(self.status);
        self.status = Status::Stale;
        self.stale_reason = Some(reason);
    }

    pub fn is_discharged(&self) -> bool {
        self.status == Status::Discharged
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// Records in project obligation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ledger {
    pub records: Vec<VoRecord>,
}

impl Ledger {
    /// Reads a ledger; a missing file is an empty ledger.
    pub fn load(path: &Path) -> Result<Ledger, LedgerError> {
        let p = path.display().to_string();
        match fs::read_to_string(path) {
            Ok(text) => {
                serde_json::from_str(&text).map_err(|source| LedgerError::Json { path: p, source })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Ledger::default()),
            Err(source) => Err(LedgerError::Io { path: p, source }),
        }
    }

    /// Writes through a temporary file in the same directory and renames it
    /// over `path`, so readers never see a partial ledger.
    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let io = |source| LedgerError::Io {
            path: path.display().to_string(),
            source,
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(self.to_json().as_bytes()).map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ledger serializes");
        s.push('\n');
        s
    }

    pub fn get(&self, id: &str) -> Option<&VoRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut VoRecord> {
        self.records.iter_mut().find(|r| r.id == id)
    }

    pub fn upsert(&mut self, record: VoRecord) {
        match self.get_mut(&record.id) {
            Some(r) => *r = record,
            None => self.records.push(record),
        }
    }

    /// Keeps one record per id in `order`, adding unchecked records for ids
    /// without one and dropping records of removed obligations.
    pub fn align<'a>(&mut self, order: impl IntoIterator<Item = &'a str>) {
        let mut old: BTreeMap<String, VoRecord> =
            self.records.drain(..).map(|r| (r.id.clone(), r)).collect();
        self.records = order
            .into_iter()
            .map(|id| old.remove(id).unwrap_or_else(|| VoRecord::unchecked(id)))
            .collect();
    }

    /// Copy with timestamps removed, for comparisons across runs.
    pub fn without_timestamps(&self) -> Ledger {
        let mut l = self.clone();
        for r in &mut l.records {
            r.timestamp = None;
        }
        l
    }
}

pub trait Clock: Send + Sync {
    /// Current time as RFC 3339.
    fn now(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone)]
pub struct FixedClock(pub String);

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Ledger {
        let mut a = VoRecord::unchecked("a");
        a.status = Status::Discharged;
        a.via = Some(Via::Inherited {
            edge: "B->A".into(),
        });
        a.evidence = Some(Evidence::summary("ok").with_detail(serde_json::json!({"n": 2})));
        a.dep_hashes.insert("A".into(), "00".into());
        a.timestamp = Some("2026-01-01T00:00:00Z".into());
        let mut b = VoRecord::unchecked("b");
        b.status = Status::Failed;
        b.make_stale("model A changed".into());
        Ledger {
            records: vec![a, b],
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(".vobs/status.json");
        let l = sample();
        l.save(&path).unwrap();
        assert_eq!(Ledger::load(&path).unwrap(), l);
    }

    #[test]
    fn missing_ledger_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            Ledger::load(&dir.path().join("none.json")).unwrap(),
            Ledger::default()
        );
    }

    #[test]
    fn stale_keeps_previous_status() {
        let l = sample();
        let b = l.get("b").unwrap();
        assert_eq!(b.status, Status::Stale);
        assert_eq!(b.previous, Some(Status::Failed));
    }

    #[test]
    fn align_orders_and_fills() {
        let mut l = sample();
        l.align(["c", "a"]);
        let ids: Vec<&str> = l.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);
        assert_eq!(l.records[0].status, Status::Unchecked);
    }

    #[test]
    fn json_shape() {
        let v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        assert!(v.is_array());
        assert_eq!(v[0]["status"], "discharged");
        assert_eq!(v[0]["via"]["kind"], "inherited");
        assert_eq!(v[1]["previous"], "failed");
    }
}

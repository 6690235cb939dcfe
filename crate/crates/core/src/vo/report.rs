use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ledger::{Ledger, Status, VoRecord};
use super::project::Project;

pub const UNTAGGED: &str = "(untagged)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub unchecked: usize,
    pub discharged: usize,
    pub failed: usize,
    pub stale: usize,
}

impl Counts {
    fn add(&mut self, s: Status) {
        match s {
            Status::Unchecked => self.unchecked += 1,
            Status::Discharged => self.discharged += 1,
            Status::Failed => self.failed += 1,
            Status::Stale => self.stale += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.unchecked + self.discharged + self.failed + self.stale
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRow {
    pub id: String,
    pub target: String,
    pub kind: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub project: String,
    pub validated: bool,
    pub totals: Counts,
    pub by_model: BTreeMap<String, Counts>,
    pub by_tag: BTreeMap<String, Counts>,
    pub rows: Vec<StatusRow>,
}

/// Rolls up the ledger by model and by requirement tag. Obligations without
/// a record count as unchecked; rows follow project order.
pub fn status_report(project: &Project, ledger: &Ledger) -> StatusReport {
    let mut totals = Counts::default();
    let mut by_model: BTreeMap<String, Counts> = BTreeMap::new();
    let mut by_tag: BTreeMap<String, Counts> = BTreeMap::new();
    let mut rows = Vec::new();
    for vo in &project.vos {
        let rec = ledger
            .get(&vo.id)
            .cloned()
            .unwrap_or_else(|| VoRecord::unchecked(&vo.id));
        totals.add(rec.status);
        by_model
            .entry(vo.target.clone())
            .or_default()
            .add(rec.status);
        let tag = vo
            .requirement_tag
            .clone()
            .unwrap_or_else(|| UNTAGGED.to_string());
        by_tag.entry(tag).or_default().add(rec.status);
        rows.push(StatusRow {
            id: vo.id.clone(),
            target: vo.target.clone(),
            kind: vo.kind.clone(),
            status: rec.status,
            via: rec.via.as_ref().map(|v| v.to_string()),
            requirement_tag: vo.requirement_tag.clone(),
            summary: rec.evidence.as_ref().map(|e| e.summary.clone()),
        });
    }
    StatusReport {
        project: project.name.clone(),
        validated: totals.discharged == totals.total(),
        totals,
        by_model,
        by_tag,
        rows,
    }
}

fn counts_line(c: &Counts) -> String {
    format!(
        "{} discharged, {} failed, {} stale, {} unchecked",
        c.discharged, c.failed, c.stale, c.unchecked
    )
}

impl fmt::Display for StatusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = ["ID", "TARGET", "KIND", "STATUS", "VIA", "TAG"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.id.clone(),
                    r.target.clone(),
                    r.kind.clone(),
                    r.status.to_string(),
                    r.via.clone().unwrap_or_else(|| "-".into()),
                    r.requirement_tag.clone().unwrap_or_else(|| "-".into()),
                ]
            })
            .collect();
        let mut width = cols.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            let parts: Vec<String> = row
                .iter()
                .zip(width)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        writeln!(f, "project {}", self.project)?;
        line(f, &cols.map(String::from))?;
        for row in &cells {
            line(f, row)?;
        }
        writeln!(f)?;
        writeln!(f, "by model:")?;
        for (m, c) in &self.by_model {
            writeln!(f, "  {m}: {}", counts_line(c))?;
        }
        writeln!(f, "by requirement:")?;
        for (t, c) in &self.by_tag {
            writeln!(f, "  {t}: {}", counts_line(c))?;
        }
        writeln!(f, "total: {}", counts_line(&self.totals))?;
        writeln!(
            f,
            "validated: {}",
            if self.validated { "yes" } else { "no" }
        )
    }
}

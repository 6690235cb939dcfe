//! Validation obligations over a project of machines: loading the project
//! file, the registry of obligation kinds, discharge, the persistent ledger
//! with dependency hashes, staleness after model evolution and reporting.

mod kinds;
mod ledger;
mod manager;
mod project;
mod report;

pub use kinds::{
    replay_evidence, AbstractWitnessKind, CheckCtx, CheckError, CoverageKind, DeadlockKind,
    InvariantKind, KindRegistry, LtlKind, ManualKind, Outcome, SimulationKind, TraceKind,
    ValidateCtx, Verdict, VoKind,
};
pub use ledger::{
    Clock, Evidence, FixedClock, Ledger, LedgerError, Status, SystemClock, Via, VoRecord,
};
pub use manager::{refresh_staleness, ManagerError, VoManager, UNAVAILABLE};
pub use project::{
    current_hashes, edge_key, parse_edge_ref, vo_key, EdgeEntry, LimitsSpec, LoadError, ModelEntry,
    Project, ProjectFile, ProjectSection, Thresholds, VoSpec, LEDGER_PATH, PROJECT_FILE,
};
pub use report::{status_report, Counts, StatusReport, StatusRow, UNTAGGED};

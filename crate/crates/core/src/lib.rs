//! Validation-obligation management for guarded-event machines.
//!
//! The crate parses machines in the `.vob` language, explores their state
//! spaces, checks LTL properties, relates machines through a refinement
//! lattice and tracks the status of validation obligations over time.

pub mod engine;
pub mod lang;
pub mod ltl;
pub mod refinement;
pub mod vo;

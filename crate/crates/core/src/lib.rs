//! Checks recorded execution traces against executable models.
//!
//! The pipeline ingests raw trace records, normalizes them into operation
//! traces, and then either replays them through a nondeterministic
//! guarded-command machine ([`replay`]) or evaluates finite-trace temporal
//! properties over state snapshots ([`ltl`]).

pub mod machine;
pub mod ltl;
pub mod models;
pub mod pipeline;
pub mod replay;
pub mod sim;
pub mod trace_model;
pub mod translate;

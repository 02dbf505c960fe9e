//! Records to verdict in one call: sort, drop duplicate records, finitize
//! session ids, project to operations and replay.

use thiserror::Error;

use crate::machine::Machine;
use crate::replay::{replay, ReplayError, ReplayOptions, Verdict};
use crate::trace_model::{finitize, project_ops, FinitizationMap, OpTrace, TraceError, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOptions {
    pub replay: ReplayOptions,
    pub dedup: bool,
    /// Field to finitize and the token prefix; `None` skips the stage.
    pub finitize: Option<(String, String)>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            replay: ReplayOptions::default(),
            dedup: true,
            finitize: Some(("session_id".to_string(), "ss".to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub trace: OpTrace,
    pub map: FinitizationMap,
    /// Records removed as duplicates.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineReport {
    pub normalized: Normalized,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Drops a record that repeats the previous record's session and operation.
/// Comparing sessions keeps back-to-back logins of one user from different
/// sessions, whose operation text is identical.
pub fn dedup_records(records: &[TraceRecord]) -> Vec<TraceRecord> {
    let mut out: Vec<TraceRecord> = Vec::with_capacity(records.len());
    for r in records {
        if let Some(prev) = out.last() {
            if prev.session_id == r.session_id && prev.bop_name == r.bop_name {
                continue;
            }
        }
        out.push(r.clone());
    }
    out
}

pub fn normalize(records: &[TraceRecord], opts: &PipelineOptions) -> Result<Normalized, TraceError> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.seq);
    let before = sorted.len();
    if opts.dedup {
        sorted = dedup_records(&sorted);
    }
    let dropped = before - sorted.len();
    let (sorted, map) = match &opts.finitize {
        Some((key, prefix)) => finitize(&sorted, key, prefix)?,
        None => (sorted, FinitizationMap::default()),
    };
    Ok(Normalized {
        trace: project_ops(&sorted)?,
        map,
        dropped,
    })
}

pub fn check_pipeline(
    m: &Machine,
    records: &[TraceRecord],
    opts: &PipelineOptions,
) -> Result<PipelineReport, PipelineError> {
    let normalized = normalize(records, opts)?;
    let verdict = replay(m, &normalized.trace, &opts.replay)?;
    Ok(PipelineReport { normalized, verdict })
}

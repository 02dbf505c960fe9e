//! Outcome and JSON report types shared by every subcommand.

use serde::Serialize;

pub const SCHEMA: &str = "tracecheck.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
    Error,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
            Status::Error => 65,
        }
    }

    /// Combined status of several checks: an error beats a failure, which
    /// beats an inconclusive result.
    pub fn worst(all: impl IntoIterator<Item = Status>) -> Status {
        all.into_iter().max().unwrap_or(Status::Pass)
    }
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub command: &'static str,
    pub status: Status,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, status: Status, body: T) -> Self {
        Report {
            schema: SCHEMA,
            command,
            status,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub index: usize,
    pub reason: &'static str,
    pub event: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub clauses: Vec<String>,
    pub frontier: Vec<FrontierState>,
}

#[derive(Debug, Serialize)]
pub struct FrontierState {
    pub state: String,
    pub enabled: Vec<String>,
}

/// Result of replaying one trace file.
#[derive(Debug, Serialize)]
pub struct TraceResult {
    pub trace: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub finitization: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Human-readable report, not serialized.
    #[serde(skip)]
    pub text: String,
}

impl TraceResult {
    pub fn error(trace: &str, msg: String) -> Self {
        TraceResult {
            trace: trace.to_string(),
            status: Status::Error,
            steps: None,
            final_states: None,
            expansions: None,
            dropped: None,
            finitization: Vec::new(),
            failure: None,
            text: format!("error: {msg}\n"),
            error: Some(msg),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReplayBody {
    pub machine: String,
    pub max_expansions: u64,
    pub results: Vec<TraceResult>,
}

#[derive(Debug, Serialize)]
pub struct LtlBody {
    pub formula: String,
    pub blocks: usize,
    pub holds: bool,
}

#[derive(Debug, Serialize)]
pub struct FormulaBody {
    pub formula: String,
}

#[derive(Debug, Serialize)]
pub struct AdmitsBody {
    pub milestones: Vec<String>,
    pub bound: usize,
    pub strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessBody>,
}

#[derive(Debug, Serialize)]
pub struct WitnessBody {
    pub steps: Vec<String>,
    pub positions: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct IngestBody {
    pub records: usize,
    pub dropped: usize,
    pub steps: usize,
    pub finitization: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct TranslateBody {
    pub rules: usize,
    pub records: usize,
    pub blocks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SimulateBody {
    pub out_dir: String,
    pub records: usize,
    pub sessions: Vec<String>,
    pub state_blocks: usize,
    pub faults: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ModelsBody {
    pub out_dir: String,
    pub files: Vec<String>,
}

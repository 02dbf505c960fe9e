mod report;

use std::env::VarError;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;
use tracecheck_core::ltl::{
    eval_finite, machine_admits, parse_defs, parse_formula, parse_state_trace, trace_to_formula,
    AdmitOptions, LtlError, PropDefs,
};
use tracecheck_core::machine::{parse_machine, Machine};
use tracecheck_core::pipeline::{check_pipeline, normalize, PipelineError, PipelineOptions};
use tracecheck_core::replay::{explain, replay, ReplayOptions, Verdict, DEFAULT_MAX_EXPANSIONS};
use tracecheck_core::sim::{inject_fault_report, simulate, SimConfig};
use tracecheck_core::trace_model::{parse_op_trace, parse_records, render_op_trace, render_records};
use tracecheck_core::translate::{apply_rules, parse_rules, Policy};
use tracecheck_core::{ltl::render_state_trace, models};

use report::*;

const MAX_EXPANSIONS_ENV: &str = "TRACECHECK_MAX_EXPANSIONS";
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser, Debug)]
#[command(name = "tracecheck", version)]
#[command(about = "Check implementation traces against a finite state-machine model")]
struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    report: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize a JSON-lines record log into an operation trace.
    Ingest(IngestArgs),
    /// Map record fields to model variables, producing a state trace.
    Translate(TranslateArgs),
    /// Replay operation traces through a machine.
    Replay(ReplayArgs),
    /// Evaluate a finite-trace LTL formula over a state trace.
    Ltl(LtlArgs),
    /// Print the eventually-chain over a list of propositions.
    #[command(name = "trace2ltl")]
    Trace2Ltl(Trace2LtlArgs),
    /// Search the machine for a run reaching milestone predicates in order.
    Admits(AdmitsArgs),
    /// Run the travel-agency simulator.
    Simulate(SimulateArgs),
    /// Records to verdict: sort, dedup, finitize, project and replay.
    CheckPipeline(CheckPipelineArgs),
    /// Write the bundled model and reference files to a directory.
    Models(ModelsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Translate(_) => "translate",
            Command::Replay(_) => "replay",
            Command::Ltl(_) => "ltl",
            Command::Trace2Ltl(_) => "trace2ltl",
            Command::Admits(_) => "admits",
            Command::Simulate(_) => "simulate",
            Command::CheckPipeline(_) => "check-pipeline",
            Command::Models(_) => "models",
        }
    }
}

#[derive(Args, Debug)]
struct NormalizeArgs {
    /// Keep records that repeat the previous record's session and operation.
    #[arg(long)]
    no_dedup: bool,
    /// Record field whose values are replaced by short tokens.
    #[arg(long, default_value = "session_id")]
    finitize_field: String,
    #[arg(long, default_value = "ss")]
    finitize_prefix: String,
    #[arg(long, conflicts_with_all = ["finitize_field", "finitize_prefix"])]
    no_finitize: bool,
}

impl NormalizeArgs {
    fn options(&self, max_expansions: u64) -> PipelineOptions {
        PipelineOptions {
            replay: ReplayOptions { max_expansions },
            dedup: !self.no_dedup,
            finitize: (!self.no_finitize)
                .then(|| (self.finitize_field.clone(), self.finitize_prefix.clone())),
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    records: PathBuf,
    /// Output trace file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    norm: NormalizeArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    PassThrough,
    Error,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    records: PathBuf,
    /// Output state-trace file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the policy declared in the rules file.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    machine: PathBuf,
    /// Trace file; repeat for several.
    #[arg(long, required = true, num_args = 1..)]
    trace: Vec<PathBuf>,
    /// Expansion cap; defaults to $TRACECHECK_MAX_EXPANSIONS or 1000000.
    #[arg(long)]
    max_expansions: Option<u64>,
    /// Trace files checked in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
}

#[derive(Args, Debug)]
struct LtlArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    defs: Option<PathBuf>,
    #[arg(long)]
    formula: String,
}

#[derive(Args, Debug)]
struct Trace2LtlArgs {
    #[arg(long, required = true, value_delimiter = ',')]
    props: Vec<String>,
}

#[derive(Args, Debug)]
struct AdmitsArgs {
    #[arg(long)]
    machine: PathBuf,
    /// Definitions file; every definition is a milestone, in file order.
    #[arg(long)]
    milestones: PathBuf,
    /// Use only these definitions, in this order.
    #[arg(long, value_delimiter = ',')]
    props: Option<Vec<String>>,
    /// Maximum number of steps.
    #[arg(long)]
    bound: usize,
    /// Let one state satisfy several consecutive milestones.
    #[arg(long)]
    lenient: bool,
    #[arg(long, default_value_t = AdmitOptions::default().max_states)]
    max_states: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML file with `SimConfig` keys; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CheckPipelineArgs {
    #[arg(long)]
    machine: PathBuf,
    /// JSON-lines record file; repeat for several.
    #[arg(long, required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    #[arg(long)]
    max_expansions: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    #[command(flatten)]
    norm: NormalizeArgs,
}

#[derive(Args, Debug)]
struct ModelsArgs {
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// What a subcommand produced.
struct Outcome {
    status: Status,
    text: String,
    json: String,
    /// Main output written to stdout when no `--out` was given; the report
    /// then goes to stderr.
    artifact: Option<String>,
}

impl Outcome {
    fn new<T: Serialize>(command: &'static str, status: Status, text: String, body: T) -> Self {
        Outcome {
            status,
            text,
            json: Report::new(command, status, body).to_json(),
            artifact: None,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| data(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| data(path, e))
}

fn load_machine(path: &Path) -> Result<Machine, CliError> {
    parse_machine(&read(path)?).map_err(|e| data(path, e))
}

fn load_defs(path: &Path) -> Result<PropDefs, CliError> {
    parse_defs(&read(path)?).map_err(|e| data(path, e))
}

/// Flag, then environment, then the built-in default.
fn max_expansions(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(MAX_EXPANSIONS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Usage(format!("{MAX_EXPANSIONS_ENV}: `{v}` is not a non-negative integer"))
        }),
        Err(VarError::NotPresent) => Ok(DEFAULT_MAX_EXPANSIONS),
        Err(e) => Err(CliError::Usage(format!("{MAX_EXPANSIONS_ENV}: {e}"))),
    }
}

/// Applies `f` to every item on up to `jobs` threads, keeping input order.
fn par_map<I: Sync, T: Send>(items: &[I], jobs: usize, f: impl Fn(&I) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|sc| {
        for _ in 0..jobs.min(items.len()) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .filter_map(|s| s.into_inner().unwrap_or_else(|p| p.into_inner()))
        .collect()
}

fn binding_text((name, args): &(String, Vec<tracecheck_core::machine::Val>)) -> String {
    if args.is_empty() {
        return name.clone();
    }
    let a: Vec<String> = args.iter().map(|v| v.to_string()).collect();
    format!("{name}({})", a.join(","))
}

fn verdict_result(m: &Machine, trace: &str, steps: usize, v: &Verdict) -> TraceResult {
    let mut r = TraceResult::error(trace, String::new());
    r.error = None;
    r.steps = Some(steps);
    r.text = explain(m, v);
    match v {
        Verdict::Pass { final_states } => {
            r.status = Status::Pass;
            r.final_states = Some(final_states.len());
        }
        Verdict::Inconclusive { expansions } => {
            r.status = Status::Inconclusive;
            r.expansions = Some(*expansions);
        }
        Verdict::Fail {
            index,
            reason,
            diagnosis,
        } => {
            r.status = Status::Fail;
            let clauses = match reason {
                tracecheck_core::replay::FailReason::InvariantViolated { clauses } => clauses.clone(),
                _ => Vec::new(),
            };
            r.failure = Some(Failure {
                index: *index,
                reason: reason.label(),
                event: diagnosis.attempted.as_ref().map(|e| e.to_string()),
                clauses,
                frontier: diagnosis
                    .frontier
                    .iter()
                    .zip(&diagnosis.enabled_here)
                    .map(|(s, en)| FrontierState {
                        state: m.render_state(s),
                        enabled: en.iter().map(binding_text).collect(),
                    })
                    .collect(),
            });
        }
    }
    r
}

fn results_text(results: &[TraceResult]) -> String {
    if let [only] = results {
        return only.text.clone();
    }
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "== {} ==", r.trace);
        out.push_str(&r.text);
    }
    out
}

fn cmd_replay(a: &ReplayArgs) -> Result<Outcome, CliError> {
    let m = load_machine(&a.machine)?;
    let opts = ReplayOptions {
        max_expansions: max_expansions(a.max_expansions)?,
    };
    let results = par_map(&a.trace, a.jobs as usize, |path| {
        let name = path.display().to_string();
        let t = match read(path).and_then(|s| parse_op_trace(&s).map_err(|e| data(path, e))) {
            Ok(t) => t,
            Err(e) => return TraceResult::error(&name, e.to_string()),
        };
        match replay(&m, &t, &opts) {
            Ok(v) => verdict_result(&m, &name, t.len(), &v),
            Err(e) => TraceResult::error(&name, format!("{name}: {e}")),
        }
    });
    let status = Status::worst(results.iter().map(|r| r.status));
    let text = results_text(&results);
    let body = ReplayBody {
        machine: a.machine.display().to_string(),
        max_expansions: opts.max_expansions,
        results,
    };
    Ok(Outcome::new("replay", status, text, body))
}

fn cmd_check_pipeline(a: &CheckPipelineArgs) -> Result<Outcome, CliError> {
    let m = load_machine(&a.machine)?;
    let max = max_expansions(a.max_expansions)?;
    let opts = a.norm.options(max);
    let results = par_map(&a.records, a.jobs as usize, |path| {
        let name = path.display().to_string();
        let records = match read(path).and_then(|s| parse_records(&s).map_err(|e| data(path, e))) {
            Ok(r) => r,
            Err(e) => return TraceResult::error(&name, e.to_string()),
        };
        match check_pipeline(&m, &records, &opts) {
            Ok(rep) => {
                let mut r = verdict_result(&m, &name, rep.normalized.trace.len(), &rep.verdict);
                r.dropped = Some(rep.normalized.dropped);
                r.finitization = rep.normalized.map.entries.clone();
                let _ = writeln!(r.text, "dropped {} duplicate record(s)", rep.normalized.dropped);
                r
            }
            Err(e @ (PipelineError::Trace(_) | PipelineError::Replay(_))) => {
                TraceResult::error(&name, format!("{name}: {e}"))
            }
        }
    });
    let status = Status::worst(results.iter().map(|r| r.status));
    let text = results_text(&results);
    let body = ReplayBody {
        machine: a.machine.display().to_string(),
        max_expansions: max,
        results,
    };
    Ok(Outcome::new("check-pipeline", status, text, body))
}

fn cmd_ingest(a: &IngestArgs) -> Result<Outcome, CliError> {
    let records = parse_records(&read(&a.records)?).map_err(|e| data(&a.records, e))?;
    let n = normalize(&records, &a.norm.options(DEFAULT_MAX_EXPANSIONS)).map_err(|e| data(&a.records, e))?;
    let rendered = render_op_trace(&n.trace);
    if let Some(out) = &a.out {
        write(out, &rendered)?;
    }
    let mut text = format!(
        "{} records, {} duplicate(s) dropped, {} steps\n",
        records.len(),
        n.dropped,
        n.trace.len()
    );
    for (raw, fin) in &n.map.entries {
        let _ = writeln!(text, "  {raw} -> {fin}");
    }
    let body = IngestBody {
        records: records.len(),
        dropped: n.dropped,
        steps: n.trace.len(),
        finitization: n.map.entries.clone(),
        out: a.out.as_ref().map(|p| p.display().to_string()),
    };
    let mut o = Outcome::new("ingest", Status::Pass, text, body);
    if a.out.is_none() {
        o.artifact = Some(rendered);
    }
    Ok(o)
}

fn cmd_translate(a: &TranslateArgs) -> Result<Outcome, CliError> {
    let mut rules = parse_rules(&read(&a.rules)?).map_err(|e| data(&a.rules, e))?;
    if let Some(p) = a.policy {
        rules.policy = match p {
            PolicyArg::PassThrough => Policy::PassThrough,
            PolicyArg::Error => Policy::Error,
        };
    }
    let records = parse_records(&read(&a.records)?).map_err(|e| data(&a.records, e))?;
    let states = apply_rules(&rules, &records).map_err(|e| data(&a.records, e))?;
    let rendered = render_state_trace(&states);
    if let Some(out) = &a.out {
        write(out, &rendered)?;
    }
    let text = format!(
        "{} rule(s), {} record(s), {} state block(s)\n",
        rules.rules.len(),
        records.len(),
        states.len()
    );
    let body = TranslateBody {
        rules: rules.rules.len(),
        records: records.len(),
        blocks: states.len(),
        out: a.out.as_ref().map(|p| p.display().to_string()),
    };
    let mut o = Outcome::new("translate", Status::Pass, text, body);
    if a.out.is_none() {
        o.artifact = Some(rendered);
    }
    Ok(o)
}

fn cmd_ltl(a: &LtlArgs) -> Result<Outcome, CliError> {
    let defs = match &a.defs {
        Some(p) => load_defs(p)?,
        None => PropDefs::default(),
    };
    let states = parse_state_trace(&read(&a.trace)?).map_err(|e| data(&a.trace, e))?;
    let f = parse_formula(&a.formula, &defs).map_err(|e| CliError::Data(format!("formula: {e}")))?;
    let holds = eval_finite(&f, &states, &defs).map_err(|e| data(&a.trace, e))?;
    let status = if holds { Status::Pass } else { Status::Fail };
    let text = format!(
        "{} over {} block(s): {}\n",
        f,
        states.len(),
        if holds { "holds" } else { "violated" }
    );
    let body = LtlBody {
        formula: f.to_string(),
        blocks: states.len(),
        holds,
    };
    Ok(Outcome::new("ltl", status, text, body))
}

fn cmd_trace2ltl(a: &Trace2LtlArgs) -> Result<Outcome, CliError> {
    let props: Vec<String> = a.props.iter().map(|p| p.trim().to_string()).collect();
    if let Some(bad) = props.iter().find(|p| !tracecheck_core::trace_model::is_symbol(p)) {
        return Err(CliError::Usage(format!("`{bad}` is not a proposition name")));
    }
    let f = trace_to_formula(&props).map_err(|e| CliError::Usage(e.to_string()))?;
    let formula = f.to_string();
    Ok(Outcome::new(
        "trace2ltl",
        Status::Pass,
        format!("{formula}\n"),
        FormulaBody { formula },
    ))
}

fn cmd_admits(a: &AdmitsArgs) -> Result<Outcome, CliError> {
    let m = load_machine(&a.machine)?;
    let defs = load_defs(&a.milestones)?;
    let names = a.props.clone().unwrap_or_else(|| defs.names());
    let mut props = Vec::with_capacity(names.len());
    for n in &names {
        let e = defs
            .get(n)
            .ok_or_else(|| CliError::Data(format!("{}: no definition `{n}`", a.milestones.display())))?;
        props.push(e.clone());
    }
    let opts = AdmitOptions {
        strict: !a.lenient,
        max_states: a.max_states,
    };
    let mut body = AdmitsBody {
        milestones: names,
        bound: a.bound,
        strict: opts.strict,
        witness: None,
    };
    let (status, text) = match machine_admits(&m, &props, a.bound, &opts) {
        Ok(Some(w)) => {
            let mut text = format!("witness with {} step(s)\n", w.trace.len());
            text.push_str(&render_op_trace(&w.trace));
            let pos: Vec<String> = w.positions.iter().map(usize::to_string).collect();
            let _ = writeln!(text, "milestones reached at states {}", pos.join(" "));
            body.witness = Some(WitnessBody {
                steps: w.trace.steps.iter().map(|e| e.to_string()).collect(),
                positions: w.positions,
            });
            (Status::Pass, text)
        }
        Ok(None) => (Status::Fail, format!("no run within {} step(s)\n", a.bound)),
        Err(LtlError::CapExceeded { visited }) => (
            Status::Inconclusive,
            format!("search cap reached after {visited} states\n"),
        ),
        Err(e) => return Err(data(&a.machine, e)),
    };
    Ok(Outcome::new("admits", status, text, body))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let cfg = match &a.config {
        Some(p) => SimConfig::from_toml(&read(p)?).map_err(|e| data(p, e))?,
        None => SimConfig::default(),
    };
    cfg.validate().map_err(|e| CliError::Data(e.to_string()))?;
    let out = simulate(&cfg).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| data(&a.out_dir, e))?;
    write(&a.out_dir.join("records.jsonl"), &render_records(&out.records))?;
    let mut files = Vec::new();
    for (k, trace) in out.sessions.values().enumerate() {
        let name = format!("session-{}.tr", k + 1);
        write(&a.out_dir.join(&name), &render_op_trace(trace))?;
        files.push(name);
    }
    write(&a.out_dir.join("states.states"), &render_state_trace(&out.states))?;
    let mut text = format!(
        "{} record(s), {} session trace(s), {} state block(s) written to {}\n",
        out.records.len(),
        files.len(),
        out.states.len(),
        a.out_dir.display()
    );
    text.push_str(&inject_fault_report(&cfg));
    let body = SimulateBody {
        out_dir: a.out_dir.display().to_string(),
        records: out.records.len(),
        sessions: files,
        state_blocks: out.states.len(),
        faults: cfg
            .faults
            .iter()
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
            .collect(),
    };
    Ok(Outcome::new("simulate", Status::Pass, text, body))
}

fn cmd_models(a: &ModelsArgs) -> Result<Outcome, CliError> {
    let files = [
        ("agency.mch", models::AGENCY_MACHINE),
        ("session.tr", models::AGENCY_SESSION_TRACE),
        ("booking.states", models::BOOKING_STATES),
        ("booking_extended.states", models::BOOKING_STATES_EXTENDED),
        ("booking.defs", models::BOOKING_DEFS),
        ("cards.corr", models::CARD_RULES),
        ("card_milestones.defs", models::CARD_MILESTONES),
    ];
    std::fs::create_dir_all(&a.out_dir).map_err(|e| data(&a.out_dir, e))?;
    let mut text = String::new();
    for (name, contents) in files {
        let p = a.out_dir.join(name);
        write(&p, contents)?;
        let _ = writeln!(text, "{}", p.display());
    }
    let body = ModelsBody {
        out_dir: a.out_dir.display().to_string(),
        files: files.iter().map(|(n, _)| n.to_string()).collect(),
    };
    Ok(Outcome::new("models", Status::Pass, text, body))
}

fn run(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Ltl(a) => cmd_ltl(a),
        Command::Trace2Ltl(a) => cmd_trace2ltl(a),
        Command::Admits(a) => cmd_admits(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::CheckPipeline(a) => cmd_check_pipeline(a),
        Command::Models(a) => cmd_models(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    match run(&cli.command) {
        Ok(o) => {
            let report = match cli.report {
                Format::Text => o.text,
                Format::Json => o.json + "\n",
            };
            match o.artifact {
                Some(a) => {
                    let _ = stdout.write_all(a.as_bytes());
                    let _ = stderr.write_all(report.as_bytes());
                }
                None => {
                    let _ = stdout.write_all(report.as_bytes());
                }
            }
            ExitCode::from(o.status.exit_code())
        }
        Err(e) => {
            let _ = writeln!(stderr, "tracecheck: {e}");
            if cli.report == Format::Json {
                let r = Report::new(cli.command.name(), Status::Error, ErrorBody { error: e.to_string() });
                let _ = writeln!(stdout, "{}", r.to_json());
            }
            ExitCode::from(e.code())
        }
    }
}

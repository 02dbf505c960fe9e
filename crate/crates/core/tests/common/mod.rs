#![allow(dead_code)]

use std::collections::HashSet;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use tracecheck_core::pipeline::dedup_records;
use tracecheck_core::trace_model::*;

pub fn symbol() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9_]{0,6}".prop_filter("reserved", |s| s != "true" && s != "false")
}

pub fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-99i64..100).prop_map(Value::Int),
        any::<bool>().prop_map(Value::Bool),
        symbol().prop_map(Value::Symbol),
    ]
}

pub fn event() -> impl Strategy<Value = OpEvent> {
    (
        symbol(),
        prop::collection::vec(value(), 0..4),
        prop::option::of(prop::collection::vec(prop_oneof![value(), Just(Value::Wildcard)], 1..3)),
    )
        .prop_map(|(name, args, outs)| OpEvent { name, args, outs })
}

pub fn op_trace() -> impl Strategy<Value = OpTrace> {
    (
        prop::option::of("[A-Z][A-Za-z0-9]{0,8}"),
        any::<bool>(),
        prop::collection::vec(event(), 0..12),
    )
        .prop_map(|(machine_name, initialise, steps)| OpTrace {
            machine_name,
            initialise,
            steps,
        })
}

/// Traces over a tiny alphabet so that adjacent repeats are common.
pub fn repetitive_trace() -> impl Strategy<Value = OpTrace> {
    let ev = prop::sample::select(vec!["a", "b"]).prop_flat_map(|n| {
        prop::sample::select(vec![0i64, 1]).prop_map(move |k| OpEvent::new(n, vec![Value::Int(k)]))
    });
    prop::collection::vec(ev, 0..20).prop_map(OpTrace::new)
}

pub fn token() -> impl Strategy<Value = String> {
    "[A-F][0-9A-F]{31}"
}

/// Records interleaving up to `n` sessions with 32-character ids; every
/// session id also appears as the first argument of its operation.
pub fn session_records(n: usize) -> impl Strategy<Value = Vec<TraceRecord>> {
    prop::collection::vec(token(), 1..=n).prop_flat_map(|pool| {
        let len = pool.len();
        prop::collection::vec((0..len, prop::sample::select(vec!["choice", "enterCard", "logout"])), 0..30)
            .prop_map(move |picks| {
                picks
                    .into_iter()
                    .enumerate()
                    .map(|(i, (k, op))| {
                        let mut r = TraceRecord::new(i as i64 * 3 + 1, format!("{op}({})", pool[k]));
                        r.session_id = pool[k].clone();
                        r
                    })
                    .collect()
            })
    })
}

pub type PropResult = Result<(), TestCaseError>;

pub fn dedup_is_idempotent(t: OpTrace) -> PropResult {
    let once = dedup_consecutive(&t);
    prop_assert_eq!(dedup_consecutive(&once), once.clone());
    prop_assert!(once.steps.windows(2).all(|w| w[0] != w[1]));
    prop_assert!(once.len() <= t.len());
    Ok(())
}

pub fn record_dedup_is_idempotent(recs: Vec<TraceRecord>) -> PropResult {
    let once = dedup_records(&recs);
    prop_assert_eq!(dedup_records(&once), once.clone());
    prop_assert!(once
        .windows(2)
        .all(|w| (&w[0].session_id, &w[0].bop_name) != (&w[1].session_id, &w[1].bop_name)));
    Ok(())
}

pub fn finitize_is_injective_in_first_appearance_order(recs: Vec<TraceRecord>) -> PropResult {
    let (out, map) = finitize(&recs, "session_id", "s").unwrap();
    let mut firsts: Vec<&str> = Vec::new();
    for r in &recs {
        if !firsts.contains(&r.session_id.as_str()) {
            firsts.push(&r.session_id);
        }
    }
    prop_assert_eq!(map.len(), firsts.len());
    for (i, raw) in firsts.iter().enumerate() {
        let want = format!("s{}", i + 1);
        prop_assert_eq!(map.get(raw), Some(want.as_str()));
    }
    let finite: HashSet<&str> = map.entries.iter().map(|(_, f)| f.as_str()).collect();
    prop_assert_eq!(finite.len(), map.len());
    for (a, b) in recs.iter().zip(&out) {
        prop_assert_eq!(map.get(&a.session_id), Some(b.session_id.as_str()));
        prop_assert!(!b.bop_name.contains(&a.session_id));
        prop_assert!(b.bop_name.contains(&b.session_id));
    }
    let (again, _) = finitize(&out, "session_id", "s").unwrap();
    prop_assert_eq!(again, out);
    Ok(())
}

pub fn op_trace_render_round_trips(t: OpTrace) -> PropResult {
    let text = render_op_trace(&t);
    prop_assert_eq!(parse_op_trace(&text).unwrap(), t);
    Ok(())
}

pub fn op_event_display_round_trips(e: OpEvent) -> PropResult {
    prop_assert_eq!(parse_op_event(&e.to_string()).unwrap(), e);
    Ok(())
}

pub fn records_render_round_trips(recs: Vec<TraceRecord>) -> PropResult {
    let text = render_records(&recs);
    prop_assert_eq!(parse_records(&text).unwrap(), recs);
    Ok(())
}

pub fn projection_keeps_one_step_per_record(recs: Vec<TraceRecord>) -> PropResult {
    let t = project_ops(&recs).unwrap();
    prop_assert_eq!(t.len(), recs.len());
    Ok(())
}

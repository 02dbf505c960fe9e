use proptest::prelude::*;

use super::*;
use crate::machine::{parse_machine, step};
use crate::models::{AGENCY_MACHINE, AGENCY_SESSION_TRACE};
use crate::trace_model::{parse_op_event, parse_op_trace};

fn agency() -> Machine {
    parse_machine(AGENCY_MACHINE).unwrap()
}

fn trace(src: &str) -> OpTrace {
    parse_op_trace(src).unwrap()
}

fn run(m: &Machine, t: &OpTrace) -> Verdict {
    replay(m, t, &ReplayOptions::default()).unwrap()
}

/// Both branches of `pick` are enabled, but only `v = 2` lets `finish` run.
const FORK: &str = "machine Fork
var x : 0..2
init x := 0
op pick
  choose v in {1, 2}
  pre x = 0
  eff x := v
end
op finish
  pre x = 2
  eff x := 0
end
";

#[test]
fn session_trace_passes() {
    let m = agency();
    let t = trace(AGENCY_SESSION_TRACE);
    let v = run(&m, &t);
    assert!(v.is_pass(), "{}", explain(&m, &v));
}

#[test]
fn empty_trace_passes_with_initial_states() {
    let m = agency();
    match run(&m, &OpTrace::default()) {
        Verdict::Pass { final_states } => assert_eq!(final_states, initial_states(&m).unwrap()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn skipped_card_entry_is_caught() {
    let m = agency();
    let mut t = trace(AGENCY_SESSION_TRACE);
    // Drop the card entry right before the first pickShop.
    let pick = t.steps.iter().position(|e| e.name == "pickShop").unwrap();
    assert_eq!(t.steps[pick - 1].name, "enterCard");
    t.steps.remove(pick - 1);
    match run(&m, &t) {
        Verdict::Fail { index, reason, .. } => {
            assert_eq!(index, pick);
            assert_eq!(
                reason,
                FailReason::InvariantViolated {
                    clauses: vec!["c5".into()]
                }
            );
        }
        other => panic!("{other:?}"),
    }

    let mut t = trace(AGENCY_SESSION_TRACE);
    t.steps.retain(|e| e.name != "enterCard");
    let v = run(&m, &t);
    assert!(matches!(
        v,
        Verdict::Fail {
            reason: FailReason::NotEnabled | FailReason::InvariantViolated { .. },
            ..
        }
    ));
}

#[test]
fn machine_name_is_checked() {
    let m = agency();
    let t = trace("machine('Other').\nlogin(user1).\n");
    assert_eq!(
        replay(&m, &t, &ReplayOptions::default()).unwrap_err(),
        ReplayError::MachineNameMismatch {
            expected: "TravelAgency".into(),
            found: "Other".into()
        }
    );
}

#[test]
fn unknown_op_and_bad_argument() {
    let m = agency();
    let v = run(&m, &trace("login(user1).\nfly(ss1).\n"));
    assert!(matches!(v, Verdict::Fail { index: 1, reason: FailReason::UnknownOp, .. }));
    let v = run(&m, &trace("login(user9).\n"));
    assert!(matches!(v, Verdict::Fail { index: 0, reason: FailReason::NotEnabled, .. }));
    let err = replay(&m, &trace("login(user1,user2).\n"), &ReplayOptions::default()).unwrap_err();
    assert!(matches!(err, ReplayError::Step { index: 0, .. }));
}

#[test]
fn output_mismatch_is_distinguished() {
    let src = "machine Out\nvar x : 0..1\ninit x := 0\nop get\n  out r : 0..3 := x + 1\nend\n";
    let m = parse_machine(src).unwrap();
    assert!(run(&m, &trace("get --> (1).\n")).is_pass());
    let v = run(&m, &trace("get --> (3).\n"));
    assert!(matches!(v, Verdict::Fail { index: 0, reason: FailReason::OutputMismatch, .. }));
}

#[test]
fn invariant_violation_outranks_not_enabled() {
    // Branch a=1 violates `safe`; branch a=2 leaves `go` disabled.
    let src = "machine Pri
var x : 0..3
init x := 0
invariant safe : x /= 1
op split
  choose a in {2, 3}
  pre x = 0
  eff x := a - 1
end
op go
  pre x = 3
  eff x := 0
end
";
    let m = parse_machine(src).unwrap();
    let v = run(&m, &trace("split.\n"));
    assert!(v.is_pass());
    let v = run(&m, &trace("split.\ngo.\n"));
    assert!(matches!(v, Verdict::Fail { index: 1, reason: FailReason::NotEnabled, .. }));
    let src2 = src.replace("choose a in {2, 3}", "choose a in {2}");
    let m2 = parse_machine(&src2).unwrap();
    let v = run(&m2, &trace("split.\n"));
    assert_eq!(
        v.fail_index(),
        Some(0),
        "single violating branch fails at the step"
    );
    assert!(matches!(v, Verdict::Fail { reason: FailReason::InvariantViolated { .. }, .. }));
}

#[test]
fn initial_violation_fails_at_zero() {
    let m = parse_machine("machine Bad\nvar x : bool\ninit x := false\ninvariant never : x\n").unwrap();
    match run(&m, &OpTrace::default()) {
        Verdict::Fail { index, reason, diagnosis } => {
            assert_eq!(index, 0);
            assert_eq!(reason, FailReason::InvariantViolated { clauses: vec!["never".into()] });
            assert!(diagnosis.attempted.is_none());
        }
        other => panic!("{other:?}"),
    }
}

/// Takes the first successor at every step, never reconsidering.
fn greedy(m: &Machine, t: &OpTrace) -> bool {
    let mut s = initial_states(m).unwrap().remove(0);
    for e in &t.steps {
        match step(m, &s, e).unwrap().into_iter().next() {
            Some(succ) => s = succ.state,
            None => return false,
        }
    }
    true
}

#[test]
fn backtracking_is_needed() {
    let m = parse_machine(FORK).unwrap();
    let t = trace("pick.\nfinish.\n");
    assert!(!greedy(&m, &t));
    assert!(run(&m, &t).is_pass());
}

#[test]
fn expansion_cap_gives_inconclusive() {
    let m = agency();
    let t = trace(AGENCY_SESSION_TRACE);
    let v = replay(&m, &t, &ReplayOptions { max_expansions: 5 }).unwrap();
    assert_eq!(v, Verdict::Inconclusive { expansions: 5 });
}

#[test]
fn explain_formats() {
    let m = agency();
    let pass = run(&m, &trace(AGENCY_SESSION_TRACE));
    assert_eq!(explain(&m, &pass), "PASS (2 final states)\n");

    let v = run(&m, &trace("login(user1).\nchoice(ss1).\nlogout(ss1).\n"));
    let text = explain(&m, &v);
    assert!(text.starts_with("FAIL at step 2: logout(ss1)\nreason: operation not enabled\nfrontier (1 states):\n"));
    assert!(text.contains("enabled: chooseService(ss1,H) chooseService(ss1,C) chooseService(ss1,U) login(user1) login(user2) login(user3)"), "{text}");

    let v = run(&m, &trace("login(user1).\nchoice(ss1).\nchooseService(ss1,H).\npickShop(ss1).\nrespBookRoom(ss1).\n"));
    let text = explain(&m, &v);
    let head: Vec<&str> = text.lines().take(3).collect();
    assert_eq!(
        head,
        [
            "FAIL at step 4: respBookRoom(ss1)",
            "reason: invariant violated",
            "  c5: forall s in SESSION : acted[s] -> cardValid[s]",
        ]
    );
}

#[test]
fn enumerate_small_machines() {
    let flip = parse_machine("machine Flip\nvar x : bool\ninit x := false\nop flip\n  eff x := !x\nend\n").unwrap();
    assert_eq!(enumerate_runs(&flip, 0, 100).unwrap(), vec![OpTrace::default()]);
    let runs = enumerate_runs(&flip, 2, 100).unwrap();
    let shown: Vec<String> = runs.iter().map(crate::trace_model::render_op_trace).collect();
    assert_eq!(shown, ["", "flip.\n", "flip.\nflip.\n"]);
    assert!(matches!(enumerate_runs(&flip, 5, 3), Err(EnumerateError::CapExceeded { .. })));
}

#[test]
fn verdicts_are_repeatable() {
    let m = agency();
    let t = trace("login(user1).\nchoice(ss1).\nchooseService(ss1,H).\nenterCard(ss1).\npickShop(ss1).\nrespBookRoom(ss1) --> (done).\n");
    let a = run(&m, &t);
    let b = run(&m, &t);
    assert_eq!(a, b);
    assert!(a.is_pass());
}

fn fork_event() -> impl Strategy<Value = OpEvent> {
    prop_oneof![
        Just(parse_op_event("pick").unwrap()),
        Just(parse_op_event("finish").unwrap()),
    ]
}

proptest! {
    #[test]
    fn oracle_equivalence_on_fork(steps in prop::collection::vec(fork_event(), 0..=6)) {
        let m = parse_machine(FORK).unwrap();
        let runs = enumerate_runs(&m, 6, 100_000).unwrap();
        let t = OpTrace::new(steps);
        prop_assert_eq!(run(&m, &t).is_pass(), describes_any(&runs, &t));
    }

    #[test]
    fn prefixes_pass_and_extensions_fail_no_later(
        steps in prop::collection::vec(fork_event(), 0..=8),
        extra in prop::collection::vec(fork_event(), 0..=3),
    ) {
        let m = parse_machine(FORK).unwrap();
        let t = OpTrace::new(steps);
        if let Verdict::Fail { index, .. } = run(&m, &t) {
            for k in 0..index {
                prop_assert!(run(&m, &t.prefix(k)).is_pass());
            }
            let mut longer = t.clone();
            longer.steps.extend(extra);
            prop_assert!(run(&m, &longer).fail_index().unwrap() <= index);
        }
    }
}

mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dedup_is_idempotent(t in common::repetitive_trace()) {
        common::dedup_is_idempotent(t)?;
    }

    #[test]
    fn record_dedup_is_idempotent(recs in common::session_records(3)) {
        common::record_dedup_is_idempotent(recs)?;
    }

    #[test]
    fn finitize_is_injective_in_first_appearance_order(recs in common::session_records(6)) {
        common::finitize_is_injective_in_first_appearance_order(recs)?;
    }

    #[test]
    fn op_trace_render_round_trips(t in common::op_trace()) {
        common::op_trace_render_round_trips(t)?;
    }

    #[test]
    fn op_event_display_round_trips(e in common::event()) {
        common::op_event_display_round_trips(e)?;
    }

    #[test]
    fn records_render_round_trips(recs in common::session_records(4)) {
        common::records_render_round_trips(recs)?;
    }

    #[test]
    fn projection_keeps_one_step_per_record(recs in common::session_records(4)) {
        common::projection_keeps_one_step_per_record(recs)?;
    }
}

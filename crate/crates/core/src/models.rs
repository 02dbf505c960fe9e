//! Model and reference files shipped with the crate.

/// The travel-agency machine.
pub const AGENCY_MACHINE: &str = include_str!("../models/agency.mch");
/// Sixteen-step operation trace of one user session.
pub const AGENCY_SESSION_TRACE: &str = include_str!("../models/session.tr");
/// State trace of a single successful hotel booking.
pub const BOOKING_STATES: &str = include_str!("../models/booking.states");
/// The booking trace followed by a failed second request.
pub const BOOKING_STATES_EXTENDED: &str = include_str!("../models/booking_extended.states");
/// `requested`, `available` and `allocate` over the booking variables.
pub const BOOKING_DEFS: &str = include_str!("../models/booking.defs");
/// Credit-card brand to card-bit correspondence.
pub const CARD_RULES: &str = include_str!("../models/cards.corr");
/// Milestones p1..p4: three wrong cards, then mc.
pub const CARD_MILESTONES: &str = include_str!("../models/card_milestones.defs");

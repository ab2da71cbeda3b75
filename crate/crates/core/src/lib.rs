//! Matching engine for surplus-food redistribution.
//!
//! Donors offer food, receivers request it and volunteers carry it. Requests
//! flow through an intake pool (meal splitting, re-queue of rejected matches),
//! are classified by perishability, and are then matched per iteration:
//! volunteers are assigned to donor meals to maximise how far the food can
//! travel, preferences are restricted to currently eligible agents and
//! augmented with unlisted ones, and receivers are served in
//! earliest-requirement-end order with a two-level tie-break on event time
//! and arrival sequence.
//!
//! The crate is `no_std` (it needs `alloc`). Concurrency, IO and the
//! simulation harness live in the `fdrm` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod classify;
pub mod domain;
pub mod geometry;
pub mod intake;
pub mod matching;

pub use classify::{trifurcate, ClassifiedLists};
pub use domain::{
    tie_break_compare, AgentId, ArrivalSeq, DonationRequest, FoodTaxonomy, FoodType, Grams,
    Location, Match, MatchId, MatchSet, MatchStatus, Minutes, Perishability, Request,
    RequestId, RequirementRequest, Role, Sequencer, ThresholdError, Thresholds, TimeWindow,
    VolunteerRequest,
};
pub use geometry::{DeliveryRecord, Route};
pub use intake::{ActivePool, Intake, IntakeError};
pub use matching::engine::{Engine, EngineError, IterationReport, Lifecycle};
pub use matching::{
    ca_dtb, club_matches, CaDtbOutcome, DisplayGroup, MatchPolicy, PreferenceList,
    PreferenceMode, ReceiverSort,
};

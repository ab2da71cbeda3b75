//! Core data model: agents' requests, thresholds, food taxonomy, the arrival
//! sequencer and the double tie-break comparator.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::geometry::Route;

/// Minutes since the scenario epoch.
pub type Minutes = i64;
pub type Grams = u64;
pub type AgentId = u64;

/// A point on the planar city map, in kilometres.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for Location {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Location> for [f64; 2] {
    fn from(l: Location) -> Self {
        [l.x, l.y]
    }
}

/// Closed interval of minutes, `start <= end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Minutes,
    pub end: Minutes,
}

impl TimeWindow {
    pub fn new(start: Minutes, end: Minutes) -> Self {
        debug_assert!(start <= end, "time window start after end");
        Self { start, end }
    }

    pub fn is_valid(&self) -> bool {
        self.start <= self.end
    }

    pub fn contains(&self, t: Minutes) -> bool {
        self.start <= t && t <= self.end
    }

    /// Length of the intersection, zero when disjoint.
    pub fn overlap(&self, other: &TimeWindow) -> Minutes {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        (hi - lo).max(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoodType {
    FreshlyCooked,
    FrozenUncooked,
    FrozenCooked,
    PackagedSolid,
    PackagedLiquid,
    FreshProduce,
    FruitsAndVegetables,
    Mixed,
}

impl FoodType {
    pub const ALL: [FoodType; 8] = [
        FoodType::FreshlyCooked,
        FoodType::FrozenUncooked,
        FoodType::FrozenCooked,
        FoodType::PackagedSolid,
        FoodType::PackagedLiquid,
        FoodType::FreshProduce,
        FoodType::FruitsAndVegetables,
        FoodType::Mixed,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perishability {
    Perishable,
    NonPerishable,
}

/// Total map from food type to perishability class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoodTaxonomy {
    classes: [Perishability; 8],
}

impl Default for FoodTaxonomy {
    fn default() -> Self {
        use Perishability::*;
        let mut classes = [Perishable; 8];
        classes[FoodType::PackagedSolid.index()] = NonPerishable;
        classes[FoodType::PackagedLiquid.index()] = NonPerishable;
        Self { classes }
    }
}

impl FoodTaxonomy {
    /// Reassigns one food type. `Mixed` always stays perishable.
    pub fn with(mut self, food: FoodType, class: Perishability) -> Self {
        if food != FoodType::Mixed {
            self.classes[food.index()] = class;
        }
        self
    }

    pub fn perishability(&self, food: FoodType) -> Perishability {
        if food == FoodType::Mixed {
            return Perishability::Perishable;
        }
        self.classes[food.index()]
    }
}

pub fn perishability(taxonomy: &FoodTaxonomy, food: FoodType) -> Perishability {
    taxonomy.perishability(food)
}

/// Server-issued position in the global total order of requests.
///
/// Zero means "not yet sequenced"; the sequencer starts at 1.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ArrivalSeq(pub u64);

/// Monotone arrival counter, safe to share between threads.
#[derive(Debug, Default)]
pub struct Sequencer {
    last: AtomicU64,
}

impl Sequencer {
    pub const fn new() -> Self {
        Self { last: AtomicU64::new(0) }
    }

    pub fn next_arrival_seq(&self) -> ArrivalSeq {
        let prev = self.last.fetch_add(1, AtomicOrdering::Relaxed);
        assert!(prev != u64::MAX, "arrival sequencer exhausted");
        ArrivalSeq(prev + 1)
    }

    /// Last value handed out, zero if none.
    pub fn last(&self) -> ArrivalSeq {
        ArrivalSeq(self.last.load(AtomicOrdering::Relaxed))
    }
}

/// `(agent, per-agent request number, meal number)`; meal 0 is an unsplit request.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct RequestId {
    pub agent: AgentId,
    pub request: u32,
    #[serde(default)]
    pub meal: u32,
}

impl RequestId {
    pub const fn new(agent: AgentId, request: u32) -> Self {
        Self { agent, request, meal: 0 }
    }

    pub const fn with_meal(self, meal: u32) -> Self {
        Self { meal, ..self }
    }

    /// The submitted request this meal was cut from.
    pub const fn parent(self) -> RequestId {
        Self { meal: 0, ..self }
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.meal == 0 {
            write!(f, "{}.{}", self.agent, self.request)
        } else {
            write!(f, "{}.{}.{}", self.agent, self.request, self.meal)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonationRequest {
    pub id: RequestId,
    #[serde(default)]
    pub arrival: ArrivalSeq,
    pub location: Location,
    pub food: FoodType,
    pub amount: Grams,
    #[serde(default)]
    pub packaging: alloc::string::String,
    pub prep_or_expiry: Minutes,
    #[serde(default)]
    pub image_ref: alloc::string::String,
    pub window: TimeWindow,
    #[serde(default)]
    pub preferred_receivers: Vec<AgentId>,
    #[serde(default)]
    pub vicinity: f64,
}

impl DonationRequest {
    /// Donors are ordered by donation start.
    pub fn event_time(&self) -> Minutes {
        self.window.start
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequirementRequest {
    pub id: RequestId,
    #[serde(default)]
    pub arrival: ArrivalSeq,
    pub location: Location,
    pub food: FoodType,
    pub amount: Grams,
    /// Grams promised by live (displayed or accepted) matches.
    #[serde(default)]
    pub allocated: Grams,
    pub window: TimeWindow,
    #[serde(default)]
    pub preferred_donors: Vec<AgentId>,
}

impl RequirementRequest {
    pub fn remaining_amount(&self) -> Grams {
        self.amount.saturating_sub(self.allocated)
    }

    /// Receivers are ordered by requirement end.
    pub fn event_time(&self) -> Minutes {
        self.window.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolunteerRequest {
    pub id: RequestId,
    #[serde(default)]
    pub arrival: ArrivalSeq,
    pub route: Route,
    pub motored: bool,
    pub ac: bool,
    pub payload_capacity: Grams,
    /// Payload reserved for assigned meals.
    #[serde(default)]
    pub committed: Grams,
    pub window: TimeWindow,
    /// Receiver agents this volunteer is restricted to; empty means any.
    #[serde(default)]
    pub receivers: Vec<AgentId>,
}

impl VolunteerRequest {
    pub fn remaining_payload(&self) -> Grams {
        self.payload_capacity.saturating_sub(self.committed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Donation(DonationRequest),
    Requirement(RequirementRequest),
    Volunteer(VolunteerRequest),
}

impl Request {
    pub fn id(&self) -> RequestId {
        match self {
            Request::Donation(d) => d.id,
            Request::Requirement(r) => r.id,
            Request::Volunteer(v) => v.id,
        }
    }

    pub fn arrival(&self) -> ArrivalSeq {
        match self {
            Request::Donation(d) => d.arrival,
            Request::Requirement(r) => r.arrival,
            Request::Volunteer(v) => v.arrival,
        }
    }

    pub fn set_arrival(&mut self, seq: ArrivalSeq) {
        match self {
            Request::Donation(d) => d.arrival = seq,
            Request::Requirement(r) => r.arrival = seq,
            Request::Volunteer(v) => v.arrival = seq,
        }
    }

    pub fn window(&self) -> TimeWindow {
        match self {
            Request::Donation(d) => d.window,
            Request::Requirement(r) => r.window,
            Request::Volunteer(v) => v.window,
        }
    }

    pub fn role(&self) -> Role {
        match self {
            Request::Donation(_) => Role::Donor,
            Request::Requirement(_) => Role::Receiver,
            Request::Volunteer(_) => Role::Volunteer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Donor,
    Volunteer,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThresholdError {
    #[error("threshold {0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("vicinity thresholds must satisfy t_p_nm <= t_p_m <= t_np")]
    VicinityOrder,
}

/// The ten system parameters. Distances in km, times in minutes, `t_l` and
/// `t_a` in percent, `t_m` in grams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t_o: Minutes,
    pub t_l: f64,
    pub t_m: Grams,
    pub t_a: f64,
    pub t_p_nm: f64,
    pub t_p_m: f64,
    pub t_np: f64,
    pub t_d: Minutes,
    pub t_r: Minutes,
    pub t_w: Minutes,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            t_o: 15,
            t_l: 5.0,
            t_m: 1000,
            t_a: 20.0,
            t_p_nm: 5.0,
            t_p_m: 20.0,
            t_np: 100.0,
            t_d: 120,
            t_r: 180,
            t_w: 15,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ThresholdError> {
        let checks: [(&'static str, bool); 10] = [
            ("t_o", self.t_o > 0),
            ("t_l", self.t_l > 0.0),
            ("t_m", self.t_m > 0),
            ("t_a", self.t_a > 0.0),
            ("t_p_nm", self.t_p_nm > 0.0),
            ("t_p_m", self.t_p_m > 0.0),
            ("t_np", self.t_np > 0.0),
            ("t_d", self.t_d > 0),
            ("t_r", self.t_r > 0),
            ("t_w", self.t_w > 0),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(ThresholdError::NotPositive(name));
        }
        if !(self.t_p_nm <= self.t_p_m && self.t_p_m <= self.t_np) {
            return Err(ThresholdError::VicinityOrder);
        }
        Ok(())
    }
}

/// Orders `(event_time, arrival)` pairs: earlier event first, then earlier
/// arrival. Arrival sequences are unique, so equal pairs mean the same
/// request was compared with itself, which is a caller bug.
pub fn tie_break_compare(a: (Minutes, ArrivalSeq), b: (Minutes, ArrivalSeq)) -> Ordering {
    match a.0.cmp(&b.0) {
        Ordering::Equal => {
            assert_ne!(a.1, b.1, "arrival sequence shared by two requests");
            a.1.cmp(&b.1)
        }
        other => other,
    }
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct MatchId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    PendingVolunteerOnly,
    Displayed,
    Accepted,
    Rejected,
    Expired,
}

/// Which involved agents have accepted a displayed match.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptances {
    pub donor: bool,
    pub volunteer: bool,
    pub receiver: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub id: MatchId,
    pub donor: RequestId,
    pub volunteer: Option<RequestId>,
    pub receiver: Option<RequestId>,
    pub vicinity: f64,
    pub status: MatchStatus,
    pub created_at: Minutes,
    pub delivered_amount: Grams,
    #[serde(default)]
    pub acceptances: Acceptances,
    #[serde(default)]
    pub requeued: bool,
}

impl Match {
    pub fn deadline(&self, thresholds: &Thresholds) -> Minutes {
        self.created_at + thresholds.t_w
    }

    pub fn involves(&self, role: Role) -> bool {
        match role {
            Role::Donor => true,
            Role::Volunteer => self.volunteer.is_some(),
            Role::Receiver => self.receiver.is_some(),
        }
    }

    pub fn accepted_by_all(&self) -> bool {
        self.acceptances.donor
            && (self.volunteer.is_none() || self.acceptances.volunteer)
            && (self.receiver.is_none() || self.acceptances.receiver)
    }
}

/// All matches produced so far, plus the live match of each donor meal.
#[derive(Clone, Debug, Default)]
pub struct MatchSet {
    matches: BTreeMap<MatchId, Match>,
    live_by_donor: BTreeMap<RequestId, MatchId>,
}

impl MatchSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a match; panics if the donor meal already has a live match.
    pub fn insert(&mut self, m: Match) {
        let prev = self.live_by_donor.insert(m.donor, m.id);
        assert!(prev.is_none(), "donor meal {} already has a live match", m.donor);
        self.matches.insert(m.id, m);
    }

    pub fn get(&self, id: MatchId) -> Option<&Match> {
        self.matches.get(&id)
    }

    pub fn get_mut(&mut self, id: MatchId) -> Option<&mut Match> {
        self.matches.get_mut(&id)
    }

    pub fn live_for_donor(&self, donor: RequestId) -> Option<&Match> {
        self.live_by_donor.get(&donor).and_then(|id| self.matches.get(id))
    }

    /// Drops the donor's live-match entry once its match was rejected or expired.
    pub fn release_donor(&mut self, donor: RequestId) {
        self.live_by_donor.remove(&donor);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Match> {
        self.matches.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Match> {
        self.matches.values_mut()
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn count_status(&self, status: MatchStatus) -> usize {
        self.matches.values().filter(|m| m.status == status).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sequencer_starts_at_one_and_increments() {
        let s = Sequencer::new();
        let got: Vec<u64> = (0..5).map(|_| s.next_arrival_seq().0).collect();
        assert_eq!(got, vec![1, 2, 3, 4, 5]);
        assert_eq!(s.last(), ArrivalSeq(5));
    }

    #[test]
    fn default_taxonomy() {
        let t = FoodTaxonomy::default();
        assert_eq!(t.perishability(FoodType::Mixed), Perishability::Perishable);
        assert_eq!(t.perishability(FoodType::PackagedSolid), Perishability::NonPerishable);
        assert_eq!(t.perishability(FoodType::PackagedLiquid), Perishability::NonPerishable);
        assert_eq!(t.perishability(FoodType::FreshlyCooked), Perishability::Perishable);
        for f in FoodType::ALL {
            let _ = perishability(&t, f);
        }
    }

    #[test]
    fn mixed_cannot_be_reclassified() {
        let t = FoodTaxonomy::default()
            .with(FoodType::Mixed, Perishability::NonPerishable)
            .with(FoodType::FrozenCooked, Perishability::NonPerishable);
        assert_eq!(t.perishability(FoodType::Mixed), Perishability::Perishable);
        assert_eq!(t.perishability(FoodType::FrozenCooked), Perishability::NonPerishable);
    }

    #[test]
    fn tie_break_examples() {
        assert_eq!(tie_break_compare((100, ArrivalSeq(7)), (90, ArrivalSeq(2))), Ordering::Greater);
        assert_eq!(tie_break_compare((100, ArrivalSeq(7)), (100, ArrivalSeq(2))), Ordering::Greater);
        assert_eq!(tie_break_compare((90, ArrivalSeq(9)), (100, ArrivalSeq(2))), Ordering::Less);
    }

    #[test]
    #[should_panic(expected = "arrival sequence shared")]
    fn tie_break_rejects_duplicate_arrival() {
        tie_break_compare((100, ArrivalSeq(7)), (100, ArrivalSeq(7)));
    }

    #[test]
    fn default_thresholds_are_valid() {
        let t = Thresholds::default();
        assert!(t.validate().is_ok());
        let bad = Thresholds { t_p_m: 200.0, ..t };
        assert_eq!(bad.validate(), Err(ThresholdError::VicinityOrder));
        let zero = Thresholds { t_w: 0, ..t };
        assert_eq!(zero.validate(), Err(ThresholdError::NotPositive("t_w")));
    }

    #[test]
    fn window_overlap() {
        let a = TimeWindow::new(0, 100);
        assert_eq!(a.overlap(&TimeWindow::new(85, 200)), 15);
        assert_eq!(a.overlap(&TimeWindow::new(150, 200)), 0);
        assert_eq!(a.overlap(&TimeWindow::new(10, 20)), 10);
    }

    #[test]
    fn remaining_amounts_saturate() {
        let r = RequirementRequest {
            id: RequestId::new(1, 1),
            arrival: ArrivalSeq(1),
            location: Location::default(),
            food: FoodType::Mixed,
            amount: 500,
            allocated: 1000,
            window: TimeWindow::new(0, 10),
            preferred_donors: vec![],
        };
        assert_eq!(r.remaining_amount(), 0);
    }
}

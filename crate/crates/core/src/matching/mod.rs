//! Chronological acceptance with double tie-breaking.
//!
//! One call to [`ca_dtb`] handles a single perishability class for one
//! iteration:
//!
//! 1. donors and receivers are gated by their `t_d` / `t_r` lead times;
//! 2. each current donor meal gets the eligible volunteer that lets the food
//!    travel furthest (its *vicinity*), or a default vicinity without one;
//! 3. receiver preferences are restricted to time-eligible donors and donor
//!    preferences to the receivers in their neighbourhood, both augmented
//!    with unlisted agents at a shared lowest rank;
//! 4. receivers, earliest requirement end first, repeatedly take the
//!    available donor that ranks them best until served.
//!
//! [`engine::Engine`] chains two calls (perishable first) per iteration.

pub mod engine;
pub mod preference;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{
    AgentId, DonationRequest, FoodTaxonomy, Grams, Match, MatchId, MatchStatus, Minutes,
    Perishability, RequestId, RequirementRequest, Thresholds, VolunteerRequest,
};
use crate::geometry::{
    default_vicinity, distance, within_dropoff_band, within_pickup_radius,
};

pub use preference::{extract_augment, original_preference, PreferenceList};

/// Order in which receivers are served.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverSort {
    Start,
    #[default]
    End,
}

/// Whether submitted preferences are updated with run-time eligibility.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceMode {
    Raw,
    #[default]
    Eligible,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub receiver_sort: ReceiverSort,
    pub preferences: PreferenceMode,
}

/// Everything a matching pass needs besides the requests themselves.
#[derive(Clone, Copy, Debug)]
pub struct MatchContext {
    pub now: Minutes,
    pub thresholds: Thresholds,
    pub taxonomy: FoodTaxonomy,
    pub policy: MatchPolicy,
}

/// Source of fresh match ids.
#[derive(Clone, Debug, Default)]
pub struct MatchIds(u64);

impl MatchIds {
    pub fn starting_at(first: u64) -> Self {
        Self(first.saturating_sub(1))
    }

    pub fn next_id(&mut self) -> MatchId {
        self.0 += 1;
        MatchId(self.0)
    }
}

pub fn is_current_donor(d: &DonationRequest, now: Minutes, th: &Thresholds) -> bool {
    d.window.start - th.t_d <= now && now <= d.window.end - th.t_d
}

pub fn is_current_receiver(r: &RequirementRequest, now: Minutes, th: &Thresholds) -> bool {
    r.window.start - th.t_r <= now && now <= r.window.end - th.t_r
}

pub fn current_donors<'a>(
    donors: &'a [DonationRequest],
    now: Minutes,
    th: &Thresholds,
) -> Vec<&'a DonationRequest> {
    donors.iter().filter(|d| is_current_donor(d, now, th)).collect()
}

pub fn current_receivers<'a>(
    receivers: &'a [RequirementRequest],
    now: Minutes,
    th: &Thresholds,
) -> Vec<&'a RequirementRequest> {
    receivers.iter().filter(|r| is_current_receiver(r, now, th)).collect()
}

/// How far `d` can travel with `v`. Non-perishable food and air-conditioned
/// transport reach the volunteer's destination; otherwise the perishable
/// limit for the transport type applies.
pub fn vicinity_candidate(
    d: &DonationRequest,
    v: &VolunteerRequest,
    food: Perishability,
    th: &Thresholds,
) -> f64 {
    if food == Perishability::NonPerishable || v.ac {
        distance(v.route.destination, d.location)
    } else if v.motored {
        th.t_p_m
    } else {
        th.t_p_nm
    }
}

/// Vicinity a donor ends up with when `v` is assigned.
fn floored_vicinity(d: &DonationRequest, v: &VolunteerRequest, food: Perishability, th: &Thresholds) -> f64 {
    vicinity_candidate(d, v, food, th).max(default_vicinity(food, Some(v.motored), th))
}

fn can_deliver(
    d: &DonationRequest,
    v: Option<&VolunteerRequest>,
    vicinity: f64,
    r: &RequirementRequest,
    th: &Thresholds,
) -> bool {
    if distance(r.location, d.location) > vicinity {
        return false;
    }
    match v {
        None => true,
        Some(v) => {
            within_dropoff_band(r.location, &v.route, th.t_l)
                && (v.receivers.is_empty() || v.receivers.contains(&r.id.agent))
        }
    }
}

fn volunteer_eligible(
    d: &DonationRequest,
    v: &VolunteerRequest,
    receivers: &[RequirementRequest],
    food: Perishability,
    th: &Thresholds,
) -> bool {
    let payload_ok = v.remaining_payload() as f64 * 100.0 >= (100.0 + th.t_a) * d.amount as f64;
    if !payload_ok
        || !within_pickup_radius(d.location, &v.route, th.t_l)
        || v.window.overlap(&d.window) < th.t_o
    {
        return false;
    }
    if v.receivers.is_empty() {
        return true;
    }
    let vicinity = floored_vicinity(d, v, food, th);
    receivers.iter().any(|r| {
        v.receivers.contains(&r.id.agent)
            && d.window.end <= r.window.end
            && can_deliver(d, Some(v), vicinity, r, th)
    })
}

/// Indices into `vols` of the volunteers that may carry `d`.
///
/// `receivers` is the set of current receivers of the donor's class; a
/// volunteer restricted to named receivers qualifies only if one of them
/// could actually be reached through it.
pub fn eligible_volunteers(
    d: &DonationRequest,
    vols: &[VolunteerRequest],
    receivers: &[RequirementRequest],
    food: Perishability,
    th: &Thresholds,
) -> Vec<usize> {
    (0..vols.len())
        .filter(|&i| volunteer_eligible(d, &vols[i], receivers, food, th))
        .collect()
}

/// Result of volunteer assignment for one class.
#[derive(Clone, Debug, Default)]
pub struct VolunteerAssignment {
    /// One volunteer-only pending match per donor, in donor order.
    pub matches: Vec<Match>,
    /// Volunteers taken out of the market, payload committed.
    pub assigned: Vec<VolunteerRequest>,
    pub remaining: Vec<VolunteerRequest>,
}

fn donor_order(a: &DonationRequest, b: &DonationRequest) -> Ordering {
    crate::domain::tie_break_compare((a.event_time(), a.arrival), (b.event_time(), b.arrival))
}

/// Gives each donor the eligible volunteer with the largest vicinity
/// (earliest arrival among equals) and sets `donor.vicinity`.
///
/// Donors are processed in the given order. A volunteer serving one meal is
/// offered first to the next meal of the same donation while its payload
/// lasts; otherwise it is out of the market for the rest of the pass.
pub fn assign_volunteers(
    donors: &mut [DonationRequest],
    vols: Vec<VolunteerRequest>,
    receivers: &[RequirementRequest],
    food: Perishability,
    ctx: &MatchContext,
    ids: &mut MatchIds,
) -> VolunteerAssignment {
    let th = &ctx.thresholds;
    let mut vols = vols;
    let mut taken = alloc::vec![false; vols.len()];
    let mut last: Option<(RequestId, usize)> = None;
    let mut matches = Vec::with_capacity(donors.len());

    for d in donors.iter_mut() {
        d.vicinity = 0.0;
        let mut chosen = None;
        if let Some((parent, vi)) = last {
            if parent == d.id.parent()
                && d.id.meal != 0
                && volunteer_eligible(d, &vols[vi], receivers, food, th)
            {
                chosen = Some(vi);
            }
        }
        if chosen.is_none() {
            let mut best = 0.0;
            for vi in 0..vols.len() {
                if taken[vi] || !volunteer_eligible(d, &vols[vi], receivers, food, th) {
                    continue;
                }
                let cand = vicinity_candidate(d, &vols[vi], food, th);
                if cand > best || chosen.is_none() && cand >= best {
                    best = cand;
                    chosen = Some(vi);
                }
            }
        }
        let volunteer = chosen.map(|vi| {
            let v = &mut vols[vi];
            taken[vi] = true;
            v.committed += d.amount;
            d.vicinity = floored_vicinity(d, v, food, th);
            v.id
        });
        if volunteer.is_none() {
            d.vicinity = default_vicinity(food, None, th);
        }
        last = chosen.map(|vi| (d.id.parent(), vi));
        matches.push(Match {
            id: ids.next_id(),
            donor: d.id,
            volunteer,
            receiver: None,
            vicinity: d.vicinity,
            status: MatchStatus::PendingVolunteerOnly,
            created_at: ctx.now,
            delivered_amount: 0,
            acceptances: Default::default(),
            requeued: false,
        });
    }

    let mut assigned = Vec::new();
    let mut remaining = Vec::new();
    for (v, t) in vols.into_iter().zip(taken) {
        if t {
            assigned.push(v);
        } else {
            remaining.push(v);
        }
    }
    VolunteerAssignment { matches, assigned, remaining }
}

/// Donors `r` may receive from: same perishability class and donation
/// ending no later than the requirement.
pub fn eligible_donors_for(
    r: &RequirementRequest,
    donors: &[DonationRequest],
    taxonomy: &FoodTaxonomy,
) -> Vec<usize> {
    let class = taxonomy.perishability(r.food);
    (0..donors.len())
        .filter(|&i| {
            let d = &donors[i];
            d.window.end <= r.window.end && taxonomy.perishability(d.food) == class
        })
        .collect()
}

/// Receivers (indices into `receivers`) inside the donor's vicinity and, if
/// a volunteer carries the meal, inside its drop-off band and receiver list.
pub fn donor_neighbourhood(
    d: &DonationRequest,
    receivers: &[RequirementRequest],
    volunteer: Option<&VolunteerRequest>,
    th: &Thresholds,
) -> Vec<usize> {
    (0..receivers.len())
        .filter(|&j| can_deliver(d, volunteer, d.vicinity, &receivers[j], th))
        .collect()
}

/// One receiver taking one donor meal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub receiver: RequestId,
    pub donor: RequestId,
    /// Rank the donor gives this receiver.
    pub position: u32,
}

/// Preferences and selections of one pass, for post-hoc checking.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MarketTrace {
    pub donors: Vec<RequestId>,
    pub receivers: Vec<RequestId>,
    pub donor_prefs: Vec<PreferenceList>,
    pub receiver_prefs: Vec<PreferenceList>,
    /// Remaining requirement of each receiver before the pass.
    pub receiver_needs: Vec<Grams>,
    pub donor_amounts: Vec<Grams>,
    /// In selection order.
    pub selections: Vec<Selection>,
}

/// Candidate donor for a receiver, compared by the donor's rank of the
/// receiver, then the receiver's rank of the donor, then donor event time,
/// then arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub position: u32,
    pub receiver_rank: u32,
    pub event_time: Minutes,
    pub arrival: crate::domain::ArrivalSeq,
}

impl Candidate {
    fn key(&self) -> (u32, u32, Minutes, crate::domain::ArrivalSeq) {
        (self.position, self.receiver_rank, self.event_time, self.arrival)
    }
}

/// Index of the best candidate, if any.
pub fn best_candidate(candidates: &[Candidate]) -> Option<usize> {
    (0..candidates.len()).min_by_key(|&i| candidates[i].key())
}

fn build_preferences(
    donors: &[DonationRequest],
    receivers: &[RequirementRequest],
    volunteers: &[Option<&VolunteerRequest>],
    ctx: &MatchContext,
) -> (Vec<PreferenceList>, Vec<PreferenceList>) {
    let build = |original: &[AgentId], eligible: &[(RequestId, crate::domain::ArrivalSeq)]| match ctx
        .policy
        .preferences
    {
        PreferenceMode::Eligible => extract_augment(original, eligible),
        PreferenceMode::Raw => original_preference(original, eligible),
    };
    let donor_prefs = donors
        .iter()
        .zip(volunteers)
        .map(|(d, v)| {
            let hood: Vec<_> = donor_neighbourhood(d, receivers, *v, &ctx.thresholds)
                .into_iter()
                .map(|j| (receivers[j].id, receivers[j].arrival))
                .collect();
            build(&d.preferred_receivers, &hood)
        })
        .collect();
    let receiver_prefs = receivers
        .iter()
        .map(|r| {
            let eligible: Vec<_> = eligible_donors_for(r, donors, &ctx.taxonomy)
                .into_iter()
                .map(|i| (donors[i].id, donors[i].arrival))
                .collect();
            build(&r.preferred_donors, &eligible)
        })
        .collect();
    (donor_prefs, receiver_prefs)
}

fn rank_matrix(
    prefs: &[PreferenceList],
    other: &BTreeMap<RequestId, usize>,
    width: usize,
) -> Vec<Option<u32>> {
    let mut m = alloc::vec![None; prefs.len() * width];
    for (row, pl) in prefs.iter().enumerate() {
        for (id, rank) in &pl.entries {
            if let Some(&col) = other.get(id) {
                m[row * width + col] = Some(*rank);
            }
        }
    }
    m
}

/// Serves receivers in policy order; each repeatedly takes the best
/// candidate donor until its requirement is met or no candidate remains.
/// The last meal is taken even if it overshoots.
///
/// Returns, per selection, `(receiver index, donor index)` together with the
/// trace of the pass. Receivers' `allocated` amounts are updated.
pub fn match_receivers(
    donors: &[DonationRequest],
    receivers: &mut [RequirementRequest],
    donor_prefs: Vec<PreferenceList>,
    receiver_prefs: Vec<PreferenceList>,
    policy: MatchPolicy,
) -> (Vec<(usize, usize)>, MarketTrace) {
    let d_index: BTreeMap<RequestId, usize> =
        donors.iter().enumerate().map(|(i, d)| (d.id, i)).collect();
    let r_index: BTreeMap<RequestId, usize> =
        receivers.iter().enumerate().map(|(j, r)| (r.id, j)).collect();
    let nd = donors.len();
    let nr = receivers.len();
    let donor_rank = rank_matrix(&donor_prefs, &r_index, nr);
    let receiver_rank = rank_matrix(&receiver_prefs, &d_index, nd);

    let mut order: Vec<usize> = (0..nr).collect();
    order.sort_by(|&a, &b| {
        let key = |j: usize| {
            let r = &receivers[j];
            let t = match policy.receiver_sort {
                ReceiverSort::End => r.window.end,
                ReceiverSort::Start => r.window.start,
            };
            (t, r.arrival)
        };
        crate::domain::tie_break_compare(key(a), key(b))
    });

    let mut trace = MarketTrace {
        donors: donors.iter().map(|d| d.id).collect(),
        receivers: receivers.iter().map(|r| r.id).collect(),
        receiver_needs: receivers.iter().map(|r| r.remaining_amount()).collect(),
        donor_amounts: donors.iter().map(|d| d.amount).collect(),
        donor_prefs,
        receiver_prefs,
        selections: Vec::new(),
    };

    let mut available = alloc::vec![true; nd];
    let mut picks = Vec::new();
    for j in order {
        while receivers[j].remaining_amount() > 0 {
            let mut best: Option<(usize, Candidate)> = None;
            for i in 0..nd {
                if !available[i] {
                    continue;
                }
                let (Some(position), Some(receiver_rank)) =
                    (donor_rank[i * nr + j], receiver_rank[j * nd + i])
                else {
                    continue;
                };
                let c = Candidate {
                    position,
                    receiver_rank,
                    event_time: donors[i].event_time(),
                    arrival: donors[i].arrival,
                };
                if best.is_none_or(|(_, b)| c.key() < b.key()) {
                    best = Some((i, c));
                }
            }
            let Some((i, c)) = best else { break };
            available[i] = false;
            receivers[j].allocated += donors[i].amount;
            picks.push((j, i));
            trace.selections.push(Selection {
                receiver: receivers[j].id,
                donor: donors[i].id,
                position: c.position,
            });
        }
    }
    (picks, trace)
}

/// Output of one matching pass over a perishability class.
#[derive(Clone, Debug, Default)]
pub struct CaDtbOutcome {
    /// Matches with a receiver, status `Displayed`.
    pub displayed: Vec<Match>,
    /// Donors that got no receiver; their volunteers were released.
    pub volunteer_only: Vec<Match>,
    pub engaged_donors: Vec<DonationRequest>,
    pub engaged_receivers: Vec<RequirementRequest>,
    pub engaged_volunteers: Vec<VolunteerRequest>,
    pub leftover_donors: Vec<DonationRequest>,
    pub leftover_receivers: Vec<RequirementRequest>,
    pub leftover_volunteers: Vec<VolunteerRequest>,
    pub trace: MarketTrace,
}

/// One matching pass for one perishability class.
///
/// Requests that end up in a displayed match are returned as *engaged*;
/// everything else comes back as leftover for the next iteration.
pub fn ca_dtb(
    donors: Vec<DonationRequest>,
    receivers: Vec<RequirementRequest>,
    vols: Vec<VolunteerRequest>,
    food: Perishability,
    ctx: &MatchContext,
    ids: &mut MatchIds,
) -> CaDtbOutcome {
    let th = &ctx.thresholds;
    let (mut cur_donors, mut leftover_donors): (Vec<_>, Vec<_>) =
        donors.into_iter().partition(|d| is_current_donor(d, ctx.now, th));
    let (mut cur_receivers, mut leftover_receivers): (Vec<_>, Vec<_>) = receivers
        .into_iter()
        .partition(|r| is_current_receiver(r, ctx.now, th) && r.remaining_amount() > 0);
    cur_donors.sort_by(donor_order);

    let assignment = assign_volunteers(&mut cur_donors, vols, &cur_receivers, food, ctx, ids);
    let mut assigned = assignment.assigned;
    let mut matches = assignment.matches;
    let vol_index: BTreeMap<RequestId, usize> =
        assigned.iter().enumerate().map(|(k, v)| (v.id, k)).collect();

    let (donor_prefs, receiver_prefs) = {
        let per_donor: Vec<Option<&VolunteerRequest>> = matches
            .iter()
            .map(|m| m.volunteer.map(|id| &assigned[vol_index[&id]]))
            .collect();
        build_preferences(&cur_donors, &cur_receivers, &per_donor, ctx)
    };
    let (picks, trace) =
        match_receivers(&cur_donors, &mut cur_receivers, donor_prefs, receiver_prefs, ctx.policy);

    let mut receiver_engaged = alloc::vec![false; cur_receivers.len()];
    for (j, i) in picks {
        let m = &mut matches[i];
        m.receiver = Some(cur_receivers[j].id);
        m.delivered_amount = cur_donors[i].amount;
        m.status = MatchStatus::Displayed;
        receiver_engaged[j] = true;
    }

    let mut vol_engaged = alloc::vec![false; assigned.len()];
    let mut out = CaDtbOutcome { trace, ..Default::default() };
    for (d, m) in cur_donors.into_iter().zip(matches) {
        if m.status == MatchStatus::Displayed {
            if let Some(v) = m.volunteer {
                vol_engaged[vol_index[&v]] = true;
            }
            out.engaged_donors.push(d);
            out.displayed.push(m);
        } else {
            if let Some(v) = m.volunteer {
                assigned[vol_index[&v]].committed -= d.amount;
            }
            leftover_donors.push(d);
            out.volunteer_only.push(m);
        }
    }
    for (r, engaged) in cur_receivers.into_iter().zip(receiver_engaged) {
        if engaged {
            out.engaged_receivers.push(r);
        } else {
            leftover_receivers.push(r);
        }
    }
    let mut leftover_volunteers = assignment.remaining;
    for (v, engaged) in assigned.into_iter().zip(vol_engaged) {
        if engaged {
            out.engaged_volunteers.push(v);
        } else {
            leftover_volunteers.push(v);
        }
    }
    leftover_donors.sort_by_key(|d| d.arrival);
    leftover_receivers.sort_by_key(|r| r.arrival);
    leftover_volunteers.sort_by_key(|v| v.arrival);
    out.leftover_donors = leftover_donors;
    out.leftover_receivers = leftover_receivers;
    out.leftover_volunteers = leftover_volunteers;
    out
}

/// Matches shown to the agents as one record: same donor agent, volunteer
/// and receiver, different meals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplayGroup {
    pub donor_agent: AgentId,
    pub volunteer: Option<RequestId>,
    pub receiver: Option<RequestId>,
    pub matches: Vec<MatchId>,
    pub amount: Grams,
}

pub fn club_matches(matches: &[Match]) -> Vec<DisplayGroup> {
    let mut groups: Vec<DisplayGroup> = Vec::new();
    let mut index: BTreeMap<(AgentId, Option<RequestId>, Option<RequestId>), usize> =
        BTreeMap::new();
    for m in matches {
        let key = (m.donor.agent, m.volunteer, m.receiver);
        let k = *index.entry(key).or_insert_with(|| {
            groups.push(DisplayGroup {
                donor_agent: key.0,
                volunteer: key.1,
                receiver: key.2,
                matches: Vec::new(),
                amount: 0,
            });
            groups.len() - 1
        });
        groups[k].matches.push(m.id);
        groups[k].amount += m.delivered_amount;
    }
    groups
}

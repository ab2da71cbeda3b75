//! Iteration driver: expiry and re-queue, drain, classification, the
//! perishable then non-perishable matching passes, and the accept / reject
//! lifecycle of displayed matches.
//!
//! A request is in exactly one place at a time: the intake pool, the carry
//! lists, a pending (displayed, unresolved) match, or a terminal state.
//! Receivers and volunteers engaged in several matches stay pending until
//! all of them resolve; a receiver still short of its requirement then goes
//! back to the pool, and a volunteer that delivered nothing does too.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ca_dtb, club_matches, DisplayGroup, MarketTrace, MatchContext, MatchIds, MatchPolicy};
use crate::classify::{trifurcate, ClassifiedLists};
use crate::domain::{
    DonationRequest, FoodTaxonomy, Grams, MatchId, MatchSet, MatchStatus, Minutes,
    Perishability, Request, RequestId, RequirementRequest, Role, Thresholds, VolunteerRequest,
};
use crate::geometry::{off_route_overhead, DeliveryRecord};
use crate::intake::{expire_stale_matches, requeue_rejected, ActivePool, Intake, IntakeError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("unknown match {0:?}")]
    UnknownMatch(MatchId),
    #[error("match {0:?} is not awaiting acceptance")]
    NotDisplayed(MatchId),
    #[error("{1:?} is not part of match {0:?}")]
    NotInvolved(MatchId, Role),
    #[error("acceptance of match {0:?} after its deadline")]
    Late(MatchId),
    #[error(transparent)]
    Intake(#[from] IntakeError),
}

/// Where a request currently is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Queued,
    Carried,
    Pending,
    /// Donor meal delivered, volunteer made a delivery, or receiver fully
    /// served.
    Served,
    /// Receiver whose gate closed after receiving part of its requirement.
    PartiallyServed,
    Unserved,
}

impl Lifecycle {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Served | Self::PartiallyServed | Self::Unserved)
    }
}

/// An accepted donor-to-receiver transfer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub match_id: MatchId,
    pub donor: RequestId,
    pub receiver: RequestId,
    pub volunteer: Option<RequestId>,
    pub amount: Grams,
    pub food: Perishability,
    pub route: Option<DeliveryRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct IterationReport {
    pub now: Minutes,
    pub drained: usize,
    pub expired: Vec<MatchId>,
    pub requeued: usize,
    pub lapsed: usize,
    /// Display groups, perishable first.
    pub perishable: Vec<DisplayGroup>,
    pub non_perishable: Vec<DisplayGroup>,
    pub volunteer_only: usize,
    pub traces: Vec<(Perishability, MarketTrace)>,
}

impl IterationReport {
    /// Groups in display order.
    pub fn groups(&self) -> impl Iterator<Item = &DisplayGroup> {
        self.perishable.iter().chain(&self.non_perishable)
    }
}

#[derive(Clone, Debug)]
struct Pending<T> {
    request: T,
    open: usize,
    delivered: bool,
}

/// Mechanism state across iterations.
#[derive(Debug)]
pub struct Engine<P: Intake = ActivePool> {
    thresholds: Thresholds,
    taxonomy: FoodTaxonomy,
    policy: MatchPolicy,
    pool: P,
    carry: ClassifiedLists,
    donors: BTreeMap<RequestId, (DonationRequest, Perishability)>,
    receivers: BTreeMap<RequestId, Pending<RequirementRequest>>,
    volunteers: BTreeMap<RequestId, Pending<VolunteerRequest>>,
    matches: MatchSet,
    terminal: BTreeMap<RequestId, Lifecycle>,
    deliveries: Vec<Delivery>,
    ids: MatchIds,
}

impl<P: Intake> Engine<P> {
    pub fn new(pool: P, thresholds: Thresholds, taxonomy: FoodTaxonomy, policy: MatchPolicy) -> Self {
        Self {
            thresholds,
            taxonomy,
            policy,
            pool,
            carry: ClassifiedLists::default(),
            donors: BTreeMap::new(),
            receivers: BTreeMap::new(),
            volunteers: BTreeMap::new(),
            matches: MatchSet::new(),
            terminal: BTreeMap::new(),
            deliveries: Vec::new(),
            ids: MatchIds::default(),
        }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn pool(&self) -> &P {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut P {
        &mut self.pool
    }

    pub fn carry(&self) -> &ClassifiedLists {
        &self.carry
    }

    pub fn matches(&self) -> &MatchSet {
        &self.matches
    }

    pub fn terminal(&self) -> &BTreeMap<RequestId, Lifecycle> {
        &self.terminal
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    pub fn lifecycle(&self, id: RequestId) -> Option<Lifecycle> {
        if let Some(t) = self.terminal.get(&id) {
            return Some(*t);
        }
        if self.donors.contains_key(&id)
            || self.receivers.contains_key(&id)
            || self.volunteers.contains_key(&id)
        {
            return Some(Lifecycle::Pending);
        }
        if self.carry.ids().any(|c| c == id) {
            return Some(Lifecycle::Carried);
        }
        self.pool.contains(id).then_some(Lifecycle::Queued)
    }

    /// Nothing queued, carried or awaiting acceptance.
    pub fn is_quiescent(&self) -> bool {
        self.pool.is_empty()
            && self.carry.is_empty()
            && self.donors.is_empty()
            && self.receivers.is_empty()
            && self.volunteers.is_empty()
    }

    /// Runs one mechanism iteration at time `now`.
    pub fn iteration(&mut self, now: Minutes) -> IterationReport {
        let mut report = IterationReport { now, ..Default::default() };

        report.expired = expire_stale_matches(&mut self.matches, now, &self.thresholds);
        for &id in &report.expired {
            report.requeued += self.resolve_failed(id);
        }

        let snapshot = self.pool.drain_snapshot();
        report.drained = snapshot.len();
        let mut lists =
            trifurcate(snapshot, core::mem::take(&mut self.carry), &self.taxonomy);
        report.lapsed = self.prune_lapsed(&mut lists, now);

        let ctx = MatchContext {
            now,
            thresholds: self.thresholds,
            taxonomy: self.taxonomy,
            policy: self.policy,
        };
        for class in [Perishability::Perishable, Perishability::NonPerishable] {
            let (donors, receivers) = lists.take_class(class);
            let vols = core::mem::take(&mut lists.v);
            let out = ca_dtb(donors, receivers, vols, class, &ctx, &mut self.ids);
            lists.put_class(class, out.leftover_donors, out.leftover_receivers);
            lists.v = out.leftover_volunteers;
            report.volunteer_only += out.volunteer_only.len();

            let groups = club_matches(&out.displayed);
            for d in out.engaged_donors {
                self.donors.insert(d.id, (d, class));
            }
            for r in out.engaged_receivers {
                self.receivers.insert(r.id, Pending { request: r, open: 0, delivered: false });
            }
            for v in out.engaged_volunteers {
                self.volunteers.insert(v.id, Pending { request: v, open: 0, delivered: false });
            }
            for m in out.displayed {
                if let Some(r) = m.receiver {
                    self.receivers.get_mut(&r).expect("engaged receiver").open += 1;
                }
                if let Some(v) = m.volunteer {
                    self.volunteers.get_mut(&v).expect("engaged volunteer").open += 1;
                }
                self.matches.insert(m);
            }
            match class {
                Perishability::Perishable => report.perishable = groups,
                Perishability::NonPerishable => report.non_perishable = groups,
            }
            report.traces.push((class, out.trace));
        }
        self.carry = lists;
        report
    }

    fn prune_lapsed(&mut self, lists: &mut ClassifiedLists, now: Minutes) -> usize {
        let th = self.thresholds;
        let before = lists.len();
        let terminal = &mut self.terminal;
        let mut lapse_donors = |v: &mut Vec<DonationRequest>| {
            v.retain(|d| {
                let live = now <= d.window.end - th.t_d;
                if !live {
                    terminal.insert(d.id, Lifecycle::Unserved);
                }
                live
            })
        };
        lapse_donors(&mut lists.pfd);
        lapse_donors(&mut lists.npfd);
        let mut lapse_receivers = |v: &mut Vec<RequirementRequest>| {
            v.retain(|r| {
                let live = now <= r.window.end - th.t_r && r.remaining_amount() > 0;
                if !live {
                    let state = if r.remaining_amount() == 0 {
                        Lifecycle::Served
                    } else if r.allocated > 0 {
                        Lifecycle::PartiallyServed
                    } else {
                        Lifecycle::Unserved
                    };
                    terminal.insert(r.id, state);
                }
                live
            })
        };
        lapse_receivers(&mut lists.pfr);
        lapse_receivers(&mut lists.npfr);
        lists.v.retain(|v| {
            let live = now <= v.window.end && v.remaining_payload() > 0;
            if !live {
                terminal.insert(v.id, Lifecycle::Unserved);
            }
            live
        });
        before - lists.len()
    }

    /// Records one agent's acceptance. Returns the resulting status, which
    /// is `Accepted` once every involved agent has accepted.
    pub fn accept(&mut self, id: MatchId, role: Role, at: Minutes) -> Result<MatchStatus, EngineError> {
        let th = self.thresholds;
        let m = self.matches.get_mut(id).ok_or(EngineError::UnknownMatch(id))?;
        if m.status != MatchStatus::Displayed {
            return Err(EngineError::NotDisplayed(id));
        }
        if !m.involves(role) {
            return Err(EngineError::NotInvolved(id, role));
        }
        if at > m.deadline(&th) {
            return Err(EngineError::Late(id));
        }
        match role {
            Role::Donor => m.acceptances.donor = true,
            Role::Volunteer => m.acceptances.volunteer = true,
            Role::Receiver => m.acceptances.receiver = true,
        }
        if m.accepted_by_all() {
            m.status = MatchStatus::Accepted;
            self.resolve_accepted(id);
        }
        Ok(self.matches.get(id).map(|m| m.status).unwrap_or(MatchStatus::Accepted))
    }

    /// Any involved agent declining cancels the match and requeues it.
    /// Returns the number of requests put back in the pool.
    pub fn reject(&mut self, id: MatchId, at: Minutes) -> Result<usize, EngineError> {
        let th = self.thresholds;
        let m = self.matches.get_mut(id).ok_or(EngineError::UnknownMatch(id))?;
        if m.status != MatchStatus::Displayed {
            return Err(EngineError::NotDisplayed(id));
        }
        if at > m.deadline(&th) {
            return Err(EngineError::Late(id));
        }
        m.status = MatchStatus::Rejected;
        Ok(self.resolve_failed(id))
    }

    fn resolve_accepted(&mut self, id: MatchId) {
        let m = self.matches.get(id).expect("resolved match exists").clone();
        let (donor, food) = self.donors.remove(&m.donor).expect("pending donor");
        self.terminal.insert(donor.id, Lifecycle::Served);
        let receiver = m.receiver.expect("displayed match has a receiver");
        let dropoff = self.receivers[&receiver].request.location;
        let mut route = None;
        if let Some(vid) = m.volunteer {
            let v = self.volunteers.get_mut(&vid).expect("pending volunteer");
            v.delivered = true;
            route = off_route_overhead(&v.request.route, donor.location, dropoff).ok();
        }
        self.deliveries.push(Delivery {
            match_id: id,
            donor: donor.id,
            receiver,
            volunteer: m.volunteer,
            amount: m.delivered_amount,
            food,
            route,
        });
        let r = self.receivers.get_mut(&receiver).expect("pending receiver");
        r.delivered = true;
        r.open -= 1;
        let mut back = Vec::new();
        if r.open == 0 {
            back.extend(self.finish_receiver(receiver));
        }
        if let Some(vid) = m.volunteer {
            let v = self.volunteers.get_mut(&vid).expect("pending volunteer");
            v.open -= 1;
            if v.open == 0 {
                back.extend(self.finish_volunteer(vid));
            }
        }
        for r in back {
            self.pool.reinsert(r);
        }
    }

    fn resolve_failed(&mut self, id: MatchId) -> usize {
        let m = self.matches.get(id).expect("resolved match exists").clone();
        self.matches.release_donor(m.donor);
        let mut involved = Vec::new();
        let (donor, _) = self.donors.remove(&m.donor).expect("pending donor");
        involved.push(Request::Donation(donor));
        if let Some(rid) = m.receiver {
            let r = self.receivers.get_mut(&rid).expect("pending receiver");
            r.request.allocated -= m.delivered_amount;
            r.open -= 1;
            if r.open == 0 {
                involved.extend(self.finish_receiver(rid));
            }
        }
        if let Some(vid) = m.volunteer {
            let v = self.volunteers.get_mut(&vid).expect("pending volunteer");
            v.request.committed -= m.delivered_amount;
            v.open -= 1;
            if v.open == 0 {
                involved.extend(self.finish_volunteer(vid));
            }
        }
        let m = self.matches.get_mut(id).expect("resolved match exists");
        requeue_rejected(m, involved, &mut self.pool).expect("match is rejected or expired")
    }

    fn finish_receiver(&mut self, id: RequestId) -> Option<Request> {
        let r = self.receivers.remove(&id).expect("pending receiver");
        if r.request.remaining_amount() == 0 {
            self.terminal.insert(id, Lifecycle::Served);
            None
        } else {
            Some(Request::Requirement(r.request))
        }
    }

    fn finish_volunteer(&mut self, id: RequestId) -> Option<Request> {
        let v = self.volunteers.remove(&id).expect("pending volunteer");
        if v.delivered {
            self.terminal.insert(id, Lifecycle::Served);
            None
        } else {
            Some(Request::Volunteer(v.request))
        }
    }
}

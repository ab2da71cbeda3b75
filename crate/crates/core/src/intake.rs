//! Request intake: validation, meal splitting, the active pool and re-queue
//! of requests whose matches were rejected or expired.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::domain::{
    ArrivalSeq, DonationRequest, Grams, Match, MatchId, MatchSet, MatchStatus, Minutes,
    Request, RequestId, Sequencer, Thresholds,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntakeError {
    #[error("duplicate request {0}")]
    Duplicate(RequestId),
    #[error("invalid amount on request {0}")]
    InvalidAmount(RequestId),
    #[error("invalid time window on request {0}")]
    InvalidWindow(RequestId),
    #[error("illegal requeue of match {0:?}")]
    IllegalRequeue(MatchId),
}

/// Where drained requests come from and where requeued ones go back to.
pub trait Intake {
    /// Puts a request back with its original arrival sequence. Returns
    /// `false` if it was already queued.
    fn reinsert(&mut self, request: Request) -> bool;

    /// Everything queued right now, in arrival order.
    fn drain_snapshot(&mut self) -> Vec<Request>;

    fn is_empty(&self) -> bool;

    fn contains(&self, id: RequestId) -> bool;
}

/// Cuts a donation into meals: `amount / t_m` pieces of `t_m` grams with the
/// remainder folded into the last one. Below `2 * t_m` the donation is
/// returned unsplit.
pub fn split_into_meals(donation: DonationRequest, t_m: Grams) -> Vec<DonationRequest> {
    if t_m == 0 || donation.amount < 2 * t_m {
        return alloc::vec![donation];
    }
    let pieces = donation.amount / t_m;
    let last = donation.amount - (pieces - 1) * t_m;
    (1..=pieces)
        .map(|k| {
            let mut meal = donation.clone();
            meal.id = donation.id.with_meal(k as u32);
            meal.amount = if k == pieces { last } else { t_m };
            meal
        })
        .collect()
}

/// Single-threaded active-request queue keyed by arrival sequence.
#[derive(Debug, Default, Clone)]
pub struct ActivePool {
    queue: BTreeMap<ArrivalSeq, Request>,
    queued: BTreeSet<RequestId>,
    seen: BTreeSet<RequestId>,
}

impl ActivePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Validates, splits donations into meals, stamps arrival sequences and
    /// queues the result. Returns the ids of the queued pieces.
    pub fn submit_request(
        &mut self,
        raw: Request,
        seq: &Sequencer,
        th: &Thresholds,
    ) -> Result<Vec<RequestId>, IntakeError> {
        let id = raw.id();
        if !raw.window().is_valid() {
            return Err(IntakeError::InvalidWindow(id));
        }
        let amount_ok = match &raw {
            Request::Donation(d) => d.amount > 0,
            Request::Requirement(r) => r.amount > 0,
            Request::Volunteer(v) => v.payload_capacity > 0,
        };
        if !amount_ok {
            return Err(IntakeError::InvalidAmount(id));
        }
        if self.seen.contains(&id) {
            return Err(IntakeError::Duplicate(id));
        }

        let pieces: Vec<Request> = match raw {
            Request::Donation(d) => split_into_meals(d, th.t_m)
                .into_iter()
                .map(Request::Donation)
                .collect(),
            other => alloc::vec![other],
        };
        if pieces.iter().any(|p| self.seen.contains(&p.id())) {
            return Err(IntakeError::Duplicate(id));
        }
        self.seen.insert(id);

        let mut ids = Vec::with_capacity(pieces.len());
        for mut piece in pieces {
            piece.set_arrival(seq.next_arrival_seq());
            self.seen.insert(piece.id());
            ids.push(piece.id());
            self.reinsert(piece);
        }
        Ok(ids)
    }
}

impl Intake for ActivePool {
    fn reinsert(&mut self, request: Request) -> bool {
        if !self.queued.insert(request.id()) {
            return false;
        }
        let prev = self.queue.insert(request.arrival(), request);
        debug_assert!(prev.is_none(), "arrival sequence reused in pool");
        true
    }

    fn drain_snapshot(&mut self) -> Vec<Request> {
        self.queued.clear();
        core::mem::take(&mut self.queue).into_values().collect()
    }

    fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn contains(&self, id: RequestId) -> bool {
        self.queued.contains(&id)
    }
}

/// Marks a rejected or expired match as requeued and puts the given
/// involved requests back into the pool. Returns how many were queued.
pub fn requeue_rejected<P: Intake + ?Sized>(
    m: &mut Match,
    involved: Vec<Request>,
    pool: &mut P,
) -> Result<usize, IntakeError> {
    if m.requeued || !matches!(m.status, MatchStatus::Rejected | MatchStatus::Expired) {
        return Err(IntakeError::IllegalRequeue(m.id));
    }
    m.requeued = true;
    Ok(involved.into_iter().filter(|r| pool.reinsert(r.clone())).count())
}

/// Moves displayed matches past their acceptance deadline to `Expired`.
pub fn expire_stale_matches(
    matches: &mut MatchSet,
    now: Minutes,
    th: &Thresholds,
) -> Vec<MatchId> {
    let mut expired = Vec::new();
    for m in matches.iter_mut() {
        if m.status == MatchStatus::Displayed && now > m.deadline(th) && !m.accepted_by_all() {
            m.status = MatchStatus::Expired;
            expired.push(m.id);
        }
    }
    expired
}

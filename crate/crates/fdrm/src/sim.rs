//! Discrete-time simulation: submissions are fed to the pool at their
//! submit minute, the engine runs once per tick, and every displayed group
//! gets a response from the acceptance model.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use fdrm_core::intake::split_into_meals;
use fdrm_core::matching::engine::Delivery;
use fdrm_core::{
    AgentId, DeliveryRecord, Engine, FoodTaxonomy, Grams, Lifecycle, MatchId, MatchPolicy,
    MatchStatus, Minutes, Perishability, Request, RequestId, Role,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pool::SharedPool;
use crate::scenario::{Counts, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("simulation did not settle within {iterations} iterations (clock at {now}, {pending} requests still active)")]
    NoTermination { iterations: usize, now: Minutes, pending: usize },
    #[error("invalid acceptance model: {0}")]
    InvalidAcceptance(String),
    #[error("tick must be positive")]
    InvalidTick,
}

/// How agents respond to a displayed group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceptanceModel {
    /// Probability that some involved agent declines.
    pub reject_prob: f64,
    /// Probability that nobody responds and the match expires.
    pub ignore_prob: f64,
    /// Responses arrive uniformly within this many minutes of display.
    pub max_delay: Minutes,
    pub seed: u64,
}

impl Default for AcceptanceModel {
    fn default() -> Self {
        Self { reject_prob: 0.0, ignore_prob: 0.0, max_delay: 0, seed: 0 }
    }
}

impl AcceptanceModel {
    pub fn rejecting(reject_prob: f64, seed: u64) -> Self {
        Self { reject_prob, seed, ..Self::default() }
    }

    fn validate(&self, t_w: Minutes) -> Result<(), SimError> {
        let p = |x: f64| (0.0..=1.0).contains(&x);
        if !p(self.reject_prob) || !p(self.ignore_prob) || self.reject_prob + self.ignore_prob > 1.0 {
            return Err(SimError::InvalidAcceptance("probabilities must lie in [0, 1] and sum to at most 1".into()));
        }
        if !(0..=t_w).contains(&self.max_delay) {
            return Err(SimError::InvalidAcceptance(format!("delay must lie in [0, {t_w}]")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub tick: Minutes,
    pub max_iterations: usize,
    /// Record, per agent, every agent that appeared in its mechanism
    /// preference lists. Needed for manipulation analysis.
    pub collect_universes: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { tick: 5, max_iterations: 10_000, collect_universes: false }
    }
}

/// Percent of original requests that took part in at least one accepted
/// match.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Donors and receivers together.
    pub overall: f64,
    pub donors: f64,
    pub receivers: f64,
    pub volunteers: f64,
    pub perishable: f64,
    pub non_perishable: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fulfillment {
    pub requested_g: Grams,
    /// Served grams, capped at each receiver's requirement.
    pub served_g: Grams,
    pub overshoot_g: Grams,
    pub pct: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub displayed: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub expired: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalCounts {
    pub served: usize,
    pub partially_served: usize,
    pub unserved: usize,
    /// Requests not in a terminal state when the run ended; always zero for
    /// a settled run.
    pub non_terminal: usize,
}

/// What one original request ended up with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    /// Agents on the other side it exchanged food with, in acceptance order.
    pub partners: Vec<AgentId>,
    /// Other-side agents seen in its mechanism preference lists.
    pub universe: BTreeSet<AgentId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub counts: Counts,
    pub donor_meals: usize,
    pub allocation: Allocation,
    pub fulfillment: Fulfillment,
    pub donated_g: Grams,
    /// Grams taken from donor meals in accepted matches.
    pub donor_side_g: Grams,
    /// Grams credited to receivers in accepted matches.
    pub receiver_side_g: Grams,
    pub deliveries: Vec<DeliveryRecord>,
    pub iterations: usize,
    pub status: StatusCounts,
    pub terminal: TerminalCounts,
    pub rejected_submissions: usize,
    /// Per-iteration engine wall time in milliseconds; excluded from any
    /// output that must be reproducible.
    #[serde(skip)]
    pub iteration_ms: Vec<f64>,
    #[serde(skip)]
    pub outcomes: BTreeMap<AgentId, AgentOutcome>,
}

impl SimReport {
    pub fn mass_conserved(&self) -> bool {
        self.donor_side_g == self.receiver_side_g
    }
}

#[derive(Clone, Debug)]
enum Response {
    Accept(Vec<(MatchId, Vec<Role>)>),
    Reject(Vec<MatchId>),
}

fn roles(volunteer: bool) -> Vec<Role> {
    let mut r = vec![Role::Donor, Role::Receiver];
    if volunteer {
        r.push(Role::Volunteer);
    }
    r
}

pub fn run_simulation(
    scenario: &Scenario,
    policy: MatchPolicy,
    acceptance: AcceptanceModel,
    opts: SimOptions,
) -> Result<SimReport, SimError> {
    let th = scenario.config.thresholds;
    acceptance.validate(th.t_w)?;
    if opts.tick <= 0 {
        return Err(SimError::InvalidTick);
    }
    let taxonomy = FoodTaxonomy::default();
    let pool = SharedPool::new();
    let mut engine = Engine::new(pool.clone(), th, taxonomy, policy);
    let mut rng = ChaCha8Rng::seed_from_u64(acceptance.seed);

    let mut order: Vec<usize> = (0..scenario.requests.len()).collect();
    order.sort_by_key(|&i| scenario.requests[i].submit_at);
    let mut next = order.into_iter().peekable();
    let mut now = scenario
        .requests
        .iter()
        .map(|r| r.submit_at)
        .min()
        .unwrap_or(scenario.config.working_hours.start);

    let mut report = SimReport { counts: scenario.counts(), ..Default::default() };
    let mut pieces: BTreeMap<RequestId, Request> = BTreeMap::new();
    let mut events: BTreeMap<(Minutes, u64), Response> = BTreeMap::new();
    let mut event_seq = 0u64;
    let mut universes: BTreeMap<AgentId, BTreeSet<AgentId>> = BTreeMap::new();

    loop {
        let due: Vec<_> = events.range(..=(now, u64::MAX)).map(|(k, _)| *k).collect();
        for key in due {
            match events.remove(&key).expect("due event") {
                Response::Accept(ms) => {
                    for (m, rs) in ms {
                        for r in rs {
                            engine.accept(m, r, key.0).expect("response within deadline");
                        }
                    }
                }
                Response::Reject(ms) => {
                    for m in ms {
                        engine.reject(m, key.0).expect("response within deadline");
                    }
                }
            }
        }

        while let Some(&i) = next.peek() {
            let timed = &scenario.requests[i];
            if timed.submit_at > now {
                break;
            }
            next.next();
            match pool.submit(timed.request.clone(), &th) {
                Ok(ids) => {
                    let queued = pieces_of(&timed.request, th.t_m);
                    debug_assert!(queued.iter().map(Request::id).eq(ids.iter().copied()));
                    pieces.extend(queued.into_iter().map(|p| (p.id(), p)));
                }
                Err(_) => report.rejected_submissions += 1,
            }
        }

        let started = Instant::now();
        let rep = engine.iteration(now);
        report.iteration_ms.push(started.elapsed().as_secs_f64() * 1e3);
        report.iterations += 1;

        if opts.collect_universes {
            for (_, t) in &rep.traces {
                for (d, prefs) in t.donors.iter().zip(&t.donor_prefs) {
                    universes.entry(d.agent).or_default().extend(prefs.ids().map(|r| r.agent));
                }
                for (r, prefs) in t.receivers.iter().zip(&t.receiver_prefs) {
                    universes.entry(r.agent).or_default().extend(prefs.ids().map(|d| d.agent));
                }
            }
        }

        for g in rep.groups() {
            let delay = if acceptance.max_delay > 0 { rng.random_range(0..=acceptance.max_delay) } else { 0 };
            let u: f64 = rng.random();
            let response = if u < acceptance.reject_prob {
                Some(Response::Reject(g.matches.clone()))
            } else if u < acceptance.reject_prob + acceptance.ignore_prob {
                None
            } else {
                let rs = roles(g.volunteer.is_some());
                Some(Response::Accept(g.matches.iter().map(|&m| (m, rs.clone())).collect()))
            };
            if let Some(r) = response {
                event_seq += 1;
                events.insert((now + delay, event_seq), r);
            }
        }

        if next.peek().is_none() && events.is_empty() && engine.is_quiescent() {
            break;
        }
        if report.iterations >= opts.max_iterations {
            let pending = pieces.keys().filter(|id| !engine.lifecycle(**id).is_some_and(Lifecycle::is_terminal)).count();
            return Err(SimError::NoTermination { iterations: report.iterations, now, pending });
        }
        now += opts.tick;
    }

    summarise(&mut report, &engine, &pieces, &taxonomy);
    if opts.collect_universes {
        for (agent, u) in universes {
            report.outcomes.entry(agent).or_default().universe = u;
        }
    }
    Ok(report)
}

/// The pieces the pool queued for `raw`: meals for a split donation,
/// otherwise the request itself.
fn pieces_of(raw: &Request, t_m: Grams) -> Vec<Request> {
    match raw {
        Request::Donation(d) => {
            split_into_meals(d.clone(), t_m).into_iter().map(Request::Donation).collect()
        }
        other => vec![other.clone()],
    }
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn summarise(
    report: &mut SimReport,
    engine: &Engine<SharedPool>,
    pieces: &BTreeMap<RequestId, Request>,
    taxonomy: &FoodTaxonomy,
) {
    let matches = engine.matches();
    report.status = StatusCounts {
        displayed: matches.len(),
        accepted: matches.count_status(MatchStatus::Accepted),
        rejected: matches.count_status(MatchStatus::Rejected),
        expired: matches.count_status(MatchStatus::Expired),
    };
    for id in pieces.keys() {
        match engine.lifecycle(*id) {
            Some(Lifecycle::Served) => report.terminal.served += 1,
            Some(Lifecycle::PartiallyServed) => report.terminal.partially_served += 1,
            Some(Lifecycle::Unserved) => report.terminal.unserved += 1,
            _ => report.terminal.non_terminal += 1,
        }
    }

    let mut class_of: BTreeMap<RequestId, Perishability> = BTreeMap::new();
    let mut requested: BTreeMap<RequestId, Grams> = BTreeMap::new();
    for (id, r) in pieces {
        match r {
            Request::Donation(d) => {
                report.donor_meals += 1;
                report.donated_g += d.amount;
                class_of.insert(id.parent(), taxonomy.perishability(d.food));
            }
            Request::Requirement(q) => {
                requested.insert(*id, q.amount);
                class_of.insert(*id, taxonomy.perishability(q.food));
            }
            Request::Volunteer(_) => {}
        }
    }

    let mut served_parents: BTreeSet<RequestId> = BTreeSet::new();
    let mut received: BTreeMap<RequestId, Grams> = BTreeMap::new();
    let mut carriers: BTreeSet<RequestId> = BTreeSet::new();
    let deliveries: &[Delivery] = engine.deliveries();
    for d in deliveries {
        let meal = match &pieces[&d.donor] {
            Request::Donation(m) => m.amount,
            _ => unreachable!("donor id names a donation"),
        };
        report.donor_side_g += meal;
        report.receiver_side_g += d.amount;
        served_parents.insert(d.donor.parent());
        *received.entry(d.receiver).or_default() += d.amount;
        if let Some(v) = d.volunteer {
            carriers.insert(v);
        }
        if let Some(rec) = d.route {
            report.deliveries.push(rec);
        }
        report.outcomes.entry(d.donor.agent).or_default().partners.push(d.receiver.agent);
        report.outcomes.entry(d.receiver.agent).or_default().partners.push(d.donor.agent);
    }

    let requested_g: Grams = requested.values().sum();
    let mut served_g = 0;
    let mut overshoot_g = 0;
    for (id, got) in &received {
        let want = requested[id];
        served_g += (*got).min(want);
        overshoot_g += got.saturating_sub(want);
    }
    report.fulfillment = Fulfillment {
        requested_g,
        served_g,
        overshoot_g,
        pct: if requested_g == 0 { 0.0 } else { 100.0 * served_g as f64 / requested_g as f64 },
    };

    let c = report.counts;
    let donors_hit = served_parents.len();
    let receivers_hit = received.len();
    let per_class = |class: Perishability| {
        let total = class_of.values().filter(|c| **c == class).count();
        let hit = served_parents
            .iter()
            .chain(received.keys())
            .filter(|id| class_of.get(id) == Some(&class))
            .count();
        pct(hit, total)
    };
    report.allocation = Allocation {
        overall: pct(donors_hit + receivers_hit, c.donors + c.receivers),
        donors: pct(donors_hit, c.donors),
        receivers: pct(receivers_hit, c.receivers),
        volunteers: pct(carriers.len(), c.volunteers),
        perishable: per_class(Perishability::Perishable),
        non_perishable: per_class(Perishability::NonPerishable),
    };
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

//! Brute-force checks on small instances: donor Pareto-optimality,
//! unilateral misreports, and the off-route overhead bound.

use std::collections::BTreeSet;

use fdrm_core::matching::MarketTrace;
use fdrm_core::{
    ActivePool, AgentId, DeliveryRecord, DonationRequest, Engine, FoodTaxonomy, FoodType, Grams,
    IntakeError, Location, MatchPolicy, Minutes, Request, RequestId, RequirementRequest, Route,
    Sequencer, Thresholds, TimeWindow, VolunteerRequest,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experiments::true_rank;

pub const MAX_DONORS: usize = 5;
pub const MAX_RECEIVERS: usize = 5;
pub const MAX_VOLUNTEERS: usize = 3;
/// Meals per market the enumeration accepts.
pub const MAX_MEALS: usize = 8;
pub const PROBE_MAX_AGENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large: {donors} donors, {receivers} receivers, {volunteers} volunteers")]
    TooLarge { donors: usize, receivers: usize, volunteers: usize },
    #[error(transparent)]
    Intake(#[from] IntakeError),
}

/// A single-iteration market, small enough to enumerate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallInstance {
    pub now: Minutes,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub policy: MatchPolicy,
    #[serde(default)]
    pub donors: Vec<DonationRequest>,
    #[serde(default)]
    pub receivers: Vec<RequirementRequest>,
    #[serde(default)]
    pub volunteers: Vec<VolunteerRequest>,
}

impl SmallInstance {
    pub fn empty(now: Minutes) -> Self {
        Self {
            now,
            thresholds: Thresholds::default(),
            policy: MatchPolicy::default(),
            donors: Vec::new(),
            receivers: Vec::new(),
            volunteers: Vec::new(),
        }
    }

    fn guard(&self, donors: usize, receivers: usize, volunteers: usize) -> Result<(), OracleError> {
        if self.donors.len() > donors || self.receivers.len() > receivers || self.volunteers.len() > volunteers {
            return Err(OracleError::TooLarge {
                donors: self.donors.len(),
                receivers: self.receivers.len(),
                volunteers: self.volunteers.len(),
            });
        }
        Ok(())
    }

    /// Submits everything in file order (donors, receivers, volunteers) and
    /// runs one iteration at `now`.
    pub fn run(&self) -> Result<Vec<MarketTrace>, OracleError> {
        let seq = Sequencer::new();
        let mut pool = ActivePool::new();
        let all = self
            .donors
            .iter()
            .cloned()
            .map(Request::Donation)
            .chain(self.receivers.iter().cloned().map(Request::Requirement))
            .chain(self.volunteers.iter().cloned().map(Request::Volunteer));
        for r in all {
            pool.submit_request(r, &seq, &self.thresholds)?;
        }
        let mut e = Engine::new(pool, self.thresholds, FoodTaxonomy::default(), self.policy);
        Ok(e.iteration(self.now).traces.into_iter().map(|(_, t)| t).collect())
    }
}

/// Donor meal → receiver, `None` for unmatched, indexed like `trace.donors`.
pub type Assignment = Vec<Option<RequestId>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum Certificate {
    ParetoOk,
    Dominated { donors: Vec<RequestId>, produced: Assignment, better: Assignment },
}

impl Certificate {
    pub fn is_ok(&self) -> bool {
        matches!(self, Certificate::ParetoOk)
    }
}

/// What the mechanism did, by trace index.
pub fn produced_assignment(trace: &MarketTrace) -> Assignment {
    trace
        .donors
        .iter()
        .map(|d| trace.selections.iter().find(|s| s.donor == *d).map(|s| s.receiver))
        .collect()
}

/// A receiver set is feasible when it could be collected meal by meal
/// without taking another meal after the need was met: everything but the
/// largest meal stays below the need.
fn feasible(amounts: &[Grams], need: Grams) -> bool {
    let sum: Grams = amounts.iter().sum();
    let max = amounts.iter().copied().max().unwrap_or(0);
    amounts.is_empty() || sum - max < need
}

/// Searches every feasible assignment over mutually listed pairs for one
/// that no donor likes less than `produced` and some donor likes more.
/// Unmatched is worse than any match.
pub fn check_pareto(trace: &MarketTrace, produced: &Assignment) -> Certificate {
    let n = trace.donors.len();
    let rank = |i: usize, r: Option<RequestId>| -> u32 {
        r.and_then(|r| trace.donor_prefs[i].rank_of(r)).unwrap_or(u32::MAX)
    };
    let current: Vec<u32> = (0..n).map(|i| rank(i, produced[i])).collect();
    // Options per donor no worse than what it got, best first.
    let options: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            let mut o: Vec<(u32, Option<usize>)> = trace
                .receivers
                .iter()
                .enumerate()
                .filter(|(j, r)| {
                    trace.receiver_prefs[*j].contains(trace.donors[i])
                        && trace.donor_prefs[i].contains(**r)
                })
                .map(|(j, r)| (rank(i, Some(*r)), Some(j)))
                .filter(|(k, _)| *k <= current[i])
                .collect();
            if current[i] == u32::MAX {
                o.push((u32::MAX, None));
            }
            o.sort_by_key(|(k, j)| (*k, j.map_or(usize::MAX, |j| j)));
            o.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut chosen = vec![None; n];
    let mut loads: Vec<Vec<Grams>> = vec![Vec::new(); trace.receivers.len()];
    let found = search(trace, &options, &current, 0, false, &mut chosen, &mut loads, &rank);
    match found {
        Some(better) => Certificate::Dominated { donors: trace.donors.clone(), produced: produced.clone(), better },
        None => Certificate::ParetoOk,
    }
}

#[allow(clippy::too_many_arguments)]
fn search(
    trace: &MarketTrace,
    options: &[Vec<Option<usize>>],
    current: &[u32],
    i: usize,
    strict: bool,
    chosen: &mut Vec<Option<usize>>,
    loads: &mut Vec<Vec<Grams>>,
    rank: &dyn Fn(usize, Option<RequestId>) -> u32,
) -> Option<Assignment> {
    if i == options.len() {
        let ok = strict
            && loads.iter().zip(&trace.receiver_needs).all(|(l, need)| feasible(l, *need));
        return ok.then(|| chosen.iter().map(|j| j.map(|j| trace.receivers[j])).collect());
    }
    for &o in &options[i] {
        let better = rank(i, o.map(|j| trace.receivers[j])) < current[i];
        chosen[i] = o;
        if let Some(j) = o {
            loads[j].push(trace.donor_amounts[i]);
            if !feasible(&loads[j], trace.receiver_needs[j]) {
                loads[j].pop();
                continue;
            }
        }
        let hit = search(trace, options, current, i + 1, strict || better, chosen, loads, rank);
        if let Some(j) = o {
            loads[j].pop();
        }
        if hit.is_some() {
            return hit;
        }
    }
    chosen[i] = None;
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    /// `(donor, receiver)` as selected, per market.
    pub selections: Vec<(RequestId, RequestId)>,
    pub certificate: Certificate,
}

/// Runs the mechanism on `inst` and checks its donor assignment.
pub fn brute_force_pareto_oracle(inst: &SmallInstance) -> Result<ParetoReport, OracleError> {
    brute_force_pareto_oracle_with(inst, |_, a| a)
}

/// As above, letting `edit` replace the produced assignment of each market
/// before it is checked.
pub fn brute_force_pareto_oracle_with(
    inst: &SmallInstance,
    mut edit: impl FnMut(&MarketTrace, Assignment) -> Assignment,
) -> Result<ParetoReport, OracleError> {
    inst.guard(MAX_DONORS, MAX_RECEIVERS, MAX_VOLUNTEERS)?;
    let traces = inst.run()?;
    let mut selections = Vec::new();
    for t in &traces {
        if t.donors.len() > MAX_MEALS {
            return Err(OracleError::TooLarge {
                donors: t.donors.len(),
                receivers: inst.receivers.len(),
                volunteers: inst.volunteers.len(),
            });
        }
        selections.extend(t.selections.iter().map(|s| (s.donor, s.receiver)));
    }
    for t in &traces {
        let produced = edit(t, produced_assignment(t));
        let certificate = check_pareto(t, &produced);
        if !certificate.is_ok() {
            return Ok(ParetoReport { selections, certificate });
        }
    }
    Ok(ParetoReport { selections, certificate: Certificate::ParetoOk })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Misreport {
    pub agent: AgentId,
    pub truth: Vec<AgentId>,
    pub report: Vec<AgentId>,
    pub truthful_rank: u32,
    pub manipulated_rank: u32,
    pub exception: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub runs: usize,
    pub improvements: usize,
    pub exceptions: usize,
    /// Improvements with the truthful partner still in reach.
    pub violations: Vec<Misreport>,
}

/// Every ordered subset of `pool`, the empty one included.
pub fn ordered_subsets(pool: &[AgentId]) -> Vec<Vec<AgentId>> {
    let mut out: Vec<Vec<AgentId>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<AgentId>> = vec![Vec::new()];
    for _ in 0..pool.len() {
        let mut next = Vec::new();
        for prefix in &frontier {
            for a in pool.iter().filter(|a| !prefix.contains(a)) {
                let mut p: Vec<AgentId> = prefix.clone();
                p.push(*a);
                next.push(p);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Partners and list universe of every agent after one run.
fn outcomes(traces: &[MarketTrace], agent: AgentId) -> (Vec<AgentId>, BTreeSet<AgentId>) {
    let mut partners = Vec::new();
    let mut universe = BTreeSet::new();
    for t in traces {
        for s in &t.selections {
            if s.donor.agent == agent {
                partners.push(s.receiver.agent);
            }
            if s.receiver.agent == agent {
                partners.push(s.donor.agent);
            }
        }
        for (d, p) in t.donors.iter().zip(&t.donor_prefs) {
            if d.agent == agent {
                universe.extend(p.ids().map(|r| r.agent));
            }
        }
        for (r, p) in t.receivers.iter().zip(&t.receiver_prefs) {
            if r.agent == agent {
                universe.extend(p.ids().map(|d| d.agent));
            }
        }
    }
    (partners, universe)
}

fn best_partner(truth: &[AgentId], partners: &[AgentId]) -> Option<AgentId> {
    partners.iter().copied().min_by_key(|p| truth.iter().position(|a| a == p).unwrap_or(usize::MAX))
}

/// Replays the instance once per agent and per alternative list drawn from
/// the other side, comparing outcomes under the agent's submitted list.
pub fn strategyproof_probe(inst: &SmallInstance) -> Result<ProbeReport, OracleError> {
    inst.guard(PROBE_MAX_AGENTS, PROBE_MAX_AGENTS, MAX_VOLUNTEERS)?;
    let truthful = inst.run()?;
    let donor_agents: Vec<AgentId> = inst.donors.iter().map(|d| d.id.agent).collect();
    let receiver_agents: Vec<AgentId> = inst.receivers.iter().map(|r| r.id.agent).collect();
    let mut rep = ProbeReport::default();

    let mut probe = |agent: AgentId, truth: &[AgentId], set: &dyn Fn(&mut SmallInstance, Vec<AgentId>)| {
        let (before, _) = outcomes(&truthful, agent);
        let truthful_rank = true_rank(truth, &before);
        let pool: Vec<AgentId> = if donor_agents.contains(&agent) { &receiver_agents } else { &donor_agents }
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for report in ordered_subsets(&pool) {
            if report == truth {
                continue;
            }
            let mut m = inst.clone();
            set(&mut m, report.clone());
            let traces = m.run()?;
            rep.runs += 1;
            let (after, universe) = outcomes(&traces, agent);
            let manipulated_rank = true_rank(truth, &after);
            if manipulated_rank >= truthful_rank {
                continue;
            }
            rep.improvements += 1;
            let exception = best_partner(truth, &before).is_some_and(|p| !universe.contains(&p));
            if exception {
                rep.exceptions += 1;
            } else {
                rep.violations.push(Misreport {
                    agent,
                    truth: truth.to_vec(),
                    report,
                    truthful_rank,
                    manipulated_rank,
                    exception,
                });
            }
        }
        Ok::<(), OracleError>(())
    };

    for (k, d) in inst.donors.iter().enumerate() {
        probe(d.id.agent, &d.preferred_receivers, &|m, l| m.donors[k].preferred_receivers = l)?;
    }
    for (k, r) in inst.receivers.iter().enumerate() {
        probe(r.id.agent, &r.preferred_donors, &|m, l| m.receivers[k].preferred_donors = l)?;
    }
    Ok(rep)
}

/// Every record's overhead is within `4 · t_l` percent.
pub fn verify_gamma_bound(records: &[DeliveryRecord], th: &Thresholds) -> bool {
    gamma_violations(records, th).is_empty()
}

pub fn gamma_violations<'a>(records: &'a [DeliveryRecord], th: &Thresholds) -> Vec<&'a DeliveryRecord> {
    let bound = 4.0 * th.t_l + 1e-9;
    // NaN counts as a violation.
    records.iter().filter(|r| r.overhead_pct.is_nan() || r.overhead_pct > bound).collect()
}

/// Four donors of one meal each and five receivers at one spot, every
/// donor listing the late receiver `20` at a different position.
pub fn table_five_instance() -> SmallInstance {
    let at = Location::new(0.0, 0.0);
    let (r1, r2, r3, r4, rn) = (11, 12, 13, 14, 20);
    let lists: [(AgentId, Vec<AgentId>); 4] = [
        (1, vec![r1, r2, r3, r4, rn]),
        (2, vec![r1, rn, r3, r4]),
        (3, vec![r1, rn, r3, r4]),
        (4, vec![r1, r2, r3, rn]),
    ];
    let donors = lists
        .into_iter()
        .map(|(agent, prefs)| {
            let mut d = donation(agent, at, FoodType::FreshlyCooked, 1000, (600, 650));
            d.preferred_receivers = prefs;
            d
        })
        .collect();
    let mut receivers: Vec<RequirementRequest> = [r1, r2, r3, r4]
        .iter()
        .map(|&a| requirement(a, at, FoodType::FreshlyCooked, 1000, (600, 800)))
        .collect();
    let mut late = requirement(rn, at, FoodType::FreshlyCooked, 1000, (600, 700));
    late.preferred_donors = vec![2, 5, 1];
    receivers.push(late);
    SmallInstance { donors, receivers, ..SmallInstance::empty(500) }
}

/// One-meal-or-more donation with an empty list, request number 1.
pub fn donation(agent: AgentId, location: Location, food: FoodType, amount: Grams, w: (Minutes, Minutes)) -> DonationRequest {
    DonationRequest {
        id: RequestId::new(agent, 1),
        arrival: Default::default(),
        location,
        food,
        amount,
        packaging: String::new(),
        prep_or_expiry: w.0,
        image_ref: String::new(),
        window: TimeWindow::new(w.0, w.1),
        preferred_receivers: Vec::new(),
        vicinity: 0.0,
    }
}

/// Requirement with an empty list, request number 1.
pub fn requirement(agent: AgentId, location: Location, food: FoodType, amount: Grams, w: (Minutes, Minutes)) -> RequirementRequest {
    RequirementRequest {
        id: RequestId::new(agent, 1),
        arrival: Default::default(),
        location,
        food,
        amount,
        allocated: 0,
        window: TimeWindow::new(w.0, w.1),
        preferred_donors: Vec::new(),
    }
}

/// Random instance with every request current at minute 540, donors of one
/// meal each, in a 6 km square so that most pairs are in reach.
pub fn random_instance(seed: u64, max_donors: usize, max_receivers: usize, max_volunteers: usize) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 6.0;
    let at = |rng: &mut ChaCha8Rng| Location::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
    let foods = [FoodType::FreshlyCooked, FoodType::FreshProduce, FoodType::PackagedSolid];
    let nd = rng.random_range(1..=max_donors.max(1));
    let nr = rng.random_range(1..=max_receivers.max(1));
    let nv = rng.random_range(0..=max_volunteers);
    let d_agents: Vec<AgentId> = (1..=nd as AgentId).collect();
    let r_agents: Vec<AgentId> = (101..101 + nr as AgentId).collect();
    let list = |rng: &mut ChaCha8Rng, pool: &[AgentId]| {
        let mut l = pool.to_vec();
        l.shuffle(rng);
        l.truncate(rng.random_range(0..=pool.len()));
        l
    };

    let mut donors = Vec::with_capacity(nd);
    for &a in &d_agents {
        let start = rng.random_range(600..=650);
        let end = rng.random_range(660..=780);
        let food = *foods.choose(&mut rng).expect("foods");
        let mut d = donation(a, at(&mut rng), food, rng.random_range(300..=1999), (start, end));
        d.preferred_receivers = list(&mut rng, &r_agents);
        donors.push(d);
    }
    let mut receivers = Vec::with_capacity(nr);
    for &a in &r_agents {
        let start = rng.random_range(620..=720);
        let end = rng.random_range(720..=840);
        let food = *foods.choose(&mut rng).expect("foods");
        let mut r = requirement(a, at(&mut rng), food, rng.random_range(500..=3000), (start, end));
        r.preferred_donors = list(&mut rng, &d_agents);
        receivers.push(r);
    }
    let mut volunteers = Vec::with_capacity(nv);
    for k in 0..nv {
        let start = at(&mut rng);
        let mut dest = at(&mut rng);
        while dest == start {
            dest = at(&mut rng);
        }
        let restricted = rng.random_bool(0.2);
        volunteers.push(VolunteerRequest {
            id: RequestId::new(201 + k as AgentId, 1),
            arrival: Default::default(),
            route: Route::new(start, dest),
            motored: rng.random_bool(0.7),
            ac: rng.random_bool(0.3),
            payload_capacity: rng.random_range(1_000..=10_000),
            committed: 0,
            window: TimeWindow::new(540, 800),
            receivers: if restricted { vec![*r_agents.choose(&mut rng).expect("receivers")] } else { Vec::new() },
        });
    }
    SmallInstance { donors, receivers, volunteers, ..SmallInstance::empty(540) }
}

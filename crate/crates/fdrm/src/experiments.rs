//! The four allocation experiments, a manipulation study and a per-iteration
//! scaling probe. Independent runs fan out over rayon; results come back in
//! input order.

use std::collections::BTreeMap;
use std::time::Instant;

use fdrm_core::{
    ActivePool, AgentId, DonationRequest, Engine, FoodTaxonomy, FoodType, Location, MatchPolicy,
    PreferenceMode, ReceiverSort, Request, RequestId, RequirementRequest, Route, Sequencer,
    Thresholds, TimeWindow, VolunteerRequest,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{generate_scenario, generate_with_counts, Scenario, ScenarioConfig, ScenarioError};
use crate::sim::{run_simulation, AcceptanceModel, SimError, SimOptions, SimReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Invalid(String),
}

fn policy(receiver_sort: ReceiverSort, preferences: PreferenceMode) -> MatchPolicy {
    MatchPolicy { receiver_sort, preferences }
}

fn run(s: &Scenario, p: MatchPolicy) -> Result<SimReport, SimError> {
    run_simulation(s, p, AcceptanceModel::default(), SimOptions::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub multiple: f64,
    pub volunteers: usize,
    pub allocation: f64,
    pub donors: f64,
    pub receivers: f64,
    pub perishable: f64,
    pub non_perishable: f64,
}

/// Allocation as the volunteer count goes from `multiple[0]` to
/// `multiple[n]` times the donor count, donors and receivers held fixed.
pub fn allocation_vs_volunteers(
    base: &ScenarioConfig,
    multiples: &[f64],
    p: MatchPolicy,
) -> Result<Vec<CurvePoint>, ExperimentError> {
    if multiples.is_empty() || multiples.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
        return Err(ExperimentError::Invalid("multiples must be non-empty and non-negative".into()));
    }
    multiples
        .par_iter()
        .map(|&m| {
            let counts = base.counts_with_volunteer_multiple(m);
            let s = generate_with_counts(base, counts)?;
            let r = run(&s, p)?;
            Ok(CurvePoint {
                multiple: m,
                volunteers: counts.volunteers,
                allocation: r.allocation.overall,
                donors: r.allocation.donors,
                receivers: r.allocation.receivers,
                perishable: r.allocation.perishable,
                non_perishable: r.allocation.non_perishable,
            })
        })
        .collect()
}

/// One seed run under two policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedPoint {
    pub seed: u64,
    pub first: f64,
    pub second: f64,
}

impl PairedPoint {
    pub fn first_at_least_second(&self, tolerance: f64) -> bool {
        self.first + tolerance >= self.second
    }
}

fn paired(
    base: &ScenarioConfig,
    seeds: &[u64],
    first: MatchPolicy,
    second: MatchPolicy,
) -> Result<Vec<PairedPoint>, ExperimentError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let s = generate_scenario(&ScenarioConfig { seed, ..base.clone() })?;
            Ok(PairedPoint {
                seed,
                first: run(&s, first)?.allocation.overall,
                second: run(&s, second)?.allocation.overall,
            })
        })
        .collect()
}

/// End-time sorting (`first`) against start-time sorting (`second`).
pub fn end_vs_start_sorting(base: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<PairedPoint>, ExperimentError> {
    paired(
        base,
        seeds,
        policy(ReceiverSort::End, PreferenceMode::Eligible),
        policy(ReceiverSort::Start, PreferenceMode::Eligible),
    )
}

/// Eligibility-updated preferences (`first`) against submitted lists as-is
/// (`second`).
pub fn eligible_vs_raw_preferences(base: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<PairedPoint>, ExperimentError> {
    paired(
        base,
        seeds,
        policy(ReceiverSort::End, PreferenceMode::Eligible),
        policy(ReceiverSort::End, PreferenceMode::Raw),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Donor,
    Receiver,
}

/// Rank of an outcome under a true list: the position of the best partner
/// (1-based), `len + 1` if every partner is unlisted, `len + 2` if none.
pub fn true_rank(truth: &[AgentId], partners: &[AgentId]) -> u32 {
    let unlisted = truth.len() as u32 + 1;
    partners
        .iter()
        .map(|p| truth.iter().position(|a| a == p).map_or(unlisted, |i| i as u32 + 1))
        .min()
        .unwrap_or(unlisted + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorResult {
    pub agent: AgentId,
    pub side: Side,
    pub truth: Vec<AgentId>,
    pub report: Vec<AgentId>,
    pub truthful_rank: u32,
    pub manipulated_rank: u32,
    /// Rank gained by misreporting: truthful rank minus manipulated rank,
    /// positive when the manipulator got a better partner.
    pub delta: i64,
    /// Gain while the truthful partner was outside the manipulator's
    /// eligibility universe in the manipulated run.
    pub exception: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManipulationReport {
    pub fraction: f64,
    pub manipulators: usize,
    pub improved: usize,
    pub worsened: usize,
    pub exceptions: usize,
    /// Gains not explained by an eligibility gap.
    pub violations: usize,
    pub exception_rate: f64,
    pub mean_delta: f64,
    /// True when the manipulated run's deliveries equal the truthful run's.
    pub identical_to_baseline: bool,
    pub results: Vec<ManipulatorResult>,
}

/// Shuffles a list of two or more, otherwise truncates it.
fn misreport(truth: &[AgentId], rng: &mut ChaCha8Rng) -> Vec<AgentId> {
    let mut v = truth.to_vec();
    if v.len() >= 2 && rng.random_bool(0.5) {
        while v == truth {
            v.shuffle(rng);
        }
    } else {
        v.truncate(rng.random_range(0..v.len().max(1)));
    }
    v
}

/// Truthful baseline against a run where `fraction` percent of donors and
/// receivers shuffle or truncate their lists.
pub fn manipulation(base: &ScenarioConfig, fraction: f64, seed: u64) -> Result<ManipulationReport, ExperimentError> {
    if !(0.0..=100.0).contains(&fraction) {
        return Err(ExperimentError::Invalid("fraction must be a percentage".into()));
    }
    let truthful = generate_scenario(base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manipulated = truthful.clone();
    let mut chosen: BTreeMap<AgentId, (Side, Vec<AgentId>, Vec<AgentId>)> = BTreeMap::new();
    for t in &mut manipulated.requests {
        let (agent, side, list) = match &mut t.request {
            Request::Donation(d) => (d.id.agent, Side::Donor, &mut d.preferred_receivers),
            Request::Requirement(r) => (r.id.agent, Side::Receiver, &mut r.preferred_donors),
            Request::Volunteer(_) => continue,
        };
        if rng.random::<f64>() * 100.0 < fraction {
            let truth = list.clone();
            *list = misreport(&truth, &mut rng);
            chosen.insert(agent, (side, truth, list.clone()));
        }
    }

    let opts = SimOptions { collect_universes: true, ..SimOptions::default() };
    let p = MatchPolicy::default();
    let (a, b) = rayon::join(
        || run_simulation(&truthful, p, AcceptanceModel::default(), opts),
        || run_simulation(&manipulated, p, AcceptanceModel::default(), opts),
    );
    let (a, b) = (a?, b?);

    let mut rep = ManipulationReport { fraction, manipulators: chosen.len(), ..Default::default() };
    rep.identical_to_baseline = a.deliveries == b.deliveries && a.allocation == b.allocation;
    let empty = Default::default();
    for (agent, (side, truth, report)) in chosen {
        let before = a.outcomes.get(&agent).unwrap_or(&empty);
        let after = b.outcomes.get(&agent).unwrap_or(&empty);
        let truthful_rank = true_rank(&truth, &before.partners);
        let manipulated_rank = true_rank(&truth, &after.partners);
        let delta = truthful_rank as i64 - manipulated_rank as i64;
        let best = before
            .partners
            .iter()
            .min_by_key(|p| truth.iter().position(|a| a == *p).unwrap_or(usize::MAX));
        let exception = delta > 0 && best.is_some_and(|p| !after.universe.contains(p));
        rep.improved += usize::from(delta > 0);
        rep.worsened += usize::from(delta < 0);
        rep.exceptions += usize::from(exception);
        rep.violations += usize::from(delta > 0 && !exception);
        rep.results.push(ManipulatorResult {
            agent,
            side,
            truth,
            report,
            truthful_rank,
            manipulated_rank,
            delta,
            exception,
        });
    }
    if rep.manipulators > 0 {
        rep.exception_rate = 100.0 * rep.exceptions as f64 / rep.manipulators as f64;
        rep.mean_delta = rep.results.iter().map(|r| r.delta as f64).sum::<f64>() / rep.manipulators as f64;
    }
    Ok(rep)
}

/// Wall time in milliseconds of `iterations` engine iterations over a
/// one-shot market with `r` receivers, `r` donors and `r / 2` volunteers,
/// everyone current.
pub fn iteration_times(r: usize, iterations: usize, seed: u64) -> Vec<f64> {
    let requests = one_shot_market(r, seed);
    let th = Thresholds::default();
    (0..iterations)
        .map(|_| {
            let seq = Sequencer::new();
            let mut pool = ActivePool::new();
            for q in &requests {
                pool.submit_request(q.clone(), &seq, &th).expect("valid market request");
            }
            let mut e = Engine::new(pool, th, FoodTaxonomy::default(), MatchPolicy::default());
            let started = Instant::now();
            std::hint::black_box(e.iteration(540));
            started.elapsed().as_secs_f64() * 1e3
        })
        .collect()
}

fn one_shot_market(r: usize, seed: u64) -> Vec<Request> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 20.0;
    let at = |rng: &mut ChaCha8Rng| Location::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
    let foods = [FoodType::FreshlyCooked, FoodType::PackagedSolid];
    let d_agents: Vec<AgentId> = (1..=r as u64).collect();
    let r_agents: Vec<AgentId> = (r as u64 + 1..=2 * r as u64).collect();
    let mut out = Vec::with_capacity(r * 5 / 2);
    for &a in &d_agents {
        let start = rng.random_range(600..=650);
        out.push(Request::Donation(DonationRequest {
            id: RequestId::new(a, 1),
            arrival: Default::default(),
            location: at(&mut rng),
            food: *foods.choose(&mut rng).expect("foods"),
            amount: rng.random_range(500..=1999),
            packaging: String::new(),
            prep_or_expiry: start,
            image_ref: String::new(),
            window: TimeWindow::new(start, rng.random_range(660..=780)),
            preferred_receivers: r_agents.choose_multiple(&mut rng, 3).copied().collect(),
            vicinity: 0.0,
        }));
    }
    for &a in &r_agents {
        let start = rng.random_range(620..=720);
        out.push(Request::Requirement(RequirementRequest {
            id: RequestId::new(a, 1),
            arrival: Default::default(),
            location: at(&mut rng),
            food: *foods.choose(&mut rng).expect("foods"),
            amount: rng.random_range(500..=3000),
            allocated: 0,
            window: TimeWindow::new(start, rng.random_range(720..=840)),
            preferred_donors: d_agents.choose_multiple(&mut rng, 3).copied().collect(),
        }));
    }
    for k in 0..r / 2 {
        let start = at(&mut rng);
        out.push(Request::Volunteer(VolunteerRequest {
            id: RequestId::new(2 * r as u64 + 1 + k as u64, 1),
            arrival: Default::default(),
            route: Route::new(start, at(&mut rng)),
            motored: rng.random_bool(0.7),
            ac: rng.random_bool(0.3),
            payload_capacity: rng.random_range(2_000..=100_000),
            committed: 0,
            window: TimeWindow::new(540, 800),
            receivers: Vec::new(),
        }));
    }
    out
}

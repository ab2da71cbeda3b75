//! Seeded scenario generation and the scenario file format.
//!
//! Donors sit around a handful of pickup hotspots and receivers around
//! drop-off hotspots a short drive away, with some agents scattered
//! uniformly. Each volunteer is anchored to one donor: its route starts
//! within pickup reach of that donor, ends next to a receiver of the same
//! food class, and its availability covers the donation window.

use fdrm_core::geometry::{distance, within_pickup_radius};
use fdrm_core::{
    AgentId, DonationRequest, FoodTaxonomy, FoodType, Grams, Location, Minutes, Perishability,
    Request, RequestId, RequirementRequest, Route, Thresholds, TimeWindow, VolunteerRequest,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("invalid scenario config: {0}")]
    Invalid(String),
}

/// Fractions of donor, receiver and volunteer requests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub donors: f64,
    pub receivers: f64,
    pub volunteers: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Self { donors: 0.35, receivers: 0.35, volunteers: 0.30 }
    }
}

/// Request counts per role.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub donors: usize,
    pub receivers: usize,
    pub volunteers: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.donors + self.receivers + self.volunteers
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_requests: usize,
    pub mix: Mix,
    pub city_width: f64,
    pub city_height: f64,
    /// Minutes of the day during which every window lies.
    pub working_hours: TimeWindow,
    pub min_payload: Grams,
    pub max_payload: Grams,
    pub donation_grams: (Grams, Grams),
    pub requirement_grams: (Grams, Grams),
    pub max_preferences: usize,
    pub hotspots: usize,
    pub hotspot_radius: f64,
    /// Share of donors and receivers placed near a hotspot.
    pub clustered: f64,
    pub motored: f64,
    pub ac: f64,
    /// Share of volunteers restricted to their anchor receiver.
    pub enrolled: f64,
    pub thresholds: Thresholds,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_requests: 5000,
            mix: Mix::default(),
            city_width: 50.0,
            city_height: 50.0,
            working_hours: TimeWindow::new(360, 1439),
            min_payload: 2_000,
            max_payload: 100_000,
            donation_grams: (500, 5_000),
            requirement_grams: (500, 4_000),
            max_preferences: 3,
            hotspots: 6,
            hotspot_radius: 4.0,
            clustered: 0.8,
            motored: 0.7,
            ac: 0.3,
            enrolled: 0.2,
            thresholds: Thresholds::default(),
        }
    }
}

const MIN_WORKING_MINUTES: Minutes = 240;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        let Mix { donors, receivers, volunteers } = self.mix;
        if [donors, receivers, volunteers].iter().any(|f| !(0.0..=1.0).contains(f))
            || (donors + receivers + volunteers - 1.0).abs() > 1e-9
        {
            return invalid("mix fractions must be in [0, 1] and sum to 1");
        }
        for (name, p) in [
            ("clustered", self.clustered),
            ("motored", self.motored),
            ("ac", self.ac),
            ("enrolled", self.enrolled),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(&format!("{name} must be a probability"));
            }
        }
        if !(self.city_width > 0.0 && self.city_height > 0.0) {
            return invalid("city dimensions must be positive");
        }
        let ranges = [self.donation_grams, self.requirement_grams, (self.min_payload, self.max_payload)];
        if ranges.iter().any(|&(lo, hi)| lo == 0 || lo > hi) {
            return invalid("amount and payload ranges must be positive and ordered");
        }
        if self.hotspots == 0 || self.hotspot_radius < 0.0 {
            return invalid("need at least one hotspot and a non-negative radius");
        }
        self.thresholds.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let w = self.working_hours;
        if !w.is_valid() || w.end - w.start < MIN_WORKING_MINUTES {
            return Err(ScenarioError::Infeasible(format!(
                "working hours {}..{} leave fewer than {MIN_WORKING_MINUTES} minutes",
                w.start, w.end
            )));
        }
        Ok(())
    }

    pub fn counts(&self) -> Counts {
        let n = self.n_requests;
        let donors = (n as f64 * self.mix.donors).round() as usize;
        let receivers = ((n as f64 * self.mix.receivers).round() as usize).min(n - donors.min(n));
        Counts { donors: donors.min(n), receivers, volunteers: n - donors.min(n) - receivers }
    }

    /// Same donors and receivers, `multiple` times as many volunteers as donors.
    pub fn counts_with_volunteer_multiple(&self, multiple: f64) -> Counts {
        let c = self.counts();
        Counts { volunteers: (c.donors as f64 * multiple).round() as usize, ..c }
    }
}

/// A raw request and the minute it is submitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedRequest {
    pub submit_at: Minutes,
    #[serde(flatten)]
    pub request: Request,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub requests: Vec<TimedRequest>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts { donors: 0, receivers: 0, volunteers: 0 };
        for r in &self.requests {
            match r.request {
                Request::Donation(_) => c.donors += 1,
                Request::Requirement(_) => c.receivers += 1,
                Request::Volunteer(_) => c.volunteers += 1,
            }
        }
        c
    }
}

// Independent RNG streams so that changing one role's count leaves the
// other roles' draws untouched.
const STREAM_LAYOUT: u64 = 1;
const STREAM_DONORS: u64 = 2;
const STREAM_RECEIVERS: u64 = 3;
const STREAM_PREFERENCES: u64 = 4;
const STREAM_VOLUNTEERS: u64 = 5;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct Layout {
    pickup: Vec<Location>,
    dropoff: Vec<Location>,
}

struct Generator<'a> {
    cfg: &'a ScenarioConfig,
    taxonomy: FoodTaxonomy,
    layout: Layout,
}

/// Deterministic per `config.seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    generate_with_counts(config, config.counts())
}

pub fn generate_with_counts(config: &ScenarioConfig, counts: Counts) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let mut layout_rng = rng(config.seed, STREAM_LAYOUT);
    let g = Generator { cfg: config, taxonomy: FoodTaxonomy::default(), layout: Layout::new(config, &mut layout_rng) };

    let mut out = Vec::with_capacity(counts.total());
    let mut next_agent: AgentId = 1;
    let mut agent = || {
        let a = next_agent;
        next_agent += 1;
        a
    };

    let mut r = rng(config.seed, STREAM_DONORS);
    let mut donors: Vec<(Minutes, DonationRequest)> =
        (0..counts.donors).map(|_| g.donor(agent(), &mut r)).collect();
    let mut r = rng(config.seed, STREAM_RECEIVERS);
    let mut receivers: Vec<(Minutes, RequirementRequest)> =
        (0..counts.receivers).map(|_| g.receiver(agent(), &mut r)).collect();

    let mut r = rng(config.seed, STREAM_PREFERENCES);
    g.assign_preferences(&mut donors, &mut receivers, &mut r);

    let mut r = rng(config.seed, STREAM_VOLUNTEERS);
    let volunteers: Vec<(Minutes, VolunteerRequest)> = (0..counts.volunteers)
        .map(|_| g.volunteer(agent(), &donors, &receivers, &mut r))
        .collect();

    out.extend(donors.into_iter().map(|(t, d)| TimedRequest { submit_at: t, request: Request::Donation(d) }));
    out.extend(receivers.into_iter().map(|(t, r)| TimedRequest { submit_at: t, request: Request::Requirement(r) }));
    out.extend(volunteers.into_iter().map(|(t, v)| TimedRequest { submit_at: t, request: Request::Volunteer(v) }));
    out.sort_by_key(|t| t.submit_at);
    let mut config = config.clone();
    if counts != config.counts() {
        let n = counts.total().max(1) as f64;
        config.n_requests = counts.total();
        config.mix = Mix {
            donors: counts.donors as f64 / n,
            receivers: counts.receivers as f64 / n,
            volunteers: counts.volunteers as f64 / n,
        };
    }
    Ok(Scenario { config, requests: out })
}

impl Layout {
    fn new(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Self {
        let margin = cfg.hotspot_radius.min(cfg.city_width / 4.0).min(cfg.city_height / 4.0);
        let pickup: Vec<Location> = (0..cfg.hotspots)
            .map(|_| {
                Location::new(
                    rng.random_range(margin..=cfg.city_width - margin),
                    rng.random_range(margin..=cfg.city_height - margin),
                )
            })
            .collect();
        let dropoff = pickup
            .iter()
            .map(|p| {
                let d = rng.random_range(6.0..=18.0);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                clamp(cfg, Location::new(p.x + d * a.cos(), p.y + d * a.sin()))
            })
            .collect();
        Self { pickup, dropoff }
    }
}

fn clamp(cfg: &ScenarioConfig, p: Location) -> Location {
    Location::new(p.x.clamp(0.0, cfg.city_width), p.y.clamp(0.0, cfg.city_height))
}

fn around(cfg: &ScenarioConfig, centre: Location, radius: f64, rng: &mut ChaCha8Rng) -> Location {
    // uniform over the disk
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    clamp(cfg, Location::new(centre.x + r * a.cos(), centre.y + r * a.sin()))
}

impl Generator<'_> {
    fn place(&self, hotspots: &[Location], rng: &mut ChaCha8Rng) -> Location {
        let cfg = self.cfg;
        if rng.random_bool(cfg.clustered) {
            let h = *hotspots.choose(rng).expect("at least one hotspot");
            around(cfg, h, cfg.hotspot_radius, rng)
        } else {
            Location::new(rng.random_range(0.0..=cfg.city_width), rng.random_range(0.0..=cfg.city_height))
        }
    }

    fn food(&self, rng: &mut ChaCha8Rng) -> FoodType {
        *FoodType::ALL.choose(rng).expect("food types")
    }

    fn donor(&self, agent: AgentId, rng: &mut ChaCha8Rng) -> (Minutes, DonationRequest) {
        let w = self.cfg.working_hours;
        let start = rng.random_range(w.start + 60..=w.end - 60);
        let end = (start + rng.random_range(60..=240)).min(w.end);
        let submit = (start - rng.random_range(60..=240)).max(w.start);
        let (lo, hi) = self.cfg.donation_grams;
        let food = self.food(rng);
        let d = DonationRequest {
            id: RequestId::new(agent, 1),
            arrival: Default::default(),
            location: self.place(&self.layout.pickup, rng),
            food,
            amount: rng.random_range(lo..=hi),
            packaging: String::new(),
            prep_or_expiry: start - rng.random_range(0..=120),
            image_ref: String::new(),
            window: TimeWindow::new(start, end),
            preferred_receivers: Vec::new(),
            vicinity: 0.0,
        };
        (submit, d)
    }

    fn receiver(&self, agent: AgentId, rng: &mut ChaCha8Rng) -> (Minutes, RequirementRequest) {
        let w = self.cfg.working_hours;
        let start = rng.random_range(w.start + 120..=w.end - 60);
        let end = (start + rng.random_range(60..=300)).min(w.end);
        let submit = (start - rng.random_range(120..=300)).max(w.start);
        let (lo, hi) = self.cfg.requirement_grams;
        let r = RequirementRequest {
            id: RequestId::new(agent, 1),
            arrival: Default::default(),
            location: self.place(&self.layout.dropoff, rng),
            food: self.food(rng),
            amount: rng.random_range(lo..=hi),
            allocated: 0,
            window: TimeWindow::new(start, end),
            preferred_donors: Vec::new(),
        };
        (submit, r)
    }

    fn class(&self, food: FoodType) -> Perishability {
        self.taxonomy.perishability(food)
    }

    /// Short lists drawn from the nearest same-class agents on the other
    /// side that could actually trade: within a motored perishable trip,
    /// receiver ending no earlier than the donor, matching gates overlapping.
    fn assign_preferences(
        &self,
        donors: &mut [(Minutes, DonationRequest)],
        receivers: &mut [(Minutes, RequirementRequest)],
        rng: &mut ChaCha8Rng,
    ) {
        let th = &self.cfg.thresholds;
        let max = self.cfg.max_preferences;
        let compatible = |d: &DonationRequest, r: &RequirementRequest| {
            self.class(d.food) == self.class(r.food)
                && distance(d.location, r.location) <= th.t_p_m
                && r.window.end >= d.window.end
                && r.window.start - th.t_r <= d.window.end - th.t_d
                && d.window.start - th.t_d <= r.window.end - th.t_r
        };
        let nearest = |mut v: Vec<(f64, AgentId)>| -> Vec<AgentId> {
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v.into_iter().take(NEAREST).map(|(_, a)| a).collect()
        };
        let for_donors: Vec<Vec<AgentId>> = donors
            .iter()
            .map(|(_, d)| {
                nearest(
                    receivers
                        .iter()
                        .filter(|(_, r)| compatible(d, r))
                        .map(|(_, r)| (distance(d.location, r.location), r.id.agent))
                        .collect(),
                )
            })
            .collect();
        let for_receivers: Vec<Vec<AgentId>> = receivers
            .iter()
            .map(|(_, r)| {
                nearest(
                    donors
                        .iter()
                        .filter(|(_, d)| compatible(d, r))
                        .map(|(_, d)| (distance(d.location, r.location), d.id.agent))
                        .collect(),
                )
            })
            .collect();
        for ((_, d), near) in donors.iter_mut().zip(for_donors) {
            d.preferred_receivers = pick(&near, rng.random_range(0..=max), rng);
        }
        for ((_, r), near) in receivers.iter_mut().zip(for_receivers) {
            r.preferred_donors = pick(&near, rng.random_range(0..=max), rng);
        }
    }

    fn volunteer(
        &self,
        agent: AgentId,
        donors: &[(Minutes, DonationRequest)],
        receivers: &[(Minutes, RequirementRequest)],
        rng: &mut ChaCha8Rng,
    ) -> (Minutes, VolunteerRequest) {
        let cfg = self.cfg;
        let th = &cfg.thresholds;
        let w = cfg.working_hours;
        let Some((d_submit, d)) = donors.choose(rng) else {
            return self.free_volunteer(agent, rng);
        };
        let class = self.class(d.food);
        let compatible: Vec<&RequirementRequest> = receivers
            .iter()
            .map(|(_, r)| r)
            .filter(|r| self.class(r.food) == class && r.window.end >= d.window.end)
            .collect();
        let near: Vec<&RequirementRequest> = compatible
            .iter()
            .copied()
            .filter(|r| distance(r.location, d.location) <= th.t_p_m)
            .collect();
        let anchor = near.choose(rng).or_else(|| compatible.choose(rng)).copied();

        let mut destination = match anchor {
            Some(r) => around(cfg, r.location, 0.3, rng),
            None => self.place(&self.layout.dropoff, rng),
        };
        if distance(destination, d.location) < 1.0 {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            destination = clamp(cfg, Location::new(d.location.x + 5.0 * a.cos(), d.location.y + 5.0 * a.sin()));
        }
        let reach = 0.9 * th.t_l / 100.0 * distance(d.location, destination);
        let mut route = Route::new(around(cfg, d.location, reach, rng), destination);
        if !within_pickup_radius(d.location, &route, th.t_l) {
            route.start = d.location;
        }

        let start = (d.window.start - rng.random_range(0..=60)).max(w.start);
        let end = (d.window.end + rng.random_range(60..=240)).min(w.end);
        let submit = (d_submit + rng.random_range(-30..=30)).clamp(w.start, (d.window.end - th.t_d).max(w.start));
        let enrolled = rng.random_bool(cfg.enrolled);
        let v = VolunteerRequest {
            id: RequestId::new(agent, 1),
            arrival: Default::default(),
            route,
            motored: rng.random_bool(cfg.motored),
            ac: rng.random_bool(cfg.ac),
            payload_capacity: rng.random_range(cfg.min_payload..=cfg.max_payload),
            committed: 0,
            window: TimeWindow::new(start, end),
            receivers: match anchor {
                Some(r) if enrolled => vec![r.id.agent],
                _ => Vec::new(),
            },
        };
        (submit, v)
    }

    /// A volunteer with no donor to anchor to.
    fn free_volunteer(&self, agent: AgentId, rng: &mut ChaCha8Rng) -> (Minutes, VolunteerRequest) {
        let cfg = self.cfg;
        let w = cfg.working_hours;
        let start = rng.random_range(w.start..=w.end - 120);
        let end = (start + rng.random_range(120..=480)).min(w.end);
        let v = VolunteerRequest {
            id: RequestId::new(agent, 1),
            arrival: Default::default(),
            route: Route::new(self.place(&self.layout.pickup, rng), self.place(&self.layout.dropoff, rng)),
            motored: rng.random_bool(cfg.motored),
            ac: rng.random_bool(cfg.ac),
            payload_capacity: rng.random_range(cfg.min_payload..=cfg.max_payload),
            committed: 0,
            window: TimeWindow::new(start, end),
            receivers: Vec::new(),
        };
        (start, v)
    }
}

/// Candidates a preference list is drawn from.
const NEAREST: usize = 8;

fn pick(pool: &[AgentId], n: usize, rng: &mut ChaCha8Rng) -> Vec<AgentId> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(n);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_mix() {
        let c = ScenarioConfig::default().counts();
        assert_eq!(c, Counts { donors: 1750, receivers: 1750, volunteers: 1500 });
        let m = ScenarioConfig::default().counts_with_volunteer_multiple(0.25);
        assert_eq!(m.volunteers, 438);
    }

    #[test]
    fn zero_working_minutes_is_infeasible() {
        let cfg = ScenarioConfig { working_hours: TimeWindow::new(600, 600), ..Default::default() };
        let err = generate_scenario(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("infeasible scenario"));
    }

    #[test]
    fn bad_mix_is_rejected() {
        let cfg = ScenarioConfig {
            mix: Mix { donors: 0.5, receivers: 0.5, volunteers: 0.5 },
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ScenarioError::Invalid(_))));
    }
}

//! Planar city geometry: Euclidean distances, straight-segment routes,
//! pickup radii and drop-off bands, default vicinities and off-route cost.

use serde::{Deserialize, Serialize};

use crate::domain::{Location, Perishability, Thresholds};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub start: Location,
    pub destination: Location,
}

impl Route {
    pub const fn new(start: Location, destination: Location) -> Self {
        Self { start, destination }
    }

    pub fn length(&self) -> f64 {
        distance(self.start, self.destination)
    }

    pub fn is_degenerate(&self) -> bool {
        self.length() <= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("zero-length route")]
    ZeroLengthRoute,
}

/// Extra travel a volunteer incurs for one meal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub route: Route,
    pub pickup: Location,
    pub dropoff: Location,
    pub overhead_km: f64,
    pub overhead_pct: f64,
}

pub fn distance(a: Location, b: Location) -> f64 {
    libm::hypot(a.x - b.x, a.y - b.y)
}

/// Distance from `p` to the closed segment `route.start -> route.destination`.
pub fn point_to_segment_distance(p: Location, route: &Route) -> f64 {
    let (ax, ay) = (route.start.x, route.start.y);
    let (dx, dy) = (route.destination.x - ax, route.destination.y - ay);
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return distance(p, route.start);
    }
    let t = (((p.x - ax) * dx + (p.y - ay) * dy) / len_sq).clamp(0.0, 1.0);
    distance(p, Location::new(ax + t * dx, ay + t * dy))
}

fn band_radius(route: &Route, t_l: f64) -> f64 {
    t_l / 100.0 * route.length()
}

pub fn within_pickup_radius(donor: Location, route: &Route, t_l: f64) -> bool {
    if route.is_degenerate() {
        return false;
    }
    distance(donor, route.start) <= band_radius(route, t_l)
}

pub fn within_dropoff_band(receiver: Location, route: &Route, t_l: f64) -> bool {
    if route.is_degenerate() {
        return false;
    }
    point_to_segment_distance(receiver, route) <= band_radius(route, t_l)
}

/// Detour-and-return at the pickup plus detour-and-return at the drop-off.
pub fn off_route_overhead(
    route: &Route,
    pickup: Location,
    dropoff: Location,
) -> Result<DeliveryRecord, GeometryError> {
    let length = route.length();
    if length <= 0.0 {
        return Err(GeometryError::ZeroLengthRoute);
    }
    let overhead_km =
        2.0 * distance(route.start, pickup) + 2.0 * point_to_segment_distance(dropoff, route);
    Ok(DeliveryRecord {
        route: *route,
        pickup,
        dropoff,
        overhead_km,
        overhead_pct: 100.0 * overhead_km / length,
    })
}

/// Lower bound on a donor's vicinity. `motored` is `None` when no volunteer
/// was assigned.
pub fn default_vicinity(food: Perishability, motored: Option<bool>, th: &Thresholds) -> f64 {
    match (food, motored) {
        (Perishability::NonPerishable, _) => th.t_np,
        (Perishability::Perishable, Some(true)) => th.t_p_m,
        (Perishability::Perishable, _) => th.t_p_nm,
    }
}

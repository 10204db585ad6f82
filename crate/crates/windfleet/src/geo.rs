//! Spherical-earth geodesy, sized for metro-scale corridors.

use serde::{Deserialize, Serialize};

use crate::angle::Angle;

/// IUGG mean earth radius, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl LatLon {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Self {
        Self { lat_deg, lon_deg }
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (la, lb) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlat = lb - la;
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * s.sqrt().min(1.0).asin()
}

/// Initial great-circle course from `a` to `b`.
pub fn initial_course(a: LatLon, b: LatLon) -> Angle {
    let (la, lb) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let y = dlon.sin() * lb.cos();
    let x = la.cos() * lb.sin() - la.sin() * lb.cos() * dlon.cos();
    Angle::from_compass_deg(y.atan2(x).to_degrees())
}

/// Destination point after `distance_m` along a compass bearing.
pub fn destination(start: LatLon, bearing_compass_deg: f64, distance_m: f64) -> LatLon {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing_compass_deg.to_radians();
    let la = start.lat_deg.to_radians();
    let lat2 = (la.sin() * delta.cos() + la.cos() * delta.sin() * theta.cos()).asin();
    let lon2 = start.lon_deg.to_radians()
        + (theta.sin() * delta.sin() * la.cos()).atan2(delta.cos() - la.sin() * lat2.sin());
    LatLon::new(lat2.to_degrees(), lon2.to_degrees())
}

/// Linear interpolation between endpoints; adequate within a corridor.
pub fn interpolate(a: LatLon, b: LatLon, fraction: f64) -> LatLon {
    LatLon::new(
        a.lat_deg + (b.lat_deg - a.lat_deg) * fraction,
        a.lon_deg + (b.lon_deg - a.lon_deg) * fraction,
    )
}

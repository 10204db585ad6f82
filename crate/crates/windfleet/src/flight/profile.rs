//! Seven-phase mission profile geometry.
//!
//! Every phase except cruise has a fixed duration and a maxed-out
//! vertical rate, which pins its horizontal ground speed through the
//! published slope: V_h = V_v / slope. Cruise absorbs whatever ground
//! distance the climb and descent ladders do not cover.
//!
//! Phase table (durations s, vertical rates, slopes):
//!
//! | phase              | dur | V_v        | slope |
//! |--------------------|-----|------------|-------|
//! | hover climb        | 10  | +5 ft/s    |  --   |
//! | climb transition   | 60  | +300 ft/min| 6.1%  |
//! | climb              | 120 | +550 ft/min| 5.4%  |
//! | cruise             | open| 0          |  --   |
//! | descent transition | 120 | -620 ft/min| 5.4%  |
//! | descent            | 60  | -300 ft/min| 6.1%  |
//! | hover descent      | 10  | -5 ft/s    |  --   |
//!
//! The climb ladder tops out 42.672 m below where the descent ladder
//! begins; cruise carries that residual and is treated as level flight
//! for power purposes (vertical speed zero).

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::geo::{self, LatLon};
use crate::units::{ft_to_m, FT_PER_MIN_TO_MS, MILE_TO_M};

use super::{AircraftParams, FlightError};

pub const HOVER_DURATION_S: f64 = 10.0;
pub const CLIMB_TRANSITION_DURATION_S: f64 = 60.0;
pub const CLIMB_DURATION_S: f64 = 120.0;
pub const DESCENT_TRANSITION_DURATION_S: f64 = 120.0;
pub const DESCENT_DURATION_S: f64 = 60.0;
pub const CLIMB_TRANSITION_SLOPE: f64 = 0.061;
pub const CLIMB_SLOPE: f64 = 0.054;
pub const DESCENT_TRANSITION_SLOPE: f64 = 0.054;
pub const DESCENT_SLOPE: f64 = 0.061;
/// Hover fix 50 ft above the FATO, reached in the 10 s hover phase.
pub const HOVER_FIX_ALT_FT: f64 = 50.0;
pub const WAYPOINT_SPACING_M: f64 = MILE_TO_M;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    HoverClimb,
    ClimbTransition,
    Climb,
    Cruise,
    DescentTransition,
    Descent,
    HoverDescent,
}

impl PhaseKind {
    pub fn label(self) -> &'static str {
        match self {
            PhaseKind::HoverClimb => "hover_climb",
            PhaseKind::ClimbTransition => "climb_transition",
            PhaseKind::Climb => "climb",
            PhaseKind::Cruise => "cruise",
            PhaseKind::DescentTransition => "descent_transition",
            PhaseKind::Descent => "descent",
            PhaseKind::HoverDescent => "hover_descent",
        }
    }
}

impl std::fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One leg of the profile. Cruise leaves `duration_s`, `slope` and
/// `v_horizontal_ms` open (wind decides them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub duration_s: Option<f64>,
    /// Signed vertical speed, m/s.
    pub v_vertical_ms: f64,
    pub slope: Option<f64>,
    /// Target horizontal ground speed, m/s; zero while hovering.
    pub v_horizontal_ms: Option<f64>,
    /// Ground distance covered, m.
    pub ground_m: f64,
    /// Cumulative route ground distance at phase start, m.
    pub ground_start_m: f64,
    pub alt_start_m: f64,
    pub alt_end_m: f64,
}

/// Straight corridor between two vertiports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub origin: LatLon,
    pub destination: LatLon,
    pub distance_m: f64,
    /// Course in the local East-North frame, held for the whole leg.
    pub course: Angle,
}

impl Route {
    pub fn between(origin: LatLon, destination: LatLon) -> Self {
        Self {
            origin,
            destination,
            distance_m: geo::haversine_m(origin, destination),
            course: geo::initial_course(origin, destination),
        }
    }

    pub fn from_bearing(origin: LatLon, bearing_compass_deg: f64, distance_m: f64) -> Self {
        let destination = geo::destination(origin, bearing_compass_deg, distance_m);
        Self {
            origin,
            destination,
            distance_m,
            course: Angle::from_compass_deg(bearing_compass_deg),
        }
    }

    pub fn reversed(self) -> Self {
        Self {
            origin: self.destination,
            destination: self.origin,
            distance_m: self.distance_m,
            course: geo::initial_course(self.destination, self.origin),
        }
    }

    /// Position after covering a ground distance from the origin.
    pub fn position_at(self, ground_m: f64) -> LatLon {
        geo::interpolate(self.origin, self.destination, ground_m / self.distance_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightProfile {
    pub route: Route,
    /// The seven phases in flight order.
    pub phases: Vec<Phase>,
    pub cruise_m: f64,
    pub waypoint_spacing_m: f64,
}

impl FlightProfile {
    /// Ground track length of all non-cruise phases combined, m.
    pub fn overhead_ground_m() -> f64 {
        let vh_ct = 300.0 * FT_PER_MIN_TO_MS / CLIMB_TRANSITION_SLOPE;
        let vh_cl = 550.0 * FT_PER_MIN_TO_MS / CLIMB_SLOPE;
        let vh_dt = 620.0 * FT_PER_MIN_TO_MS / DESCENT_TRANSITION_SLOPE;
        let vh_de = 300.0 * FT_PER_MIN_TO_MS / DESCENT_SLOPE;
        vh_ct * CLIMB_TRANSITION_DURATION_S
            + vh_cl * CLIMB_DURATION_S
            + vh_dt * DESCENT_TRANSITION_DURATION_S
            + vh_de * DESCENT_DURATION_S
    }

    /// Cruise split into waypoint segments: (offset into cruise, length).
    pub fn cruise_segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n_full = (self.cruise_m / self.waypoint_spacing_m).floor() as usize;
        let remainder = self.cruise_m - n_full as f64 * self.waypoint_spacing_m;
        (0..n_full)
            .map(move |i| (i as f64 * self.waypoint_spacing_m, self.waypoint_spacing_m))
            .chain((remainder > 1e-9).then_some((n_full as f64 * self.waypoint_spacing_m, remainder)))
    }

    pub fn phase(&self, kind: PhaseKind) -> &Phase {
        self.phases
            .iter()
            .find(|p| p.kind == kind)
            .expect("profile holds all seven phases")
    }
}

/// Lays out the seven phases over a route.
pub fn build_profile(route: Route, params: &AircraftParams) -> Result<FlightProfile, FlightError> {
    params.validate()?;
    let hover_alt = ft_to_m(HOVER_FIX_ALT_FT);
    let vv_hover = hover_alt / HOVER_DURATION_S;
    let vv_ct = 300.0 * FT_PER_MIN_TO_MS;
    let vv_cl = 550.0 * FT_PER_MIN_TO_MS;
    let vv_dt = 620.0 * FT_PER_MIN_TO_MS;
    let vv_de = 300.0 * FT_PER_MIN_TO_MS;
    let vh_ct = vv_ct / CLIMB_TRANSITION_SLOPE;
    let vh_cl = vv_cl / CLIMB_SLOPE;
    let vh_dt = vv_dt / DESCENT_TRANSITION_SLOPE;
    let vh_de = vv_de / DESCENT_SLOPE;

    let overhead = FlightProfile::overhead_ground_m();
    let cruise_m = route.distance_m - overhead;
    if cruise_m <= 0.0 {
        return Err(FlightError::RouteTooShort {
            distance_m: route.distance_m,
            overhead_m: overhead,
        });
    }

    let climb_top = hover_alt + vv_ct * CLIMB_TRANSITION_DURATION_S + vv_cl * CLIMB_DURATION_S;
    let descent_top = hover_alt + vv_de * DESCENT_DURATION_S + vv_dt * DESCENT_TRANSITION_DURATION_S;

    let mut phases = Vec::with_capacity(7);
    let mut ground = 0.0;
    let mut push = |kind: PhaseKind,
                    duration_s: Option<f64>,
                    v_vertical_ms: f64,
                    slope: Option<f64>,
                    v_horizontal_ms: Option<f64>,
                    ground_m: f64,
                    alt_start_m: f64,
                    alt_end_m: f64| {
        phases.push(Phase {
            kind,
            duration_s,
            v_vertical_ms,
            slope,
            v_horizontal_ms,
            ground_m,
            ground_start_m: ground,
            alt_start_m,
            alt_end_m,
        });
        ground += ground_m;
    };

    push(PhaseKind::HoverClimb, Some(HOVER_DURATION_S), vv_hover, None, Some(0.0), 0.0, 0.0, hover_alt);
    push(
        PhaseKind::ClimbTransition,
        Some(CLIMB_TRANSITION_DURATION_S),
        vv_ct,
        Some(CLIMB_TRANSITION_SLOPE),
        Some(vh_ct),
        vh_ct * CLIMB_TRANSITION_DURATION_S,
        hover_alt,
        hover_alt + vv_ct * CLIMB_TRANSITION_DURATION_S,
    );
    push(
        PhaseKind::Climb,
        Some(CLIMB_DURATION_S),
        vv_cl,
        Some(CLIMB_SLOPE),
        Some(vh_cl),
        vh_cl * CLIMB_DURATION_S,
        hover_alt + vv_ct * CLIMB_TRANSITION_DURATION_S,
        climb_top,
    );
    push(PhaseKind::Cruise, None, 0.0, None, None, cruise_m, climb_top, descent_top);
    push(
        PhaseKind::DescentTransition,
        Some(DESCENT_TRANSITION_DURATION_S),
        -vv_dt,
        Some(DESCENT_TRANSITION_SLOPE),
        Some(vh_dt),
        vh_dt * DESCENT_TRANSITION_DURATION_S,
        descent_top,
        hover_alt + vv_de * DESCENT_DURATION_S,
    );
    push(
        PhaseKind::Descent,
        Some(DESCENT_DURATION_S),
        -vv_de,
        Some(DESCENT_SLOPE),
        Some(vh_de),
        vh_de * DESCENT_DURATION_S,
        hover_alt + vv_de * DESCENT_DURATION_S,
        hover_alt,
    );
    push(PhaseKind::HoverDescent, Some(HOVER_DURATION_S), -vv_hover, None, Some(0.0), 0.0, hover_alt, 0.0);

    Ok(FlightProfile {
        route,
        phases,
        cruise_m,
        waypoint_spacing_m: WAYPOINT_SPACING_M,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::miles_to_m;
    use approx::assert_relative_eq;

    fn test_route(miles: f64) -> Route {
        Route::from_bearing(LatLon::new(36.587, -121.843), 13.0, miles_to_m(miles))
    }

    #[test]
    fn horizontal_speeds_follow_slope_kinematics() {
        let profile = build_profile(test_route(80.0), &AircraftParams::default()).unwrap();
        let ct = profile.phase(PhaseKind::ClimbTransition);
        assert_relative_eq!(ct.v_horizontal_ms.unwrap(), 24.98360655737705, max_relative = 1e-12);
        // 300 ft/min over a 6.1% slope is 4918 ft/min of ground speed.
        assert_relative_eq!(
            ct.v_horizontal_ms.unwrap() / (0.3048 / 60.0),
            4918.032786885246,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            profile.phase(PhaseKind::Climb).v_horizontal_ms.unwrap(),
            51.74074074074074,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            profile.phase(PhaseKind::DescentTransition).v_horizontal_ms.unwrap(),
            58.32592592592592,
            max_relative = 1e-12
        );
        // Per-phase V_h = D_h / (D_v / V_v) exactly.
        for phase in &profile.phases {
            if let (Some(slope), Some(vh), Some(dur)) =
                (phase.slope, phase.v_horizontal_ms, phase.duration_s)
            {
                let d_v = phase.v_vertical_ms.abs() * dur;
                assert_relative_eq!(vh, phase.ground_m / (d_v / phase.v_vertical_ms.abs()), max_relative = 1e-12);
                assert_relative_eq!(phase.v_vertical_ms.abs() / vh, slope, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn overhead_ground_track_is_frozen() {
        assert_relative_eq!(
            FlightProfile::overhead_ground_m(),
            16_206.032786885246,
            max_relative = 1e-12
        );
    }

    #[test]
    fn hover_covers_fifty_feet_in_ten_seconds() {
        let profile = build_profile(test_route(80.0), &AircraftParams::default()).unwrap();
        let hover = profile.phase(PhaseKind::HoverClimb);
        assert_relative_eq!(hover.v_vertical_ms, 1.524, max_relative = 1e-12);
        assert_relative_eq!(hover.alt_end_m, 15.24, max_relative = 1e-12);
    }

    #[test]
    fn altitudes_are_continuous() {
        let profile = build_profile(test_route(80.0), &AircraftParams::default()).unwrap();
        for pair in profile.phases.windows(2) {
            assert_relative_eq!(pair[0].alt_end_m, pair[1].alt_start_m, epsilon = 1e-12);
        }
        assert_eq!(profile.phases[0].alt_start_m, 0.0);
        assert_eq!(profile.phases[6].alt_end_m, 0.0);
        // Cruise carries the climb/descent ladder mismatch.
        let cruise = profile.phase(PhaseKind::Cruise);
        assert_relative_eq!(cruise.alt_end_m - cruise.alt_start_m, 42.672, max_relative = 1e-9);
    }

    #[test]
    fn ground_distances_partition_the_route() {
        let route = test_route(80.0);
        let profile = build_profile(route, &AircraftParams::default()).unwrap();
        let total: f64 = profile.phases.iter().map(|p| p.ground_m).sum();
        assert_relative_eq!(total, route.distance_m, max_relative = 1e-12);
        let cruise = profile.phase(PhaseKind::Cruise);
        assert_relative_eq!(
            cruise.ground_m,
            route.distance_m - 16_206.032786885246,
            max_relative = 1e-12
        );
    }

    #[test]
    fn short_route_is_rejected() {
        let err = build_profile(test_route(10.0), &AircraftParams::default()).unwrap_err();
        assert!(matches!(err, FlightError::RouteTooShort { .. }));
        // 10.07 miles squeaks past the 10.0699-mile overhead.
        assert!(build_profile(test_route(10.07), &AircraftParams::default()).is_ok());
    }

    #[test]
    fn cruise_segments_are_mile_spaced() {
        let profile = build_profile(test_route(150.0), &AircraftParams::default()).unwrap();
        let segments: Vec<_> = profile.cruise_segments().collect();
        // 150 mi less the 10.07 mi overhead leaves 139.93 cruise miles:
        // 139 full segments and a remainder.
        assert_eq!(segments.len(), 140);
        for (offset, len) in &segments[..139] {
            assert_relative_eq!(*len, MILE_TO_M, max_relative = 1e-12);
            assert_relative_eq!(*offset, MILE_TO_M * (offset / MILE_TO_M).round(), epsilon = 1e-6);
        }
        for pair in segments.windows(2) {
            assert_relative_eq!(pair[1].0 - pair[0].0, MILE_TO_M, max_relative = 1e-12);
        }
        let total: f64 = segments.iter().map(|(_, l)| l).sum();
        assert_relative_eq!(total, profile.cruise_m, max_relative = 1e-12);
        assert!(segments[139].1 > 0.0 && segments[139].1 < MILE_TO_M);
    }

    #[test]
    fn route_between_round_trips_with_bearing_form() {
        let origin = LatLon::new(36.587, -121.843);
        let by_bearing = test_route(80.0);
        let between = Route::between(origin, by_bearing.destination);
        assert_relative_eq!(between.distance_m, by_bearing.distance_m, max_relative = 1e-6);
        assert!(between.course.signed_delta(by_bearing.course).abs() < 1e-3);
    }
}

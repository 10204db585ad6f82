//! Wind-triangle solution for the cruise phase.
//!
//! The aircraft flies a fixed course chi over the ground while holding
//! true airspeed. The heading psi offsets into the wind so the
//! crosswind component cancels:
//!
//! ```text
//! sin(chi - psi) = (|V_W| / V_C) sin(phi - chi)
//! ```
//!
//! where phi is the wind's direction of travel. The resulting ground
//! speed along course is sqrt(V_C^2 - cross^2) + along, with cross and
//! along the wind components across and along the course.

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::wind::WindVector;

use super::FlightError;

/// Planar velocity in the local East-North frame, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity2 {
    pub east_ms: f64,
    pub north_ms: f64,
}

impl Velocity2 {
    pub fn from_angle_speed(direction: Angle, speed_ms: f64) -> Self {
        let (east, north) = direction.unit_vector();
        Self { east_ms: east * speed_ms, north_ms: north * speed_ms }
    }

    pub fn speed_ms(self) -> f64 {
        self.east_ms.hypot(self.north_ms)
    }

    pub fn direction(self) -> Angle {
        Angle::from_radians(self.north_ms.atan2(self.east_ms))
    }

    pub fn plus_wind(self, wind: WindVector) -> Self {
        Self {
            east_ms: self.east_ms + wind.east_ms,
            north_ms: self.north_ms + wind.north_ms,
        }
    }
}

/// Wind components along and across a course: positive along is a
/// tailwind, positive cross blows left-to-right seen from the course.
pub(crate) fn wind_components(course: Angle, wind: WindVector) -> (f64, f64) {
    let (ce, cn) = course.unit_vector();
    let along = ce * wind.east_ms + cn * wind.north_ms;
    let cross = ce * wind.north_ms - cn * wind.east_ms;
    (along, cross)
}

/// Heading that holds the course at the given true airspeed.
pub fn solve_crab(course: Angle, airspeed_ms: f64, wind: WindVector) -> Result<Angle, FlightError> {
    if !(airspeed_ms > 0.0) {
        return Err(FlightError::NonPositiveAirspeed(airspeed_ms));
    }
    let (_, cross) = wind_components(course, wind);
    let ratio = cross / airspeed_ms;
    if ratio.abs() > 1.0 {
        return Err(FlightError::CrabInfeasible { cross_ms: cross, airspeed_ms });
    }
    Ok(Angle::from_radians(course.radians() - ratio.asin()))
}

/// Signed ground speed along the course while crabbing; <= 0 means the
/// wind fully cancels forward progress.
pub fn cruise_ground_speed(
    course: Angle,
    airspeed_ms: f64,
    wind: WindVector,
) -> Result<f64, FlightError> {
    if !(airspeed_ms > 0.0) {
        return Err(FlightError::NonPositiveAirspeed(airspeed_ms));
    }
    let (along, cross) = wind_components(course, wind);
    let ratio = cross / airspeed_ms;
    if ratio.abs() > 1.0 {
        return Err(FlightError::CrabInfeasible { cross_ms: cross, airspeed_ms });
    }
    Ok((airspeed_ms * airspeed_ms - cross * cross).sqrt() + along)
}

/// True airspeed vector needed to hold a ground velocity in wind.
pub fn required_true_airspeed(v_ground: Velocity2, wind: WindVector) -> Velocity2 {
    Velocity2 {
        east_ms: v_ground.east_ms - wind.east_ms,
        north_ms: v_ground.north_ms - wind.north_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const VC: f64 = 67.056;

    #[test]
    fn calm_wind_heading_equals_course() {
        let chi = Angle::from_compass_deg(13.0);
        let psi = solve_crab(chi, VC, WindVector::CALM).unwrap();
        assert_relative_eq!(psi.radians(), chi.radians(), max_relative = 1e-15);
        assert_relative_eq!(
            cruise_ground_speed(chi, VC, WindVector::CALM).unwrap(),
            VC,
            max_relative = 1e-15
        );
    }

    #[test]
    fn pure_headwind_needs_no_crab() {
        let chi = Angle::from_radians(0.0);
        let wind = WindVector { east_ms: -11.4, north_ms: 0.0 };
        let psi = solve_crab(chi, VC, wind).unwrap();
        assert_relative_eq!(psi.radians(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            cruise_ground_speed(chi, VC, wind).unwrap(),
            55.656,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pure_crosswind_matches_vector_addition() {
        // Course due East, wind due North at 0.6 of airspeed: the crab
        // angle is asin(0.6) = 36.87 degrees and ground speed is 0.8 VC.
        let chi = Angle::from_radians(0.0);
        let wind = WindVector { east_ms: 0.0, north_ms: 0.6 * VC };
        let psi = solve_crab(chi, VC, wind).unwrap();
        assert_relative_eq!(
            chi.signed_delta(psi).abs(),
            0.6f64.asin(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            chi.signed_delta(psi).abs().to_degrees(),
            36.86989764584402,
            max_relative = 1e-12
        );
        let ground = Velocity2::from_angle_speed(psi, VC).plus_wind(wind);
        assert_relative_eq!(ground.speed_ms(), 0.8 * VC, max_relative = 1e-12);
        assert_relative_eq!(ground.direction().radians(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn excess_crosswind_is_infeasible() {
        let chi = Angle::from_radians(0.0);
        let wind = WindVector { east_ms: 0.0, north_ms: 1.01 * VC };
        assert!(matches!(
            solve_crab(chi, VC, wind),
            Err(FlightError::CrabInfeasible { .. })
        ));
    }

    #[test]
    fn airspeed_round_trip_is_exact() {
        let wind = WindVector { east_ms: -10.0, north_ms: 4.0 };
        let v_gs = Velocity2 { east_ms: 40.0, north_ms: 0.0 };
        let v_t = required_true_airspeed(v_gs, wind);
        assert_eq!(v_t, Velocity2 { east_ms: 50.0, north_ms: -4.0 });
        let back = v_t.plus_wind(wind);
        assert_relative_eq!(back.east_ms, v_gs.east_ms, epsilon = 1e-12);
        assert_relative_eq!(back.north_ms, v_gs.north_ms, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        /// The two hard checks: the crabbed ground track points along
        /// the course and the airspeed magnitude is exactly V_C.
        #[test]
        fn crab_residuals_vanish(
            course_rad in 0.0..std::f64::consts::TAU,
            wind_speed in 0.0..0.9 * VC,
            wind_dir in 0.0..std::f64::consts::TAU,
        ) {
            let chi = Angle::from_radians(course_rad);
            let wind = WindVector {
                east_ms: wind_speed * wind_dir.cos(),
                north_ms: wind_speed * wind_dir.sin(),
            };
            let psi = solve_crab(chi, VC, wind).unwrap();
            let v_t = Velocity2::from_angle_speed(psi, VC);
            prop_assert!((v_t.speed_ms() - VC).abs() / VC < 1e-9);
            let ground = v_t.plus_wind(wind);
            let gs = cruise_ground_speed(chi, VC, wind).unwrap();
            prop_assert!((ground.speed_ms() - gs.abs()).abs() < 1e-9);
            if gs > 1e-6 {
                prop_assert!(ground.direction().signed_delta(chi).abs() < 1e-9);
            }
        }

        #[test]
        fn true_airspeed_inverts_wind(
            ge in -80.0..80.0f64, gn in -80.0..80.0f64,
            we in -30.0..30.0f64, wn in -30.0..30.0f64,
        ) {
            let wind = WindVector { east_ms: we, north_ms: wn };
            let v_gs = Velocity2 { east_ms: ge, north_ms: gn };
            let back = required_true_airspeed(v_gs, wind).plus_wind(wind);
            prop_assert!((back.east_ms - ge).abs() < 1e-12);
            prop_assert!((back.north_ms - gn).abs() < 1e-12);
        }
    }
}

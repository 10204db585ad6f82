//! Per-phase electrical power.
//!
//! Hover (rotor-borne):
//!
//! ```text
//! P = [ (f W / FoM) sqrt(f W / A / (2 rho)) + W v / 2 ] / eta_hover
//! ```
//!
//! Climb and descent (wing-borne, drag polar):
//!
//! ```text
//! P = [ W V_v + 1/2 rho V^3 S C_D0 + K W^2 / (1/2 rho V S) ] / eta
//! ```
//!
//! Cruise (wing-borne, level):
//!
//! ```text
//! P = W V / (L/D) / eta_cruise
//! ```
//!
//! W is weight in newtons. Climb/descent power is floored at zero: the
//! battery does not regenerate on steep descents.

use crate::units::{AIR_DENSITY_KGM3, GRAVITY_MS2};

use super::{AircraftParams, FlightError};

/// Lift-induced drag coefficient K = 1 / (4 C_D0 (L/D)_max^2).
pub fn induced_drag_k(c_d0: f64, ld_max: f64) -> Result<f64, FlightError> {
    if !(c_d0 > 0.0) {
        return Err(FlightError::NonPositiveParam { name: "c_d0", value: c_d0 });
    }
    if !(ld_max > 0.0) {
        return Err(FlightError::NonPositiveParam { name: "ld_max", value: ld_max });
    }
    Ok(1.0 / (4.0 * c_d0 * ld_max * ld_max))
}

fn weight_newtons(total_mass_kg: f64) -> Result<f64, FlightError> {
    if !(total_mass_kg > 0.0) {
        return Err(FlightError::NonPositiveParam {
            name: "total_mass_kg",
            value: total_mass_kg,
        });
    }
    Ok(total_mass_kg * GRAVITY_MS2)
}

fn check_rho(rho: f64) -> Result<(), FlightError> {
    if !(rho > 0.0) {
        return Err(FlightError::NonPositiveParam { name: "rho", value: rho });
    }
    Ok(())
}

/// Rotor-borne power in watts; `v_vertical_ms` is signed (+ climb).
pub fn hover_power(
    params: &AircraftParams,
    total_mass_kg: f64,
    v_vertical_ms: f64,
    rho: f64,
) -> Result<f64, FlightError> {
    check_rho(rho)?;
    let weight = weight_newtons(total_mass_kg)?;
    let thrust = params.fuselage_factor * weight;
    let induced = (thrust / params.figure_of_merit)
        * (thrust / params.disk_area_m2 / (2.0 * rho)).sqrt();
    Ok((induced + weight * v_vertical_ms / 2.0) / params.eta_hover)
}

/// Wing-borne climb or descent power in watts, floored at zero.
/// `v_air_ms` is true airspeed; `v_vertical_ms` is signed and selects
/// the efficiency (climb for >= 0, descent otherwise).
pub fn climb_descent_power(
    params: &AircraftParams,
    total_mass_kg: f64,
    v_air_ms: f64,
    v_vertical_ms: f64,
    rho: f64,
) -> Result<f64, FlightError> {
    check_rho(rho)?;
    if !(v_air_ms > 0.0) {
        return Err(FlightError::NonPositiveAirspeed(v_air_ms));
    }
    let weight = weight_newtons(total_mass_kg)?;
    let k = induced_drag_k(params.c_d0, params.ld_max)?;
    let dynamic = 0.5 * rho * v_air_ms * params.wing_area_m2;
    let parasite = dynamic * v_air_ms * v_air_ms * params.c_d0;
    let induced = k * weight * weight / dynamic;
    let eta = if v_vertical_ms >= 0.0 { params.eta_climb } else { params.eta_descent };
    Ok(((weight * v_vertical_ms + parasite + induced) / eta).max(0.0))
}

/// Level cruise power in watts at a true airspeed.
pub fn cruise_power(
    params: &AircraftParams,
    total_mass_kg: f64,
    v_air_ms: f64,
) -> Result<f64, FlightError> {
    if !(v_air_ms > 0.0) {
        return Err(FlightError::NonPositiveAirspeed(v_air_ms));
    }
    let weight = weight_newtons(total_mass_kg)?;
    Ok(weight * v_air_ms / params.ld_cruise / params.eta_cruise)
}

/// Standard sea-level air density used throughout the profile.
pub(crate) const RHO: f64 = AIR_DENSITY_KGM3;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> AircraftParams {
        AircraftParams::default()
    }

    #[test]
    fn induced_drag_matches_definition() {
        assert_relative_eq!(
            induced_drag_k(0.015, 18.0).unwrap(),
            0.051440329218107005,
            max_relative = 1e-12
        );
        assert_relative_eq!(induced_drag_k(0.25, 1.0).unwrap(), 1.0, max_relative = 1e-12);
        // Doubling (L/D)_max quarters K.
        let k1 = induced_drag_k(0.015, 18.0).unwrap();
        let k2 = induced_drag_k(0.015, 36.0).unwrap();
        assert_relative_eq!(k1 / k2, 4.0, max_relative = 1e-12);
        assert!(induced_drag_k(0.0, 18.0).is_err());
        assert!(induced_drag_k(0.015, -1.0).is_err());
    }

    #[test]
    fn hover_power_matches_frozen_reference() {
        // Wide-rotor variant: 60 m^2 disk, 50 ft hover climb in 10 s.
        let wide = AircraftParams { disk_area_m2: 60.0, ..params() };
        let p = hover_power(&wide, 2182.0, 1.524, RHO).unwrap();
        assert_relative_eq!(p, 416_055.62635007646, max_relative = 1e-9);
        assert!((p / 1000.0 - 416.0).abs() < 0.1);
        // Default 12 m^2 disk.
        let p12 = hover_power(&params(), 2182.0, 1.524, RHO).unwrap();
        assert_relative_eq!(p12, 906_617.447154519, max_relative = 1e-9);
    }

    #[test]
    fn hover_power_monotone_in_vertical_speed() {
        let p0 = hover_power(&params(), 2182.0, 0.0, RHO).unwrap();
        let p1 = hover_power(&params(), 2182.0, 1.524, RHO).unwrap();
        assert!(p0 < p1);
    }

    #[test]
    fn hover_induced_term_scales_with_inverse_sqrt_density() {
        // Quadrupling rho halves the induced term and leaves the climb
        // term unchanged.
        let p = params();
        let w = 2182.0 * GRAVITY_MS2;
        let climb_term = w * 1.524 / 2.0 / p.eta_hover;
        let induced_1 = hover_power(&p, 2182.0, 1.524, RHO).unwrap() - climb_term;
        let induced_4 = hover_power(&p, 2182.0, 1.524, 4.0 * RHO).unwrap() - climb_term;
        assert_relative_eq!(induced_1 / induced_4, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn climb_power_matches_frozen_reference() {
        let p = climb_descent_power(&params(), 2182.0, 45.0, 2.794, RHO).unwrap();
        assert_relative_eq!(p, 160_475.8239647319, max_relative = 1e-9);
        let d = climb_descent_power(
            &params(),
            2182.0,
            58.325925925925926,
            -3.1496,
            RHO,
        )
        .unwrap();
        assert_relative_eq!(d, 8_257.761578679714, max_relative = 1e-9);
    }

    #[test]
    fn descent_is_cheaper_than_climb_at_equal_rate() {
        let up = climb_descent_power(&params(), 2182.0, 45.0, 2.794, RHO).unwrap();
        let down = climb_descent_power(&params(), 2182.0, 45.0, -2.794, RHO).unwrap();
        assert!(down < up);
    }

    #[test]
    fn steep_descent_floors_at_zero() {
        let p = climb_descent_power(&params(), 2182.0, 30.0, -30.0, RHO).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn zero_airspeed_is_a_domain_error() {
        assert!(matches!(
            climb_descent_power(&params(), 2182.0, 0.0, 2.0, RHO),
            Err(FlightError::NonPositiveAirspeed(_))
        ));
        assert!(cruise_power(&params(), 2182.0, 0.0).is_err());
    }

    #[test]
    fn cruise_power_matches_frozen_reference() {
        let p = cruise_power(&params(), 2182.0, 67.056).unwrap();
        assert_relative_eq!(p, 88_572.32618992592, max_relative = 1e-9);
    }

    #[test]
    fn cruise_power_scales_linearly_in_speed_and_inverse_ld() {
        let p = params();
        let base = cruise_power(&p, 2182.0, 67.056).unwrap();
        assert_relative_eq!(
            cruise_power(&p, 2182.0, 2.0 * 67.056).unwrap(),
            2.0 * base,
            max_relative = 1e-12
        );
        let doubled_ld = AircraftParams { ld_cruise: 36.0, ..p };
        assert_relative_eq!(
            cruise_power(&doubled_ld, 2182.0, 67.056).unwrap(),
            base / 2.0,
            max_relative = 1e-12
        );
    }
}

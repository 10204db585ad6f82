//! Flight dynamics: the seven-phase mission profile, wind-triangle
//! cruise, per-phase power, and energy integration along a route.

mod crab;
mod power;
mod profile;
mod simulate;

pub use crab::{cruise_ground_speed, required_true_airspeed, solve_crab, Velocity2};
pub use power::{climb_descent_power, cruise_power, hover_power, induced_drag_k};
pub use profile::{build_profile, FlightProfile, Phase, PhaseKind, Route};
pub use simulate::{simulate_flight, FlightResult, PhaseResult, TraceSample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units;
use crate::wind::WindError;

#[derive(Debug, Error)]
pub enum FlightError {
    #[error("aircraft parameter {name} must be strictly positive, found {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("efficiency {name} must lie in (0, 1], found {value}")]
    BadEfficiency { name: &'static str, value: f64 },
    #[error("fraction {name} must lie in (0, 1], found {value}")]
    BadFraction { name: &'static str, value: f64 },
    #[error("{pax} passengers exceed the {seats} seats")]
    TooManyPassengers { pax: u32, seats: u32 },
    #[error("airspeed must be strictly positive, found {0} m/s")]
    NonPositiveAirspeed(f64),
    #[error("crosswind {cross_ms} m/s exceeds airspeed {airspeed_ms} m/s; no crab solution")]
    CrabInfeasible { cross_ms: f64, airspeed_ms: f64 },
    #[error(
        "along-track wind {along_ms} m/s cancels cruise speed {cruise_speed_ms} m/s; \
         destination unreachable"
    )]
    FlightInfeasible { along_ms: f64, cruise_speed_ms: f64 },
    #[error(
        "route of {distance_m} m is shorter than the {overhead_m} m of combined \
         climb and descent ground track"
    )]
    RouteTooShort { distance_m: f64, overhead_m: f64 },
    #[error(transparent)]
    Wind(#[from] WindError),
}

/// How occupied seats affect the mass used in the power equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassModel {
    /// Always fly at maximum take-off mass (conservative).
    #[default]
    Mtom,
    /// Empty mass plus one passenger mass per occupied seat.
    PerSeat,
}

/// Physical constants of the vehicle. Defaults model a 2.2 t
/// lift-plus-cruise eVTOL with a 160 kWh battery cruising at 150 mph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AircraftParams {
    pub mtom_kg: f64,
    /// Fuselage-interference correction on rotor thrust.
    pub fuselage_factor: f64,
    pub figure_of_merit: f64,
    pub disk_area_m2: f64,
    pub wing_area_m2: f64,
    /// Zero-lift drag coefficient.
    pub c_d0: f64,
    pub ld_max: f64,
    pub ld_cruise: f64,
    pub ld_climb: f64,
    /// Design lift coefficient; carried for reporting, not used by the
    /// power equations.
    pub lift_coefficient: f64,
    pub eta_hover: f64,
    pub eta_climb: f64,
    pub eta_descent: f64,
    pub eta_cruise: f64,
    pub battery_capacity_kwh: f64,
    pub cruise_speed_ms: f64,
    pub seats: u32,
    pub passenger_mass_kg: f64,
    pub mass_model: MassModel,
    /// Floor on the airspeed fed to the drag polar, as a fraction of
    /// cruise speed; keeps the induced term finite when a tailwind
    /// erases most of a slow phase's airspeed.
    pub min_polar_airspeed_fraction: f64,
    /// Cruise ground-speed soft check, as a fraction of cruise speed;
    /// below it the segment falls back to constant ground speed.
    pub ground_speed_threshold_fraction: f64,
}

impl Default for AircraftParams {
    fn default() -> Self {
        Self {
            mtom_kg: 2182.0,
            fuselage_factor: 1.03,
            figure_of_merit: 0.8,
            disk_area_m2: 12.0,
            wing_area_m2: 13.0,
            c_d0: 0.015,
            ld_max: 18.0,
            ld_cruise: 18.0,
            ld_climb: 15.6,
            lift_coefficient: 1.5,
            eta_hover: 0.85,
            eta_climb: 0.85,
            eta_descent: 0.85,
            eta_cruise: 0.90,
            battery_capacity_kwh: 160.0,
            cruise_speed_ms: units::mph_to_ms(150.0),
            seats: 4,
            passenger_mass_kg: 100.0,
            mass_model: MassModel::Mtom,
            min_polar_airspeed_fraction: 0.3,
            ground_speed_threshold_fraction: 0.3,
        }
    }
}

impl AircraftParams {
    pub fn validate(&self) -> Result<(), FlightError> {
        let positives = [
            ("mtom_kg", self.mtom_kg),
            ("fuselage_factor", self.fuselage_factor),
            ("figure_of_merit", self.figure_of_merit),
            ("disk_area_m2", self.disk_area_m2),
            ("wing_area_m2", self.wing_area_m2),
            ("c_d0", self.c_d0),
            ("ld_max", self.ld_max),
            ("ld_cruise", self.ld_cruise),
            ("ld_climb", self.ld_climb),
            ("lift_coefficient", self.lift_coefficient),
            ("battery_capacity_kwh", self.battery_capacity_kwh),
            ("cruise_speed_ms", self.cruise_speed_ms),
            ("passenger_mass_kg", self.passenger_mass_kg),
            ("seats", f64::from(self.seats)),
        ];
        for (name, value) in positives {
            if !(value > 0.0 && value.is_finite()) {
                return Err(FlightError::NonPositiveParam { name, value });
            }
        }
        let efficiencies = [
            ("eta_hover", self.eta_hover),
            ("eta_climb", self.eta_climb),
            ("eta_descent", self.eta_descent),
            ("eta_cruise", self.eta_cruise),
        ];
        for (name, value) in efficiencies {
            if !(value > 0.0 && value <= 1.0) {
                return Err(FlightError::BadEfficiency { name, value });
            }
        }
        let fractions = [
            ("min_polar_airspeed_fraction", self.min_polar_airspeed_fraction),
            ("ground_speed_threshold_fraction", self.ground_speed_threshold_fraction),
        ];
        for (name, value) in fractions {
            if !(value > 0.0 && value <= 1.0) {
                return Err(FlightError::BadFraction { name, value });
            }
        }
        Ok(())
    }

    /// Mass entering the power equations for a given occupancy, kg.
    pub fn total_mass_kg(&self, pax: u32) -> Result<f64, FlightError> {
        if pax > self.seats {
            return Err(FlightError::TooManyPassengers { pax, seats: self.seats });
        }
        Ok(match self.mass_model {
            MassModel::Mtom => self.mtom_kg,
            MassModel::PerSeat => {
                self.mtom_kg - f64::from(self.seats - pax) * self.passenger_mass_kg
            }
        })
    }

    pub fn min_polar_airspeed_ms(&self) -> f64 {
        self.min_polar_airspeed_fraction * self.cruise_speed_ms
    }

    pub fn ground_speed_threshold_ms(&self) -> f64 {
        self.ground_speed_threshold_fraction * self.cruise_speed_ms
    }

    /// Energy above the 20% reserve, kWh.
    pub fn usable_battery_kwh(&self) -> f64 {
        (1.0 - crate::soc::RESERVE_FRACTION) * self.battery_capacity_kwh
    }
}

//! Energy and duration integration along a route under wind.
//!
//! Non-cruise phases hold the profile's ground speed (required time of
//! arrival), so wind changes the true airspeed and therefore power but
//! not duration. Cruise holds true airspeed at V_C and crabs, so wind
//! changes ground speed and therefore duration but not power. A cruise
//! segment whose crabbed ground speed falls below the soft threshold
//! switches to the RTA method: hold the threshold ground speed and pay
//! for whatever airspeed that demands.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::LatLon;
use crate::soc::SocLadder;
use crate::units::joules_to_kwh;
use crate::wind::WindSource;

use super::crab::{cruise_ground_speed, required_true_airspeed, solve_crab, wind_components, Velocity2};
use super::power::{climb_descent_power, cruise_power, hover_power, RHO};
use super::profile::{FlightProfile, PhaseKind};
use super::{AircraftParams, FlightError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub elapsed_s: f64,
    pub position: LatLon,
    pub true_airspeed: Velocity2,
    pub ground_velocity: Velocity2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub kind: PhaseKind,
    pub duration_s: f64,
    pub energy_kwh: f64,
    pub mean_power_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightResult {
    pub phases: Vec<PhaseResult>,
    pub total_duration_s: f64,
    pub total_energy_kwh: f64,
    /// Battery fraction consumed.
    pub soc_fraction: f64,
    /// Whole ladder levels consumed (rounded up).
    pub soc_levels: u32,
    /// Cruise segments that needed the constant-ground-speed fallback.
    pub fallback_segments: u32,
    pub trace: Vec<TraceSample>,
}

impl FlightResult {
    /// True when the leg fits in the battery above the reserve.
    pub fn within_usable_battery(&self, params: &AircraftParams) -> bool {
        self.total_energy_kwh <= params.usable_battery_kwh()
    }
}

pub fn simulate_flight<S: WindSource + ?Sized>(
    profile: &FlightProfile,
    params: &AircraftParams,
    ladder: SocLadder,
    wind: &S,
    departure: DateTime<Utc>,
    pax: u32,
) -> Result<FlightResult, FlightError> {
    params.validate()?;
    let mass = params.total_mass_kg(pax)?;
    let course = profile.route.course;
    let v_cruise = params.cruise_speed_ms;
    let threshold = params.ground_speed_threshold_ms();
    let polar_floor = params.min_polar_airspeed_ms();

    let mut phases = Vec::with_capacity(profile.phases.len());
    let mut trace = Vec::new();
    let mut elapsed = 0.0f64;
    let mut fallback_segments = 0u32;

    for phase in &profile.phases {
        let result = match phase.kind {
            PhaseKind::HoverClimb | PhaseKind::HoverDescent => {
                let duration = phase.duration_s.expect("hover duration fixed");
                let power = hover_power(params, mass, phase.v_vertical_ms, RHO)?;
                trace.push(TraceSample {
                    elapsed_s: elapsed,
                    position: profile.route.position_at(phase.ground_start_m),
                    true_airspeed: Velocity2::default(),
                    ground_velocity: Velocity2::default(),
                });
                PhaseResult {
                    kind: phase.kind,
                    duration_s: duration,
                    energy_kwh: joules_to_kwh(power * duration),
                    mean_power_kw: power / 1e3,
                }
            }
            PhaseKind::ClimbTransition
            | PhaseKind::Climb
            | PhaseKind::DescentTransition
            | PhaseKind::Descent => {
                let duration = phase.duration_s.expect("phase duration fixed");
                let v_h = phase.v_horizontal_ms.expect("sloped phase ground speed fixed");
                let mid = profile.route.position_at(phase.ground_start_m + phase.ground_m / 2.0);
                let w = wind.wind_at(mid, at(departure, elapsed))?;
                let v_ground = Velocity2::from_angle_speed(course, v_h);
                let v_true = required_true_airspeed(v_ground, w);
                let airspeed = v_true.speed_ms().max(polar_floor);
                let power = climb_descent_power(params, mass, airspeed, phase.v_vertical_ms, RHO)?;
                trace.push(TraceSample {
                    elapsed_s: elapsed,
                    position: mid,
                    true_airspeed: v_true,
                    ground_velocity: v_ground,
                });
                PhaseResult {
                    kind: phase.kind,
                    duration_s: duration,
                    energy_kwh: joules_to_kwh(power * duration),
                    mean_power_kw: power / 1e3,
                }
            }
            PhaseKind::Cruise => {
                let mut duration = 0.0;
                let mut energy_j = 0.0;
                for (offset, length) in profile.cruise_segments() {
                    let mid = profile
                        .route
                        .position_at(phase.ground_start_m + offset + length / 2.0);
                    let w = wind.wind_at(mid, at(departure, elapsed + duration))?;
                    let (along, cross) = wind_components(course, w);
                    if along <= -v_cruise {
                        return Err(FlightError::FlightInfeasible {
                            along_ms: along,
                            cruise_speed_ms: v_cruise,
                        });
                    }
                    let crabbed = if cross.abs() <= v_cruise {
                        Some(cruise_ground_speed(course, v_cruise, w)?)
                    } else {
                        None
                    };
                    let (power, ground_speed, v_true) = match crabbed {
                        Some(gs) if gs >= threshold => {
                            let heading = solve_crab(course, v_cruise, w)?;
                            let v_true = Velocity2::from_angle_speed(heading, v_cruise);
                            (cruise_power(params, mass, v_cruise)?, gs, v_true)
                        }
                        _ => {
                            // RTA fallback: hold the threshold ground
                            // speed and accept the off-optimal airspeed.
                            fallback_segments += 1;
                            let v_ground = Velocity2::from_angle_speed(course, threshold);
                            let v_true = required_true_airspeed(v_ground, w);
                            (cruise_power(params, mass, v_true.speed_ms())?, threshold, v_true)
                        }
                    };
                    let seg_duration = length / ground_speed;
                    trace.push(TraceSample {
                        elapsed_s: elapsed + duration,
                        position: mid,
                        true_airspeed: v_true,
                        ground_velocity: v_true.plus_wind(w),
                    });
                    duration += seg_duration;
                    energy_j += power * seg_duration;
                }
                let energy_kwh = joules_to_kwh(energy_j);
                PhaseResult {
                    kind: phase.kind,
                    duration_s: duration,
                    energy_kwh,
                    mean_power_kw: if duration > 0.0 { energy_j / duration / 1e3 } else { 0.0 },
                }
            }
        };
        elapsed += result.duration_s;
        phases.push(result);
    }

    let total_duration_s = phases.iter().map(|p| p.duration_s).sum();
    let total_energy_kwh: f64 = phases.iter().map(|p| p.energy_kwh).sum();
    Ok(FlightResult {
        soc_fraction: total_energy_kwh / params.battery_capacity_kwh,
        soc_levels: ladder.levels_for_energy(total_energy_kwh, params.battery_capacity_kwh),
        total_duration_s,
        total_energy_kwh,
        fallback_segments,
        phases,
        trace,
    })
}

fn at(departure: DateTime<Utc>, elapsed_s: f64) -> DateTime<Utc> {
    departure + Duration::microseconds((elapsed_s * 1e6).round() as i64)
}

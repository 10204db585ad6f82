//! Day-level operational metrics replayed from an event log.
//!
//! Everything here is derived purely from the log, so metrics can be
//! recomputed offline from a persisted CSV and must agree with the
//! values the engine reports at the end of a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::soc::RESERVE_FRACTION;

use super::event::{EventKind, EventLog};

/// Run-wide constants the log itself does not carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsScope {
    pub fleet_size: u32,
    pub horizon_s: f64,
    pub seats: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassengerMetrics {
    pub generated: u32,
    pub served: u32,
    pub unmet: u32,
    pub waiting_mean_s: f64,
    pub waiting_p50_s: f64,
    pub waiting_p95_s: f64,
    pub trip_mean_s: f64,
    pub trip_p50_s: f64,
    pub trip_p95_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VertiportMetrics {
    pub takeoffs: u32,
    pub landings: u32,
    /// Total movements: landings plus takeoffs.
    pub throughput: u32,
    pub fato_busy_s: f64,
    pub charge_sessions: u32,
    pub charger_busy_s: f64,
    pub charge_energy_kwh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fleet_size: u32,
    pub horizon_s: f64,
    /// Busy fraction of fleet time: airborne, taxiing, or charging.
    pub utilization: f64,
    /// Mean boarded passengers over revenue flights only.
    pub mean_occupancy: f64,
    pub flights: u32,
    /// Flights that departed with zero passengers.
    pub repositioning_flights: u32,
    pub unmet_departures: u32,
    pub substitutions: u32,
    pub late_dispatches: u32,
    pub total_dispatch_delay_s: f64,
    /// Landings that arrived below the reserve state of charge.
    pub reserve_breaches: u32,
    pub truncated_flights: u32,
    pub total_flight_energy_kwh: f64,
    pub total_charge_energy_kwh: f64,
    pub energy_by_phase_kwh: BTreeMap<String, f64>,
    pub per_vertiport: BTreeMap<String, VertiportMetrics>,
    pub passengers: PassengerMetrics,
}

/// Nearest-rank percentile of an ascending-sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let index = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[index.min(sorted.len() - 1)]
}

fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        0.0
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    }
}

pub fn compute_metrics(log: &EventLog, scope: &MetricsScope) -> Metrics {
    let mut metrics = Metrics {
        fleet_size: scope.fleet_size,
        horizon_s: scope.horizon_s,
        ..Metrics::default()
    };

    let mut arrival_us: BTreeMap<&str, i64> = BTreeMap::new();
    let mut waits: Vec<f64> = Vec::new();
    let mut trips: Vec<f64> = Vec::new();
    let mut occupancy: Vec<f64> = Vec::new();

    let mut depart_us: BTreeMap<&str, i64> = BTreeMap::new();
    let mut charge_start_us: BTreeMap<&str, i64> = BTreeMap::new();
    let mut busy_s = 0.0;

    for event in &log.events {
        match event.kind {
            EventKind::Arrival => {
                arrival_us.insert(&event.entity, event.time_us);
                metrics.passengers.generated += 1;
            }
            EventKind::Board => {
                metrics.passengers.served += 1;
                if let Some(at) = arrival_us.get(event.entity.as_str()) {
                    waits.push((event.time_us - at) as f64 / 1e6);
                }
            }
            EventKind::Disembark => {
                if let Some(at) = arrival_us.get(event.entity.as_str()) {
                    trips.push((event.time_us - at) as f64 / 1e6);
                }
            }
            EventKind::Depart => {
                metrics.flights += 1;
                depart_us.insert(&event.entity, event.time_us);
                let pax = event.field_f64("pax").unwrap_or(0.0);
                if pax > 0.0 {
                    occupancy.push(pax);
                } else {
                    metrics.repositioning_flights += 1;
                }
                if let Some(origin) = event.field("origin") {
                    let v = metrics.per_vertiport.entry(origin.to_string()).or_default();
                    v.takeoffs += 1;
                    if let (Some(from), Some(until)) =
                        (event.field_i64("fato_from_us"), event.field_i64("fato_until_us"))
                    {
                        v.fato_busy_s += (until - from) as f64 / 1e6;
                    }
                }
                let delay = event.field_f64("delay_s").unwrap_or(0.0);
                if delay > 0.0 {
                    metrics.late_dispatches += 1;
                    metrics.total_dispatch_delay_s += delay;
                }
                if event.field("substituted") == Some("1") {
                    metrics.substitutions += 1;
                }
            }
            EventKind::Land => {
                if let Some(at) = depart_us.remove(event.entity.as_str()) {
                    busy_s += (event.time_us - at) as f64 / 1e6;
                }
                if let Some(energy) = event.field_f64("energy_kwh") {
                    metrics.total_flight_energy_kwh += energy;
                }
                if let Some(soc) = event.field_f64("soc") {
                    if soc < RESERVE_FRACTION - 1e-9 {
                        metrics.reserve_breaches += 1;
                    }
                }
                if let Some(dest) = event.field("destination") {
                    let v = metrics.per_vertiport.entry(dest.to_string()).or_default();
                    v.landings += 1;
                    if let (Some(from), Some(until)) =
                        (event.field_i64("fato_from_us"), event.field_i64("fato_until_us"))
                    {
                        v.fato_busy_s += (until - from) as f64 / 1e6;
                    }
                }
            }
            EventKind::Truncated => {
                if let Some(at) = depart_us.remove(event.entity.as_str()) {
                    busy_s += (event.time_us - at) as f64 / 1e6;
                    metrics.truncated_flights += 1;
                }
            }
            EventKind::PhaseChange => {
                let phase = event.field("phase").unwrap_or("unknown").to_string();
                let energy = event.field_f64("energy_kwh").unwrap_or(0.0);
                *metrics.energy_by_phase_kwh.entry(phase.clone()).or_insert(0.0) += energy;
                if phase.starts_with("taxi") {
                    busy_s += event.field_f64("duration_s").unwrap_or(0.0);
                }
            }
            EventKind::ChargeStart => {
                charge_start_us.insert(&event.entity, event.time_us);
                let delay = event.field_f64("delay_s").unwrap_or(0.0);
                if delay > 0.0 {
                    metrics.late_dispatches += 1;
                    metrics.total_dispatch_delay_s += delay;
                }
                if event.field("substituted") == Some("1") {
                    metrics.substitutions += 1;
                }
            }
            EventKind::ChargeEnd => {
                let duration = match charge_start_us.remove(event.entity.as_str()) {
                    Some(at) => (event.time_us - at) as f64 / 1e6,
                    None => event.field_f64("duration_s").unwrap_or(0.0),
                };
                busy_s += duration;
                let energy = event.field_f64("energy_kwh").unwrap_or(0.0);
                metrics.total_charge_energy_kwh += energy;
                if let Some(vertiport) = event.field("vertiport") {
                    let v = metrics.per_vertiport.entry(vertiport.to_string()).or_default();
                    v.charge_sessions += 1;
                    v.charger_busy_s += duration;
                    v.charge_energy_kwh += energy;
                }
            }
            EventKind::MatchingFailure => {
                metrics.unmet_departures += 1;
            }
            EventKind::HoldStart | EventKind::HoldEnd => {}
        }
    }

    for vertiport in metrics.per_vertiport.values_mut() {
        vertiport.throughput = vertiport.takeoffs + vertiport.landings;
    }

    metrics.passengers.unmet =
        metrics.passengers.generated.saturating_sub(metrics.passengers.served);
    waits.sort_by(f64::total_cmp);
    trips.sort_by(f64::total_cmp);
    metrics.passengers.waiting_mean_s = mean(&waits);
    metrics.passengers.waiting_p50_s = percentile(&waits, 0.50);
    metrics.passengers.waiting_p95_s = percentile(&waits, 0.95);
    metrics.passengers.trip_mean_s = mean(&trips);
    metrics.passengers.trip_p50_s = percentile(&trips, 0.50);
    metrics.passengers.trip_p95_s = percentile(&trips, 0.95);

    metrics.mean_occupancy = mean(&occupancy);
    let capacity_s = scope.fleet_size as f64 * scope.horizon_s;
    metrics.utilization = if capacity_s > 0.0 { busy_s / capacity_s } else { 0.0 };
    metrics
}

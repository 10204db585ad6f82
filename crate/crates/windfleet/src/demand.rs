//! Passenger arrival streams and their aggregation into per-step
//! flight demand.
//!
//! Arrivals per direction follow a nonhomogeneous Poisson process:
//! independent hourly Poisson counts shaped by 24 weights summing the
//! day to an expected ADD, each arrival placed uniformly within its
//! hour. A flight is requested the moment a fourth passenger waits, or
//! when the first waiter has waited five minutes, whichever is sooner;
//! request instants round up to the next schedulable grid step.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timegrid::TimeGrid;

pub const DAY_S: f64 = 86_400.0;
pub const DEFAULT_FLIGHT_CAPACITY: u32 = 4;
pub const DEFAULT_MAX_WAIT_S: f64 = 300.0;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("expected daily demand must be finite and nonnegative, found {0}")]
    BadAdd(f64),
    #[error("hourly weights invalid: {0}")]
    BadWeights(String),
    #[error("flight capacity must be at least 1")]
    ZeroCapacity,
    #[error("maximum wait must be strictly positive, found {0}")]
    BadMaxWait(f64),
    #[error("arrivals csv: {0}")]
    Io(#[from] std::io::Error),
    #[error("arrivals csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must be `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
    #[error("csv line {line}: {reason}")]
    Value { line: u64, reason: String },
}

/// Sorted passenger arrival instants per origin-destination pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArrivalStream {
    pub arrivals: BTreeMap<(String, String), Vec<f64>>,
}

/// One aggregated trip request and the passengers it boards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightRequest {
    pub origin: String,
    pub destination: String,
    /// Pre-rounding trigger instant, seconds from day start.
    pub request_instant_s: f64,
    /// Scheduled departure step on the grid.
    pub step: u32,
    /// Arrival instants of the boarded passengers.
    pub passengers: Vec<f64>,
}

/// Required flight counts per (origin, destination, step).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightDemand {
    pub counts: BTreeMap<(String, String), BTreeMap<u32, u32>>,
}

impl FlightDemand {
    pub fn from_requests(requests: &[FlightRequest]) -> Self {
        let mut counts: BTreeMap<(String, String), BTreeMap<u32, u32>> = BTreeMap::new();
        for request in requests {
            *counts
                .entry((request.origin.clone(), request.destination.clone()))
                .or_default()
                .entry(request.step)
                .or_default() += 1;
        }
        Self { counts }
    }

    pub fn total_flights(&self) -> u32 {
        self.counts.values().flat_map(|per_step| per_step.values()).sum()
    }

    /// CSV rows `i,j,t,count`, sorted.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DemandError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "t", "count"])?;
        for ((i, j), per_step) in &self.counts {
            for (t, count) in per_step {
                w.write_record([i.as_str(), j.as_str(), &t.to_string(), &count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, DemandError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        expect_header(&mut rdr, "i,j,t,count")?;
        let mut counts: BTreeMap<(String, String), BTreeMap<u32, u32>> = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 4 {
                return Err(DemandError::Value { line, reason: "expected 4 fields".into() });
            }
            let t: u32 = parse_field(&row[2], "t", line)?;
            let count: u32 = parse_field(&row[3], "count", line)?;
            if row[0].is_empty() || row[1].is_empty() {
                return Err(DemandError::Value { line, reason: "empty vertiport id".into() });
            }
            let entry = counts
                .entry((row[0].to_string(), row[1].to_string()))
                .or_default()
                .entry(t)
                .or_default();
            *entry = entry.checked_add(count).ok_or(DemandError::Value {
                line,
                reason: "count overflow".into(),
            })?;
        }
        Ok(Self { counts })
    }
}

/// Seeded nonhomogeneous Poisson arrivals for each pair.
pub fn generate_arrivals(
    seed: u64,
    add: f64,
    hourly_weights: &[f64],
    pairs: &[(String, String)],
) -> Result<ArrivalStream, DemandError> {
    if !(add.is_finite() && add >= 0.0) {
        return Err(DemandError::BadAdd(add));
    }
    if hourly_weights.len() != 24 {
        return Err(DemandError::BadWeights(format!(
            "need 24 weights, found {}",
            hourly_weights.len()
        )));
    }
    if hourly_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(DemandError::BadWeights("weights must be finite and nonnegative".into()));
    }
    let total: f64 = hourly_weights.iter().sum();
    if total <= 0.0 {
        return Err(DemandError::BadWeights("weights must not all be zero".into()));
    }

    let mut arrivals = BTreeMap::new();
    for (origin, destination) in pairs {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, origin, destination));
        let mut times = Vec::new();
        for (hour, weight) in hourly_weights.iter().enumerate() {
            let lambda = add * weight / total;
            if lambda <= 0.0 {
                continue;
            }
            let count = Poisson::new(lambda)
                .expect("lambda is finite and positive")
                .sample(&mut rng) as u64;
            let window = Uniform::new(hour as f64 * 3600.0, (hour as f64 + 1.0) * 3600.0);
            times.extend((0..count).map(|_| window.sample(&mut rng)));
        }
        times.sort_by(f64::total_cmp);
        arrivals.insert((origin.clone(), destination.clone()), times);
    }
    Ok(ArrivalStream { arrivals })
}

/// Distinct, stable sub-seed per (seed, pair) so adding a pair never
/// disturbs another pair's stream.
fn mix_seed(seed: u64, origin: &str, destination: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in origin.bytes().chain([0]).chain(destination.bytes()) {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer over the combined state.
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Replays the trip-initiation rule over each pair's arrivals.
pub fn aggregate_requests(
    stream: &ArrivalStream,
    capacity: u32,
    max_wait_s: f64,
    grid: TimeGrid,
) -> Result<Vec<FlightRequest>, DemandError> {
    if capacity == 0 {
        return Err(DemandError::ZeroCapacity);
    }
    if !(max_wait_s > 0.0) {
        return Err(DemandError::BadMaxWait(max_wait_s));
    }
    let mut requests = Vec::new();
    for ((origin, destination), times) in &stream.arrivals {
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let mut pool: Vec<f64> = Vec::new();
        let dispatch = |pool: &mut Vec<f64>, instant: f64, requests: &mut Vec<FlightRequest>| {
            requests.push(FlightRequest {
                origin: origin.clone(),
                destination: destination.clone(),
                request_instant_s: instant,
                step: demand_step(grid, instant),
                passengers: std::mem::take(pool),
            });
        };
        for &arrival in &sorted {
            if let Some(&first) = pool.first() {
                // The wait timer fires before any strictly later arrival.
                if arrival > first + max_wait_s {
                    dispatch(&mut pool, first + max_wait_s, &mut requests);
                }
            }
            pool.push(arrival);
            if pool.len() == capacity as usize {
                dispatch(&mut pool, arrival, &mut requests);
            }
        }
        if let Some(&first) = pool.first() {
            dispatch(&mut pool, first + max_wait_s, &mut requests);
        }
    }
    Ok(requests)
}

/// Aggregated per-step counts (the optimizer's right-hand side).
pub fn aggregate_to_flights(
    stream: &ArrivalStream,
    capacity: u32,
    max_wait_s: f64,
    grid: TimeGrid,
) -> Result<FlightDemand, DemandError> {
    Ok(FlightDemand::from_requests(&aggregate_requests(stream, capacity, max_wait_s, grid)?))
}

/// Request instants round up to the next schedulable step: step 0 is
/// the initial state, so the floor is 1; the grid already spills late
/// requests into the final step of the day.
fn demand_step(grid: TimeGrid, instant_s: f64) -> u32 {
    grid.step_of_instant(instant_s).max(1)
}

impl ArrivalStream {
    /// CSV rows `origin,destination,arrival_time_s`, sorted.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DemandError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["origin", "destination", "arrival_time_s"])?;
        for ((origin, destination), times) in &self.arrivals {
            for time in times {
                w.write_record([origin.as_str(), destination.as_str(), &format!("{time}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, DemandError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        expect_header(&mut rdr, "origin,destination,arrival_time_s")?;
        let mut arrivals: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 3 {
                return Err(DemandError::Value { line, reason: "expected 3 fields".into() });
            }
            if row[0].is_empty() || row[1].is_empty() {
                return Err(DemandError::Value { line, reason: "empty vertiport id".into() });
            }
            let time: f64 = parse_field(&row[2], "arrival_time_s", line)?;
            if !(0.0..DAY_S).contains(&time) {
                return Err(DemandError::Value {
                    line,
                    reason: format!("arrival_time_s {time} outside [0, 86400)"),
                });
            }
            arrivals.entry((row[0].to_string(), row[1].to_string())).or_default().push(time);
        }
        for times in arrivals.values_mut() {
            times.sort_by(f64::total_cmp);
        }
        Ok(Self { arrivals })
    }
}

fn expect_header<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    expected: &'static str,
) -> Result<(), DemandError> {
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(DemandError::Header { expected, found });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    name: &str,
    line: u64,
) -> Result<T, DemandError> {
    raw.parse().map_err(|_| DemandError::Value {
        line,
        reason: format!("bad {name} `{raw}`"),
    })
}

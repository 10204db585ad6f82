//! Hourly wind fields over a route corridor.
//!
//! A field holds one wind vector per (grid point, hour). Grid points
//! are ordered along the corridor; lookups take the nearest point
//! horizontally and the enclosing hour in time (floor). Source data is
//! meteorological: speeds in mph and "direction from" compass bearings,
//! converted on ingest to east/north components in m/s.
//!
//! ```text
//! toward = from + 180 deg
//! east   = speed * sin(toward)      north = speed * cos(toward)
//! ```
//!
//! so a 25.5 mph (11.40 m/s) wind from 226 deg blows toward 46 deg:
//! east 8.20 m/s, north 7.92 m/s.

mod csv_io;
mod synth;

pub use synth::SynthSpec;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle;
use crate::geo::{self, LatLon};
use crate::units;

#[derive(Debug, Error)]
pub enum WindError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("header must be exactly `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: bad {field}: {reason}")]
    Value {
        line: u64,
        field: &'static str,
        reason: String,
    },
    #[error("line {line}: timestamp must lie exactly on an hour")]
    NotOnHour { line: u64 },
    #[error("duplicate record for grid `{grid_id}` at {timestamp}")]
    Duplicate {
        grid_id: String,
        timestamp: DateTime<Utc>,
    },
    #[error("grid `{grid_id}` is missing the hour {timestamp} inside the coverage interval")]
    MissingHour {
        grid_id: String,
        timestamp: DateTime<Utc>,
    },
    #[error("grid `{grid_id}` appears with two different positions")]
    InconsistentPosition { grid_id: String },
    #[error("grid points are not strictly ordered along the corridor (point index {index})")]
    UnorderedGrid { index: usize },
    #[error("file contains no records")]
    Empty,
    #[error("time {time} outside coverage [{start}, {end})")]
    OutOfCoverage {
        time: DateTime<Utc>,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
    #[error("bad synthesis spec: {0}")]
    BadSynthSpec(String),
}

/// Horizontal wind as east/north components, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindVector {
    pub east_ms: f64,
    pub north_ms: f64,
}

impl WindVector {
    pub const CALM: WindVector = WindVector {
        east_ms: 0.0,
        north_ms: 0.0,
    };

    pub fn speed_ms(self) -> f64 {
        self.east_ms.hypot(self.north_ms)
    }
}

/// Converts meteorological speed and "direction from" into components.
pub fn met_to_vector(speed_ms: f64, dir_from_deg: f64) -> WindVector {
    let toward = Angle::from_compass_deg(dir_from_deg + 180.0);
    let (east, north) = toward.unit_vector();
    WindVector {
        east_ms: speed_ms * east,
        north_ms: speed_ms * north,
    }
}

/// Inverse of [`met_to_vector`]; a calm vector reports direction 0.
pub fn vector_to_met(v: WindVector) -> (f64, f64) {
    let speed = v.speed_ms();
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    let toward = Angle::from_radians(v.north_ms.atan2(v.east_ms));
    (speed, toward.reversed().to_compass_deg())
}

/// One source observation: meteorological units plus grid identity.
#[derive(Debug, Clone, PartialEq)]
pub struct WindRecord {
    pub timestamp: DateTime<Utc>,
    pub grid_id: String,
    pub position: LatLon,
    pub speed_mph: f64,
    pub dir_from_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub id: String,
    pub position: LatLon,
}

/// A validated, gap-free hourly field over an ordered corridor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    points: Vec<GridPoint>,
    start_hour: i64,
    hours: u32,
    /// Raw met values per (point, hour), point-major; kept so that
    /// serialization is lossless.
    met: Vec<(f64, f64)>,
    /// Derived components per (point, hour), point-major.
    vectors: Vec<WindVector>,
}

/// Uniform wind everywhere and always; the calm/controlled test source.
#[derive(Debug, Clone, Copy)]
pub struct UniformWind(pub WindVector);

/// Anything a flight can sample wind from.
pub trait WindSource {
    fn wind_at(&self, position: LatLon, time: DateTime<Utc>) -> Result<WindVector, WindError>;
}

impl WindSource for UniformWind {
    fn wind_at(&self, _position: LatLon, _time: DateTime<Utc>) -> Result<WindVector, WindError> {
        Ok(self.0)
    }
}

impl WindSource for WindField {
    fn wind_at(&self, position: LatLon, time: DateTime<Utc>) -> Result<WindVector, WindError> {
        self.sample(position, time)
    }
}

pub(crate) fn hour_to_time(hour: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(hour * 3600, 0).unwrap()
}

impl WindField {
    /// Assembles a field from records, validating identity, ordering and
    /// gap-free hourly coverage. Record order within the file is free;
    /// grid points keep their first-appearance order.
    pub fn from_records(records: Vec<WindRecord>) -> Result<Self, WindError> {
        if records.is_empty() {
            return Err(WindError::Empty);
        }
        let mut points: Vec<GridPoint> = Vec::new();
        let mut index_of: std::collections::BTreeMap<String, usize> =
            std::collections::BTreeMap::new();
        let mut min_hour = i64::MAX;
        let mut max_hour = i64::MIN;
        for r in &records {
            let hour = r.timestamp.timestamp() / 3600;
            min_hour = min_hour.min(hour);
            max_hour = max_hour.max(hour);
            match index_of.get(&r.grid_id) {
                None => {
                    index_of.insert(r.grid_id.clone(), points.len());
                    points.push(GridPoint {
                        id: r.grid_id.clone(),
                        position: r.position,
                    });
                }
                Some(&i) => {
                    if points[i].position != r.position {
                        return Err(WindError::InconsistentPosition {
                            grid_id: r.grid_id.clone(),
                        });
                    }
                }
            }
        }
        let hours = u32::try_from(max_hour - min_hour + 1).map_err(|_| {
            WindError::BadSynthSpec("coverage interval does not fit in u32 hours".into())
        })?;

        let n = points.len();
        let mut met = vec![None; n * hours as usize];
        for r in &records {
            let p = index_of[&r.grid_id];
            let h = (r.timestamp.timestamp() / 3600 - min_hour) as usize;
            let slot = &mut met[p * hours as usize + h];
            if slot.is_some() {
                return Err(WindError::Duplicate {
                    grid_id: r.grid_id.clone(),
                    timestamp: r.timestamp,
                });
            }
            *slot = Some((r.speed_mph, r.dir_from_deg));
        }
        let mut filled = Vec::with_capacity(met.len());
        for (i, slot) in met.into_iter().enumerate() {
            match slot {
                Some(v) => filled.push(v),
                None => {
                    let p = i / hours as usize;
                    let h = (i % hours as usize) as i64;
                    return Err(WindError::MissingHour {
                        grid_id: points[p].id.clone(),
                        timestamp: hour_to_time(min_hour + h),
                    });
                }
            }
        }

        Self::check_corridor_order(&points)?;

        let vectors = filled
            .iter()
            .map(|&(mph, dir)| met_to_vector(units::mph_to_ms(mph), dir))
            .collect();
        Ok(Self {
            points,
            start_hour: min_hour,
            hours,
            met: filled,
            vectors,
        })
    }

    fn check_corridor_order(points: &[GridPoint]) -> Result<(), WindError> {
        if points.len() < 2 {
            return Ok(());
        }
        let first = points[0].position;
        let last = points[points.len() - 1].position;
        let axis = (
            last.lon_deg - first.lon_deg,
            last.lat_deg - first.lat_deg,
        );
        let mut prev = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let along = (p.position.lon_deg - first.lon_deg) * axis.0
                + (p.position.lat_deg - first.lat_deg) * axis.1;
            if along <= prev {
                return Err(WindError::UnorderedGrid { index: i });
            }
            prev = along;
        }
        Ok(())
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn hours(&self) -> u32 {
        self.hours
    }

    /// Half-open coverage interval [start, end).
    pub fn coverage(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        (
            hour_to_time(self.start_hour),
            hour_to_time(self.start_hour + i64::from(self.hours)),
        )
    }

    /// Wind at the nearest grid point for the enclosing hour.
    pub fn sample(&self, position: LatLon, time: DateTime<Utc>) -> Result<WindVector, WindError> {
        let hour = time.timestamp().div_euclid(3600) - self.start_hour;
        if hour < 0 || hour >= i64::from(self.hours) {
            let (start, end) = self.coverage();
            return Err(WindError::OutOfCoverage { time, start, end });
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = geo::haversine_m(position, p.position);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(self.vectors[best * self.hours as usize + hour as usize])
    }

    pub(crate) fn met_at(&self, point: usize, hour: usize) -> (f64, f64) {
        self.met[point * self.hours as usize + hour]
    }

    pub(crate) fn start_hour(&self) -> i64 {
        self.start_hour
    }
}

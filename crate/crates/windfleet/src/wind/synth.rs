//! Seeded synthetic wind generator.
//!
//! Generates an hourly AR(1) process for speed and direction at each
//! grid point of a straight corridor. Innovations share a common
//! regional factor so neighboring points stay correlated; speeds are
//! truncated at zero; directions wrap modulo 360. For a fixed seed the
//! output is identical across runs and platforms.

use chrono::DateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{WindError, WindField, WindRecord};
use crate::geo::{self, LatLon};
use crate::units;

/// Corridor geometry plus target statistics for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub corridor_start: LatLon,
    pub corridor_bearing_deg: f64,
    pub corridor_length_mi: f64,
    pub spacing_mi: f64,
    /// RFC3339 instant of the first hour.
    pub start_timestamp: String,
    pub hours: u32,
    pub speed_mean_ms: f64,
    pub speed_std_ms: f64,
    pub dir_mean_from_deg: f64,
    pub dir_std_deg: f64,
    /// Lag-1 autocorrelation of the hourly processes, in [0, 1).
    pub hourly_persistence: f64,
    /// Innovation correlation between grid points, in [0, 1].
    pub neighbor_correlation: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            corridor_start: LatLon::new(36.587, -121.843),
            corridor_bearing_deg: 13.0,
            corridor_length_mi: 160.0,
            spacing_mi: 8.0,
            start_timestamp: "2025-01-01T00:00:00Z".to_string(),
            hours: 24,
            speed_mean_ms: units::mph_to_ms(25.5),
            speed_std_ms: units::mph_to_ms(15.5),
            dir_mean_from_deg: 226.0,
            dir_std_deg: 98.0,
            hourly_persistence: 0.85,
            neighbor_correlation: 0.8,
        }
    }
}

impl SynthSpec {
    /// Default corridor with an explicit hour count.
    pub fn default_desk(hours: u32) -> Self {
        Self {
            hours,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), WindError> {
        let bad = |m: &str| Err(WindError::BadSynthSpec(m.to_string()));
        if self.hours == 0 {
            return bad("hours must be positive");
        }
        if !(self.spacing_mi > 0.0) {
            return bad("spacing_mi must be positive");
        }
        if !(self.corridor_length_mi >= 0.0) {
            return bad("corridor_length_mi must be nonnegative");
        }
        if !(self.speed_mean_ms >= 0.0 && self.speed_std_ms >= 0.0) {
            return bad("speed statistics must be nonnegative");
        }
        if !(self.dir_std_deg >= 0.0) {
            return bad("dir_std_deg must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.hourly_persistence) {
            return bad("hourly_persistence must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.neighbor_correlation) {
            return bad("neighbor_correlation must lie in [0, 1]");
        }
        let start = DateTime::parse_from_rfc3339(&self.start_timestamp)
            .map_err(|e| WindError::BadSynthSpec(format!("start_timestamp: {e}")))?;
        if start.timestamp() % 3600 != 0 || start.timestamp_subsec_nanos() != 0 {
            return bad("start_timestamp must lie exactly on an hour");
        }
        Ok(())
    }
}

struct Ar1 {
    mean: f64,
    std: f64,
    phi: f64,
    innovation_scale: f64,
}

impl Ar1 {
    fn new(mean: f64, std: f64, phi: f64) -> Self {
        Self {
            mean,
            std,
            phi,
            innovation_scale: std * (1.0 - phi * phi).sqrt(),
        }
    }

    fn init(&self, eps: f64) -> f64 {
        self.mean + self.std * eps
    }

    fn step(&self, prev: f64, eps: f64) -> f64 {
        self.mean + self.phi * (prev - self.mean) + self.innovation_scale * eps
    }
}

impl WindField {
    /// Generates a synthetic field; identical output for identical
    /// (spec, seed).
    pub fn synthesize(spec: &SynthSpec, seed: u64) -> Result<WindField, WindError> {
        spec.validate()?;
        let start = DateTime::parse_from_rfc3339(&spec.start_timestamp)
            .expect("validated above")
            .with_timezone(&chrono::Utc);
        let n_points = (spec.corridor_length_mi / spec.spacing_mi).floor() as usize + 1;

        let mut positions = Vec::with_capacity(n_points);
        for p in 0..n_points {
            positions.push(geo::destination(
                spec.corridor_start,
                spec.corridor_bearing_deg,
                units::miles_to_m(spec.spacing_mi) * p as f64,
            ));
        }

        let speed = Ar1::new(spec.speed_mean_ms, spec.speed_std_ms, spec.hourly_persistence);
        let dir = Ar1::new(spec.dir_mean_from_deg, spec.dir_std_deg, spec.hourly_persistence);
        let shared = spec.neighbor_correlation.sqrt();
        let local = (1.0 - spec.neighbor_correlation).sqrt();

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let draw = |rng: &mut ChaCha20Rng| -> f64 { normal.sample(rng) };

        let mut speed_state = vec![0.0f64; n_points];
        let mut dir_state = vec![0.0f64; n_points];
        let mut records = Vec::with_capacity(n_points * spec.hours as usize);
        for h in 0..spec.hours {
            let eta_speed = draw(&mut rng);
            let eta_dir = draw(&mut rng);
            for p in 0..n_points {
                let eps_speed = shared * eta_speed + local * draw(&mut rng);
                let eps_dir = shared * eta_dir + local * draw(&mut rng);
                if h == 0 {
                    speed_state[p] = speed.init(eps_speed);
                    dir_state[p] = dir.init(eps_dir);
                } else {
                    speed_state[p] = speed.step(speed_state[p], eps_speed);
                    dir_state[p] = dir.step(dir_state[p], eps_dir);
                }
                let speed_ms = speed_state[p].max(0.0);
                let dir_deg = dir_state[p].rem_euclid(360.0);
                let dir_deg = if dir_deg >= 360.0 { 0.0 } else { dir_deg };
                records.push(WindRecord {
                    timestamp: start + chrono::Duration::hours(i64::from(h)),
                    grid_id: format!("G{p:03}"),
                    position: positions[p],
                    speed_mph: units::ms_to_mph(speed_ms),
                    dir_from_deg: dir_deg,
                });
            }
        }
        WindField::from_records(records)
    }
}

//! Daily wind-scenario clustering.
//!
//! Each historical date yields one profile per direction: 24 pairs of
//! (flight duration, energy) for departures at each hour. Profiles are
//! flattened to 48 features, z-scored per column (zero-variance columns
//! scale by 1), and clustered with Lloyd's algorithm under k-means++
//! seeding. k is the smallest value whose explained variation
//! 1 - SSE_within / SSE_total reaches the target.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight::{
    build_profile, simulate_flight, AircraftParams, FlightError, Route,
};
use crate::soc::SocLadder;
use crate::wind::WindSource;

const FEATURES: usize = 48;
const HOURS: usize = 24;
/// A date with more missing (infeasible) hours than this is dropped.
const MAX_MISSING_HOURS: usize = 4;
pub const DEFAULT_EXPLAINED_VARIATION_TARGET: f64 = 0.70;
pub const DEFAULT_MAX_ITER: u32 = 100;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no profiles to cluster")]
    EmptyProfiles,
    #[error("k = {k} exceeds the {n} available profiles")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("explained-variation target must lie in [0, 1], found {0}")]
    BadTarget(f64),
    #[error("profile for {date} {direction} is malformed: {reason}")]
    BadProfile { date: NaiveDate, direction: String, reason: String },
    #[error("cluster {cluster} shares no dates with the opposite direction")]
    NoSharedDates { cluster: usize },
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error("profiles csv: {0}")]
    Io(#[from] std::io::Error),
    #[error("profiles csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must be `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
    #[error("csv line {line}: {reason}")]
    Value { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourSample {
    pub duration_s: f64,
    pub energy_kwh: f64,
}

/// One date's 24 hourly flights for one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub date: NaiveDate,
    pub origin: String,
    pub destination: String,
    pub hours: Vec<HourSample>,
}

impl DailyProfile {
    pub fn direction(&self) -> String {
        format!("{}->{}", self.origin, self.destination)
    }

    /// Hours 0..24 as durations then energies.
    fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURES);
        v.extend(self.hours.iter().map(|h| h.duration_s));
        v.extend(self.hours.iter().map(|h| h.energy_kwh));
        v
    }
}

/// Cluster centroid in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub duration_s: Vec<f64>,
    pub energy_kwh: Vec<f64>,
}

impl Centroid {
    fn from_features(features: &[f64]) -> Self {
        Self {
            duration_s: features[..HOURS].to_vec(),
            energy_kwh: features[HOURS..].to_vec(),
        }
    }

    /// Mean energy across the day, the cluster-severity scalar used in
    /// reports.
    pub fn mean_energy_kwh(&self) -> f64 {
        self.energy_kwh.iter().sum::<f64>() / self.energy_kwh.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub k: usize,
    pub centroids: Vec<Centroid>,
    /// Cluster index per input profile.
    pub assignments: Vec<usize>,
    /// Profile index of each cluster's medoid (least total squared
    /// distance to members, standardized space).
    pub medoids: Vec<usize>,
    /// Fraction of profiles per cluster.
    pub weights: Vec<f64>,
    pub explained_variation: f64,
    /// False when select_k exhausted k_max below the target.
    pub met_target: bool,
    pub iterations: u32,
}

/// Simulates all 24 departure hours of each date in both directions.
/// Hours where the flight is infeasible are imputed with the date's
/// median; dates with too many such hours are dropped.
pub fn build_daily_profiles<W: WindSource + Sync>(
    wind: &W,
    route: Route,
    forward_ids: (&str, &str),
    params: &AircraftParams,
    dates: &[NaiveDate],
) -> Result<Vec<DailyProfile>, ClusterError> {
    params.validate()?;
    let forward = build_profile(route, params)?;
    let reverse = build_profile(route.reversed(), params)?;
    // Level count is irrelevant here; profiles carry raw energy.
    let ladder = SocLadder::new(1).expect("one level is valid");

    let per_date = dates
        .par_iter()
        .map(|&date| -> Result<Vec<DailyProfile>, ClusterError> {
            let mut out = Vec::with_capacity(2);
            for (profile, origin, destination) in [
                (&forward, forward_ids.0, forward_ids.1),
                (&reverse, forward_ids.1, forward_ids.0),
            ] {
                let mut hours: Vec<Option<HourSample>> = Vec::with_capacity(HOURS);
                for hour in 0..HOURS as u32 {
                    let departure = date
                        .and_hms_opt(hour, 0, 0)
                        .expect("hour within day")
                        .and_utc();
                    match simulate_flight(profile, params, ladder, wind, departure, params.seats)
                    {
                        Ok(result) => hours.push(Some(HourSample {
                            duration_s: result.total_duration_s,
                            energy_kwh: result.total_energy_kwh,
                        })),
                        Err(
                            FlightError::FlightInfeasible { .. }
                            | FlightError::CrabInfeasible { .. },
                        ) => hours.push(None),
                        Err(e) => return Err(e.into()),
                    }
                }
                if let Some(filled) = impute_day(&hours) {
                    out.push(DailyProfile {
                        date,
                        origin: origin.to_string(),
                        destination: destination.to_string(),
                        hours: filled,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_date.into_iter().flatten().collect())
}

/// Median-imputes missing hours; None drops the date.
fn impute_day(hours: &[Option<HourSample>]) -> Option<Vec<HourSample>> {
    let missing = hours.iter().filter(|h| h.is_none()).count();
    if missing > MAX_MISSING_HOURS {
        return None;
    }
    if missing == 0 {
        return Some(hours.iter().map(|h| h.expect("no gaps")).collect());
    }
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 }
    };
    let mut durations: Vec<f64> =
        hours.iter().flatten().map(|h| h.duration_s).collect();
    let mut energies: Vec<f64> = hours.iter().flatten().map(|h| h.energy_kwh).collect();
    let fill = HourSample {
        duration_s: median(&mut durations),
        energy_kwh: median(&mut energies),
    };
    Some(hours.iter().map(|h| h.unwrap_or(fill)).collect())
}

struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let mut means = vec![0.0; FEATURES];
        for row in rows {
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; FEATURES];
        for row in rows {
            for ((s, m), x) in stds.iter_mut().zip(&means).zip(row) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Self { means, stds }
    }

    fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: D^2-weighted draws after a uniform first pick.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total <= 0.0 {
            // All mass collapsed (duplicate points): fall back to uniform.
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, centroids.last().expect("just pushed")));
        }
    }
    centroids
}

/// Lloyd iterations on z-scored features, deterministic per seed.
pub fn kmeans(
    profiles: &[DailyProfile],
    k: usize,
    seed: u64,
    max_iter: u32,
) -> Result<ClusterSet, ClusterError> {
    if profiles.is_empty() {
        return Err(ClusterError::EmptyProfiles);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > profiles.len() {
        return Err(ClusterError::KTooLarge { k, n: profiles.len() });
    }
    for p in profiles {
        if p.hours.len() != HOURS {
            return Err(ClusterError::BadProfile {
                date: p.date,
                direction: p.direction(),
                reason: format!("{} hours instead of 24", p.hours.len()),
            });
        }
        if p.hours.iter().any(|h| !(h.duration_s.is_finite() && h.energy_kwh.is_finite())) {
            return Err(ClusterError::BadProfile {
                date: p.date,
                direction: p.direction(),
                reason: "non-finite entries".into(),
            });
        }
    }

    let raw: Vec<Vec<f64>> = profiles.iter().map(|p| p.features()).collect();
    let scaler = Standardizer::fit(&raw);
    let points: Vec<Vec<f64>> = raw.iter().map(|r| scaler.transform(r)).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(&points) {
            let (best, _) = nearest(p, &centroids);
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; FEATURES]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assignments.iter().zip(&points) {
            counts[*a] += 1;
            for (s, x) in sums[*a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                *c = sum.iter().map(|s| s / *count as f64).collect();
            }
        }
        // An emptied cluster restarts at the globally farthest point.
        for empty in 0..k {
            if counts[empty] == 0 {
                let farthest = points
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        let da = squared_distance(a, &centroids[assignments_nearest(a, &centroids)]);
                        let db = squared_distance(b, &centroids[assignments_nearest(b, &centroids)]);
                        da.total_cmp(&db)
                    })
                    .map(|(i, _)| i)
                    .expect("points nonempty");
                centroids[empty] = points[farthest].clone();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Final assignment against the settled centroids.
    for (a, p) in assignments.iter_mut().zip(&points) {
        *a = nearest(p, &centroids).0;
    }

    let global_mean: Vec<f64> = {
        let mut m = vec![0.0; FEATURES];
        for p in &points {
            for (mi, x) in m.iter_mut().zip(p) {
                *mi += x;
            }
        }
        m.into_iter().map(|x| x / points.len() as f64).collect()
    };
    let sse_total: f64 = points.iter().map(|p| squared_distance(p, &global_mean)).sum();
    let sse_within: f64 = points
        .iter()
        .zip(&assignments)
        .map(|(p, a)| squared_distance(p, &centroids[*a]))
        .sum();
    let explained_variation =
        if sse_total <= 0.0 { 1.0 } else { (1.0 - sse_within / sse_total).clamp(0.0, 1.0) };

    let mut weights = vec![0.0; k];
    for a in &assignments {
        weights[*a] += 1.0 / points.len() as f64;
    }

    let mut medoids = vec![0usize; k];
    for cluster in 0..k {
        let members: Vec<usize> =
            (0..points.len()).filter(|i| assignments[*i] == cluster).collect();
        let medoid = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let cost = |i: usize| -> f64 {
                    members.iter().map(|&j| squared_distance(&points[i], &points[j])).sum()
                };
                cost(a).total_cmp(&cost(b)).then(a.cmp(&b))
            })
            .unwrap_or(0);
        medoids[cluster] = medoid;
    }

    let centroids = centroids
        .iter()
        .map(|c| Centroid::from_features(&scaler.invert(c)))
        .collect();

    Ok(ClusterSet {
        k,
        centroids,
        assignments,
        medoids,
        weights,
        explained_variation,
        met_target: true,
        iterations,
    })
}

fn assignments_nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    nearest(point, centroids).0
}

/// Smallest k whose explained variation reaches the target; `force_k`
/// bypasses the sweep for paper-parity studies.
pub fn select_k(
    profiles: &[DailyProfile],
    target: f64,
    k_max: usize,
    force_k: Option<usize>,
    seed: u64,
) -> Result<ClusterSet, ClusterError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(ClusterError::BadTarget(target));
    }
    if let Some(k) = force_k {
        return kmeans(profiles, k, seed, DEFAULT_MAX_ITER);
    }
    if k_max == 0 {
        return Err(ClusterError::ZeroK);
    }
    let cap = k_max.min(profiles.len());
    let mut last = None;
    for k in 1..=cap {
        let set = kmeans(profiles, k, seed, DEFAULT_MAX_ITER)?;
        if set.explained_variation >= target {
            return Ok(set);
        }
        last = Some(set);
    }
    let mut set = last.expect("cap >= 1");
    set.met_target = false;
    Ok(set)
}

/// Pairs each forward cluster with the reverse-direction cluster its
/// dates most often fall into (ties to the lower index).
pub fn pair_clusters_by_date(
    forward_profiles: &[DailyProfile],
    forward: &ClusterSet,
    reverse_profiles: &[DailyProfile],
    reverse: &ClusterSet,
) -> Result<Vec<(usize, usize)>, ClusterError> {
    let reverse_by_date: BTreeMap<NaiveDate, usize> = reverse_profiles
        .iter()
        .zip(&reverse.assignments)
        .map(|(p, a)| (p.date, *a))
        .collect();
    let mut pairs = Vec::with_capacity(forward.k);
    for cluster in 0..forward.k {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for (p, a) in forward_profiles.iter().zip(&forward.assignments) {
            if *a == cluster {
                if let Some(rc) = reverse_by_date.get(&p.date) {
                    *votes.entry(*rc).or_default() += 1;
                }
            }
        }
        let winner = votes
            .iter()
            .max_by(|(ka, va), (kb, vb)| va.cmp(vb).then(kb.cmp(ka)))
            .map(|(k, _)| *k)
            .ok_or(ClusterError::NoSharedDates { cluster })?;
        pairs.push((cluster, winner));
    }
    Ok(pairs)
}

const PROFILE_HEADER: &str = "date,direction,hour,duration_s,energy_kwh";

/// CSV rows `date,direction,hour,duration_s,energy_kwh`, sorted by
/// (date, direction, hour); direction is `origin->destination`.
pub fn write_profiles_csv<W: std::io::Write>(
    profiles: &[DailyProfile],
    writer: W,
) -> Result<(), ClusterError> {
    for p in profiles {
        if p.origin.contains("->") || p.destination.contains("->") {
            return Err(ClusterError::BadProfile {
                date: p.date,
                direction: p.direction(),
                reason: "vertiport ids must not contain `->`".into(),
            });
        }
    }
    let mut sorted: Vec<&DailyProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| (a.date, a.direction()).cmp(&(b.date, b.direction())));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PROFILE_HEADER.split(','))?;
    for p in sorted {
        for (hour, sample) in p.hours.iter().enumerate() {
            w.write_record([
                p.date.format("%Y-%m-%d").to_string(),
                p.direction(),
                hour.to_string(),
                format!("{}", sample.duration_s),
                format!("{}", sample.energy_kwh),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles_csv<R: std::io::Read>(reader: R) -> Result<Vec<DailyProfile>, ClusterError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != PROFILE_HEADER {
        return Err(ClusterError::Header { expected: PROFILE_HEADER, found });
    }
    let mut acc: BTreeMap<(NaiveDate, String, String), Vec<(u32, HourSample)>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| ClusterError::Value { line, reason };
        if row.len() != 5 {
            return Err(bad("expected 5 fields".into()));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", &row[0])))?;
        let (origin, destination) = row[1]
            .split_once("->")
            .ok_or_else(|| bad(format!("direction `{}` must be `origin->destination`", &row[1])))?;
        if origin.is_empty() || destination.is_empty() || destination.contains("->") {
            return Err(bad(format!("direction `{}` is malformed", &row[1])));
        }
        let hour: u32 = row[2].parse().map_err(|_| bad(format!("bad hour `{}`", &row[2])))?;
        if hour >= HOURS as u32 {
            return Err(bad(format!("hour {hour} outside 0..24")));
        }
        let duration_s: f64 =
            row[3].parse().map_err(|_| bad(format!("bad duration_s `{}`", &row[3])))?;
        let energy_kwh: f64 =
            row[4].parse().map_err(|_| bad(format!("bad energy_kwh `{}`", &row[4])))?;
        acc.entry((date, origin.to_string(), destination.to_string()))
            .or_default()
            .push((hour, HourSample { duration_s, energy_kwh }));
    }
    let mut profiles = Vec::with_capacity(acc.len());
    for ((date, origin, destination), mut rows) in acc {
        rows.sort_by_key(|(h, _)| *h);
        let hours_found: Vec<u32> = rows.iter().map(|(h, _)| *h).collect();
        if hours_found != (0..HOURS as u32).collect::<Vec<_>>() {
            return Err(ClusterError::BadProfile {
                date,
                direction: format!("{origin}->{destination}"),
                reason: "must list each hour 0..24 exactly once".into(),
            });
        }
        profiles.push(DailyProfile {
            date,
            origin,
            destination,
            hours: rows.into_iter().map(|(_, s)| s).collect(),
        });
    }
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::units::miles_to_m;
    use crate::wind::{UniformWind, WindVector};
    use approx::assert_relative_eq;
    use chrono::{DateTime, Datelike, Timelike, Utc};

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn test_route() -> Route {
        Route::from_bearing(LatLon::new(36.587, -121.843), 13.0, miles_to_m(80.0))
    }

    fn synthetic_profile(date_s: &str, duration: f64, energy: f64) -> DailyProfile {
        DailyProfile {
            date: date(date_s),
            origin: "A".into(),
            destination: "B".into(),
            hours: vec![HourSample { duration_s: duration, energy_kwh: energy }; 24],
        }
    }

    /// Blows an impossible headwind during the listed hours.
    struct HourlyGale {
        gale_hours: Vec<u32>,
        course: crate::angle::Angle,
    }

    impl WindSource for HourlyGale {
        fn wind_at(
            &self,
            _position: LatLon,
            time: DateTime<Utc>,
        ) -> Result<WindVector, crate::wind::WindError> {
            if self.gale_hours.contains(&time.hour()) {
                let (e, n) = self.course.unit_vector();
                Ok(WindVector { east_ms: -e * 80.0, north_ms: -n * 80.0 })
            } else {
                Ok(WindVector::CALM)
            }
        }
    }

    #[test]
    fn calm_wind_yields_flat_profiles() {
        let profiles = build_daily_profiles(
            &UniformWind(WindVector::CALM),
            test_route(),
            ("A", "B"),
            &AircraftParams::default(),
            &[date("2025-01-01")],
        )
        .unwrap();
        assert_eq!(profiles.len(), 2);
        assert_eq!(profiles[0].origin, "A");
        assert_eq!(profiles[1].origin, "B");
        for p in &profiles {
            assert_eq!(p.hours.len(), 24);
            for h in &p.hours {
                assert_relative_eq!(h.duration_s, p.hours[0].duration_s, max_relative = 1e-12);
                assert_relative_eq!(h.energy_kwh, p.hours[0].energy_kwh, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn infeasible_hours_are_imputed_with_the_day_median() {
        let route = test_route();
        let gale = HourlyGale { gale_hours: vec![3, 4], course: route.course };
        let profiles = build_daily_profiles(
            &gale,
            route,
            ("A", "B"),
            &AircraftParams::default(),
            &[date("2025-01-01")],
        )
        .unwrap();
        // Forward flights die in the gale hours; the reverse direction
        // rides it as a tailwind.
        let forward = profiles.iter().find(|p| p.origin == "A").unwrap();
        assert_relative_eq!(
            forward.hours[3].duration_s,
            forward.hours[0].duration_s,
            max_relative = 1e-12
        );
        assert_eq!(profiles.len(), 2);
    }

    #[test]
    fn too_many_infeasible_hours_drop_the_date() {
        let route = test_route();
        let gale = HourlyGale { gale_hours: vec![1, 2, 3, 4, 5], course: route.course };
        let profiles = build_daily_profiles(
            &gale,
            route,
            ("A", "B"),
            &AircraftParams::default(),
            &[date("2025-01-01"), date("2025-01-02")],
        )
        .unwrap();
        assert!(profiles.iter().all(|p| p.origin == "B"));
        assert_eq!(profiles.len(), 2);
    }

    #[test]
    fn identical_profiles_have_unit_explained_variation() {
        let profiles: Vec<_> =
            (0..5).map(|i| synthetic_profile(&format!("2025-01-0{}", i + 1), 2000.0, 50.0)).collect();
        let set = kmeans(&profiles, 1, 7, 100).unwrap();
        assert_eq!(set.explained_variation, 1.0);
        assert_eq!(set.weights, vec![1.0]);
    }

    #[test]
    fn two_blobs_are_recovered() {
        let mut profiles = Vec::new();
        for i in 0..10 {
            let jitter = i as f64 * 0.1;
            profiles.push(synthetic_profile(&format!("2025-01-{:02}", i + 1), 2000.0 + jitter, 50.0 + jitter / 10.0));
            profiles.push(synthetic_profile(&format!("2025-02-{:02}", i + 1), 3000.0 + jitter, 80.0 + jitter / 10.0));
        }
        let set = kmeans(&profiles, 2, 7, 100).unwrap();
        assert!(set.explained_variation > 0.99, "ev {}", set.explained_variation);
        // Every even index (first blob) shares a cluster, odds the other.
        let first = set.assignments[0];
        let second = set.assignments[1];
        assert_ne!(first, second);
        for (i, a) in set.assignments.iter().enumerate() {
            assert_eq!(*a, if i % 2 == 0 { first } else { second });
        }
        assert_relative_eq!(set.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // Medoids belong to their clusters.
        for (c, m) in set.medoids.iter().enumerate() {
            assert_eq!(set.assignments[*m], c);
        }
    }

    #[test]
    fn same_seed_reproduces_clusters() {
        let profiles: Vec<_> = (0..12)
            .map(|i| synthetic_profile(&format!("2025-03-{:02}", i + 1), 2000.0 + 100.0 * f64::from(i % 4), 50.0))
            .collect();
        let a = kmeans(&profiles, 3, 11, 100).unwrap();
        let b = kmeans(&profiles, 3, 11, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn select_k_finds_the_three_blobs() {
        let mut profiles = Vec::new();
        for i in 0..8 {
            let jitter = i as f64;
            profiles.push(synthetic_profile(&format!("2025-01-{:02}", i + 1), 1000.0 + jitter, 30.0));
            profiles.push(synthetic_profile(&format!("2025-02-{:02}", i + 1), 2000.0 + jitter, 55.0));
            profiles.push(synthetic_profile(&format!("2025-03-{:02}", i + 1), 3000.0 + jitter, 80.0));
        }
        // Equally spaced collinear blobs: merging two explains exactly
        // 0.75, so a 0.9 target forces the true k.
        let set = select_k(&profiles, 0.90, 8, None, 7).unwrap();
        assert_eq!(set.k, 3);
        assert!(set.met_target);
        assert!(set.explained_variation >= 0.90);
        // The sweep's explained variation is monotone on this data.
        let evs: Vec<f64> = (1..=4)
            .map(|k| kmeans(&profiles, k, 7, 100).unwrap().explained_variation)
            .collect();
        for pair in evs.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "ev dropped across k: {evs:?}");
        }
    }

    #[test]
    fn zero_target_stops_at_one_cluster() {
        let profiles: Vec<_> =
            (0..6).map(|i| synthetic_profile(&format!("2025-01-0{}", i + 1), 2000.0 + f64::from(i), 50.0)).collect();
        let set = select_k(&profiles, 0.0, 8, None, 7).unwrap();
        assert_eq!(set.k, 1);
    }

    #[test]
    fn force_k_bypasses_the_sweep() {
        let profiles: Vec<_> = (0..10)
            .map(|i| synthetic_profile(&format!("2025-01-{:02}", i + 1), 2000.0 + f64::from(i), 50.0))
            .collect();
        let set = select_k(&profiles, 0.70, 4, Some(8), 7).unwrap();
        assert_eq!(set.k, 8);
        assert!(select_k(&profiles, 0.70, 4, Some(11), 7).is_err());
    }

    #[test]
    fn unreachable_target_returns_k_max_with_flag() {
        // Two profiles can never explain the variance of a k_max=1 sweep.
        let profiles = vec![
            synthetic_profile("2025-01-01", 1000.0, 30.0),
            synthetic_profile("2025-01-02", 3000.0, 90.0),
        ];
        let set = select_k(&profiles, 0.99, 1, None, 7).unwrap();
        assert_eq!(set.k, 1);
        assert!(!set.met_target);
    }

    #[test]
    fn standardizer_round_trips() {
        let profiles: Vec<_> = (0..5)
            .map(|i| synthetic_profile(&format!("2025-01-0{}", i + 1), 2000.0 + 13.0 * f64::from(i), 50.0 + f64::from(i)))
            .collect();
        let rows: Vec<Vec<f64>> = profiles.iter().map(|p| p.features()).collect();
        let scaler = Standardizer::fit(&rows);
        for row in &rows {
            let back = scaler.invert(&scaler.transform(row));
            for (x, y) in row.iter().zip(&back) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cluster_pairing_follows_shared_dates() {
        // Forward and reverse profiles on the same dates, two blobs; the
        // date alignment must pair blob with blob whatever the labels.
        let mut fwd = Vec::new();
        let mut rev = Vec::new();
        for i in 0..6 {
            let d = format!("2025-01-{:02}", i + 1);
            let (dur, en) = if i < 3 { (1000.0, 30.0) } else { (3000.0, 90.0) };
            fwd.push(synthetic_profile(&d, dur, en));
            let mut r = synthetic_profile(&d, dur + 11.0, en + 1.0);
            r.origin = "B".into();
            r.destination = "A".into();
            rev.push(r);
        }
        let set_f = kmeans(&fwd, 2, 7, 100).unwrap();
        let set_r = kmeans(&rev, 2, 9, 100).unwrap();
        let pairs = pair_clusters_by_date(&fwd, &set_f, &rev, &set_r).unwrap();
        assert_eq!(pairs.len(), 2);
        for (cf, cr) in pairs {
            // Members of cf and cr share all their dates.
            let dates_f: Vec<_> = fwd
                .iter()
                .zip(&set_f.assignments)
                .filter(|(_, a)| **a == cf)
                .map(|(p, _)| p.date)
                .collect();
            for (p, a) in rev.iter().zip(&set_r.assignments) {
                if dates_f.contains(&p.date) {
                    assert_eq!(*a, cr);
                }
            }
        }
    }

    #[test]
    fn profiles_csv_round_trips() {
        let profiles = build_daily_profiles(
            &UniformWind(WindVector { east_ms: 3.0, north_ms: -2.0 }),
            test_route(),
            ("A", "B"),
            &AircraftParams::default(),
            &[date("2025-01-01"), date("2025-01-02")],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_profiles_csv(&profiles, &mut buf).unwrap();
        let mut back = read_profiles_csv(buf.as_slice()).unwrap();
        let mut original = profiles.clone();
        let key = |p: &DailyProfile| (p.date, p.origin.clone(), p.destination.clone());
        back.sort_by_key(key);
        original.sort_by_key(key);
        assert_eq!(original.len(), back.len());
        for (a, b) in original.iter().zip(&back) {
            assert_eq!(a.date, b.date);
            assert_eq!(a.origin, b.origin);
            for (ha, hb) in a.hours.iter().zip(&b.hours) {
                assert_relative_eq!(ha.duration_s, hb.duration_s, max_relative = 1e-12);
                assert_relative_eq!(ha.energy_kwh, hb.energy_kwh, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn malformed_profile_csv_is_rejected() {
        let missing_hour = "date,direction,hour,duration_s,energy_kwh\n2025-01-01,A->B,0,1000,30\n";
        assert!(matches!(
            read_profiles_csv(missing_hour.as_bytes()),
            Err(ClusterError::BadProfile { .. })
        ));
        let bad_direction = "date,direction,hour,duration_s,energy_kwh\n2025-01-01,AB,0,1000,30\n";
        assert!(matches!(
            read_profiles_csv(bad_direction.as_bytes()),
            Err(ClusterError::Value { line: 2, .. })
        ));
    }

    #[test]
    fn profile_dates_format_round_trip() {
        let d = date("2025-01-31");
        assert_eq!(d.day(), 31);
        assert_eq!(d.format("%Y-%m-%d").to_string(), "2025-01-31");
    }
}

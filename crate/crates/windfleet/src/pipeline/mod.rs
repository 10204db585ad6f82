//! End-to-end study pipeline. One JSON config drives a distance sweep:
//!
//! wind -> arrivals -> demand -> profiles -> clusters -> optimize ->
//! simulate -> report
//!
//! Every stage output is cached under a sha-256 of its inputs (config
//! slice plus upstream digests), so an unchanged rerun is all cache
//! hits and a mutated input re-runs exactly the stages downstream of
//! it. Optimize and simulate fan out over (distance, cluster) cells:
//! cells run in parallel, each cell single-threaded, and a cell the
//! optimizer proves unservable is recorded as infeasible in the report
//! rather than failing the run. Reports are written through temp files
//! and rename, so readers never see a torn artifact.

mod cache;
mod config;
mod report;

pub use config::{
    ClusteringConfig, DemandConfig, NetworkConfig, OptimizerConfig, SimulationConfig,
    StudyConfig, WindConfig, CONFIG_VERSION, DEFAULT_HOURLY_WEIGHTS,
};
pub use report::{
    emit_report, read_fleet_heatmap, CellReport, CellStatus, DirectionEnergy, HeatmapRow,
    SolverSummary, StudyReport, VertiportCharging, CHARGING_CSV, ENERGY_CSV, HEATMAP_CSV,
    STUDY_JSON, SUMMARY_CSV,
};

use std::env;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{NaiveDate, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    build_daily_profiles, pair_clusters_by_date, read_profiles_csv, select_k, write_profiles_csv,
    Centroid, ClusterSet, DailyProfile,
};
use crate::demand::{aggregate_to_flights, generate_arrivals, ArrivalStream, FlightDemand};
use crate::flight::Route;
use crate::opt::{
    build_program, read_charge_schedule_csv, read_fleet_csv, read_flight_schedule_csv, solve,
    validate, write_charge_schedule_csv, write_fleet_csv, write_flight_schedule_csv, OptError,
    RouteTable, SolveLimits,
};
use crate::sim::{self, Metrics, SimConfig, VertiportLayout};
use crate::units::miles_to_m;
use crate::wind::WindField;
use crate::{SocLadder, TimeGrid};

use cache::{digest_of, digest_of_bytes, write_atomic, CacheStore};

/// Bumped whenever an artifact schema changes, so stale cache entries
/// from older builds can never be mistaken for current ones.
const CACHE_SCHEMA: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Wind,
    Arrivals,
    Demand,
    Profiles,
    Clusters,
    Optimize,
    Simulate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Wind,
        Stage::Arrivals,
        Stage::Demand,
        Stage::Profiles,
        Stage::Clusters,
        Stage::Optimize,
        Stage::Simulate,
        Stage::Report,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Wind => "wind",
            Stage::Arrivals => "arrivals",
            Stage::Demand => "demand",
            Stage::Profiles => "profiles",
            Stage::Clusters => "clusters",
            Stage::Optimize => "optimize",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|s| s.label() == text)
            .ok_or_else(|| format!("unknown stage `{text}`; expected one of wind, arrivals, demand, profiles, clusters, optimize, simulate, report"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    /// The config itself is unusable; nothing ran.
    #[error("config: {0}")]
    Config(String),
    /// A stage failed; completed cache entries are preserved.
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

fn stage_error(stage: Stage, err: impl fmt::Display) -> PipelineError {
    PipelineError::Stage { stage, message: err.to_string() }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run just this stage, loading upstream outputs from cache.
    pub only: Option<Stage>,
    /// Rebuild even on a cache hit.
    pub force: bool,
    /// Overrides the cache location; falls back to WINDFLEET_CACHE_DIR,
    /// then to `cache/` under the config's output directory.
    pub cache_dir: Option<PathBuf>,
}

/// One materialized cache entry: which stage, for which unit (a
/// distance, a cell, or the whole study), and whether it was reused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRun {
    pub stage: Stage,
    pub unit: String,
    pub digest: String,
    pub cache_hit: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    /// Present when the report stage ran (a full run or `--only report`).
    pub report: Option<StudyReport>,
    /// Report artifacts copied into the config's output directory.
    pub artifacts: Vec<PathBuf>,
    pub trace: Vec<StageRun>,
}

/// Wind field plus the study dates it covers.
struct WindBundle {
    field: WindField,
    dates: Vec<NaiveDate>,
}

/// Clustering output for one distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterBundle {
    forward: ClusterSet,
    reverse: ClusterSet,
    /// `pairs[c] = (c, reverse cluster sharing most dates)`.
    pairs: Vec<(usize, usize)>,
    /// Forward medoid date per cluster; the day the simulator replays.
    medoid_dates: Vec<NaiveDate>,
}

/// Optimizer outcome for one cell as cached on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellOutcome {
    status: CellStatus,
    reason: Option<String>,
    objective: Option<f64>,
    fleet_size: Option<u32>,
    solver: Option<SolverSummary>,
}

/// One (distance, cluster) cell of the sweep.
#[derive(Debug, Clone, Copy)]
struct CellRef {
    dist_idx: usize,
    distance_mi: f64,
    cluster: usize,
    reverse: usize,
}

impl CellRef {
    fn unit(&self) -> String {
        format!("{}mi/k{}", self.distance_mi, self.cluster)
    }
}

struct Runner {
    store: CacheStore,
    only: Option<Stage>,
    force: bool,
}

impl Runner {
    fn acts_on(&self, stage: Stage) -> bool {
        self.only.map_or(true, |s| s == stage)
    }

    fn is_target(&self, stage: Stage) -> bool {
        self.only == Some(stage)
    }

    /// Materializes the entry when this run acts on the stage, else
    /// insists the entry is already cached.
    fn ensure<F>(&self, stage: Stage, digest: &str, build: F) -> Result<(PathBuf, bool), PipelineError>
    where
        F: FnOnce(&Path) -> Result<(), PipelineError>,
    {
        if self.acts_on(stage) {
            self.store.materialize(stage, digest, self.force, build)
        } else {
            self.store.require(stage, digest).map(|dir| (dir, true))
        }
    }

    /// True when the stage would actually build something this run.
    fn will_build(&self, stage: Stage, digests: &[String]) -> bool {
        self.acts_on(stage)
            && (self.force
                || digests.iter().any(|d| self.store.require(stage, d).is_err()))
    }
}

fn json_of<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config serialization is infallible")
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| stage_error(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| stage_error(stage, format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| stage_error(stage, format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n")
        .map_err(|e| stage_error(stage, format!("{}: {e}", path.display())))
}

/// Runs the study described by `config`. Stage outputs are cached by
/// content hash; `options` narrows the run to one stage or forces
/// rebuilds. The report lands in `config.output_dir`.
pub fn run_pipeline(config: &StudyConfig, options: &RunOptions) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let cache_root = options
        .cache_dir
        .clone()
        .or_else(|| env::var_os("WINDFLEET_CACHE_DIR").map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir.join("cache"));
    let runner = Runner {
        store: CacheStore::open(cache_root)?,
        only: options.only,
        force: options.force,
    };
    let mut trace = Vec::new();
    let partial = |trace: Vec<StageRun>| RunOutcome { report: None, artifacts: Vec::new(), trace };

    // Wind: the observed or synthesized field, plus the study dates.
    let wind_digest = wind_digest(config)?;
    let (wind_entry, hit) =
        runner.ensure(Stage::Wind, &wind_digest, |work| build_wind(config, work))?;
    trace.push(StageRun { stage: Stage::Wind, unit: "study".into(), digest: wind_digest.clone(), cache_hit: hit });
    if runner.is_target(Stage::Wind) {
        return Ok(partial(trace));
    }

    // Arrivals: the seeded passenger process, shared by every cell.
    let arrivals_digest = digest_of(&[
        CACHE_SCHEMA,
        "arrivals",
        &json_of(&config.demand.seed),
        &json_of(&config.demand.add),
        &json_of(&config.demand.hourly_weights),
        &json_of(&config.pairs()),
    ]);
    let (arrivals_entry, hit) = runner.ensure(Stage::Arrivals, &arrivals_digest, |work| {
        let stream = generate_arrivals(
            config.demand.seed,
            config.demand.add,
            &config.demand.hourly_weights,
            &config.pairs(),
        )
        .map_err(|e| stage_error(Stage::Arrivals, e))?;
        let mut bytes = Vec::new();
        stream.write_csv(&mut bytes).map_err(|e| stage_error(Stage::Arrivals, e))?;
        fs::write(work.join("arrivals.csv"), bytes).map_err(|e| stage_error(Stage::Arrivals, e))
    })?;
    trace.push(StageRun { stage: Stage::Arrivals, unit: "study".into(), digest: arrivals_digest.clone(), cache_hit: hit });
    if runner.is_target(Stage::Arrivals) {
        return Ok(partial(trace));
    }

    // Demand: arrivals pooled into per-step flight requests.
    let demand_digest = digest_of(&[
        CACHE_SCHEMA,
        "demand",
        &arrivals_digest,
        &json_of(&config.demand.capacity),
        &json_of(&config.demand.max_wait_s),
        &json_of(&config.optimizer.step_s),
        &json_of(&config.day_steps()),
    ]);
    let (demand_entry, hit) = runner.ensure(Stage::Demand, &demand_digest, |work| {
        let stream = load_arrivals(&arrivals_entry)?;
        let grid = TimeGrid::new(config.optimizer.step_s, config.day_steps(), 1)
            .map_err(|e| stage_error(Stage::Demand, e))?;
        let demand =
            aggregate_to_flights(&stream, config.demand.capacity, config.demand.max_wait_s, grid)
                .map_err(|e| stage_error(Stage::Demand, e))?;
        let mut bytes = Vec::new();
        demand.write_csv(&mut bytes).map_err(|e| stage_error(Stage::Demand, e))?;
        fs::write(work.join("demand.csv"), bytes).map_err(|e| stage_error(Stage::Demand, e))
    })?;
    trace.push(StageRun { stage: Stage::Demand, unit: "study".into(), digest: demand_digest.clone(), cache_hit: hit });
    if runner.is_target(Stage::Demand) {
        return Ok(partial(trace));
    }

    // Profiles: 24 hourly round trips per study date, per distance.
    let distances = &config.network.distances_mi;
    let mut wind_memo: Option<Arc<WindBundle>> = None;
    let mut profile_digests = Vec::with_capacity(distances.len());
    let mut profile_entries = Vec::with_capacity(distances.len());
    for &distance in distances {
        let digest = digest_of(&[
            CACHE_SCHEMA,
            "profiles",
            &wind_digest,
            &json_of(&config.aircraft),
            &json_of(&config.network.origin),
            &json_of(&config.network.bearing_deg),
            &json_of(&(&config.network.origin_id, &config.network.destination_id)),
            &json_of(&distance),
        ]);
        let (entry, hit) = runner.ensure(Stage::Profiles, &digest, |work| {
            let wind = load_wind(&mut wind_memo, &wind_entry)?;
            build_profiles(config, &wind, distance, work)
        })?;
        trace.push(StageRun { stage: Stage::Profiles, unit: format!("{distance}mi"), digest: digest.clone(), cache_hit: hit });
        profile_digests.push(digest);
        profile_entries.push(entry);
    }
    if runner.is_target(Stage::Profiles) {
        return Ok(partial(trace));
    }

    // Clusters: typical wind days per distance, both directions paired.
    let mut cluster_digests = Vec::with_capacity(distances.len());
    let mut cluster_entries = Vec::with_capacity(distances.len());
    for (i, &distance) in distances.iter().enumerate() {
        let digest = digest_of(&[
            CACHE_SCHEMA,
            "clusters",
            &profile_digests[i],
            &json_of(&config.clustering),
        ]);
        let (entry, hit) = runner.ensure(Stage::Clusters, &digest, |work| {
            build_clusters(config, &profile_entries[i], work)
        })?;
        trace.push(StageRun { stage: Stage::Clusters, unit: format!("{distance}mi"), digest: digest.clone(), cache_hit: hit });
        cluster_digests.push(digest);
        cluster_entries.push(entry);
    }
    if runner.is_target(Stage::Clusters) {
        return Ok(partial(trace));
    }

    let mut bundles = Vec::with_capacity(distances.len());
    for entry in &cluster_entries {
        let bundle: ClusterBundle = read_json(Stage::Clusters, &entry.join("clusters.json"))?;
        bundles.push(Arc::new(bundle));
    }

    let mut cells = Vec::new();
    for (dist_idx, &distance_mi) in distances.iter().enumerate() {
        let bundle = &bundles[dist_idx];
        for cluster in 0..bundle.forward.k {
            cells.push(CellRef {
                dist_idx,
                distance_mi,
                cluster,
                reverse: bundle.pairs[cluster].1,
            });
        }
    }

    // Optimize: one fleet program per cell; unservable cells become
    // infeasible report rows instead of failures.
    let opt_digests: Vec<String> = cells
        .iter()
        .map(|cell| {
            digest_of(&[
                CACHE_SCHEMA,
                "optimize",
                &cluster_digests[cell.dist_idx],
                &demand_digest,
                &json_of(&config.optimizer),
                &json_of(&config.charger),
                &json_of(&config.aircraft),
                &json_of(&cell.cluster),
            ])
        })
        .collect();
    let demand_memo: Option<Arc<FlightDemand>> = if runner.will_build(Stage::Optimize, &opt_digests)
    {
        Some(Arc::new(load_demand(&demand_entry)?))
    } else {
        None
    };
    let opt_results: Vec<(PathBuf, bool)> = cells
        .par_iter()
        .zip(&opt_digests)
        .map(|(cell, digest)| {
            runner.ensure(Stage::Optimize, digest, |work| {
                let demand = demand_memo.as_ref().expect("demand loaded before building");
                build_optimize_cell(config, &bundles[cell.dist_idx], *cell, demand, work)
            })
        })
        .collect::<Result<_, _>>()?;
    let mut opt_entries = Vec::with_capacity(cells.len());
    for ((cell, digest), (entry, hit)) in cells.iter().zip(&opt_digests).zip(opt_results) {
        trace.push(StageRun { stage: Stage::Optimize, unit: cell.unit(), digest: digest.clone(), cache_hit: hit });
        opt_entries.push(entry);
    }
    if runner.is_target(Stage::Optimize) {
        return Ok(partial(trace));
    }

    let mut outcomes = Vec::with_capacity(cells.len());
    for entry in &opt_entries {
        let outcome: CellOutcome = read_json(Stage::Optimize, &entry.join("outcome.json"))?;
        outcomes.push(outcome);
    }

    // Simulate: replay each feasible cell's schedule on its medoid day.
    let feasible: Vec<usize> = (0..cells.len())
        .filter(|&i| outcomes[i].status == CellStatus::Ok)
        .collect();
    let sim_digests: Vec<String> = feasible
        .iter()
        .map(|&i| {
            digest_of(&[
                CACHE_SCHEMA,
                "simulate",
                &opt_digests[i],
                &wind_digest,
                &arrivals_digest,
                &json_of(&config.network),
                &json_of(&config.simulation),
            ])
        })
        .collect();
    let sim_inputs: Option<(Arc<WindBundle>, Arc<ArrivalStream>)> =
        if runner.will_build(Stage::Simulate, &sim_digests) {
            let wind = load_wind(&mut wind_memo, &wind_entry)?;
            let arrivals = Arc::new(load_arrivals(&arrivals_entry)?);
            Some((wind, arrivals))
        } else {
            None
        };
    let sim_results: Vec<(PathBuf, bool)> = feasible
        .par_iter()
        .zip(&sim_digests)
        .map(|(&i, digest)| {
            runner.ensure(Stage::Simulate, digest, |work| {
                let (wind, arrivals) =
                    sim_inputs.as_ref().expect("simulate inputs loaded before building");
                build_simulate_cell(
                    config,
                    &bundles[cells[i].dist_idx],
                    cells[i],
                    &opt_entries[i],
                    wind,
                    arrivals,
                    work,
                )
            })
        })
        .collect::<Result<_, _>>()?;
    let mut sim_entries: Vec<Option<PathBuf>> = vec![None; cells.len()];
    for ((&i, digest), (entry, hit)) in feasible.iter().zip(&sim_digests).zip(sim_results) {
        trace.push(StageRun { stage: Stage::Simulate, unit: cells[i].unit(), digest: digest.clone(), cache_hit: hit });
        sim_entries[i] = Some(entry);
    }
    if runner.is_target(Stage::Simulate) {
        return Ok(partial(trace));
    }

    // Report: flatten every cell into the study artifacts.
    let mut report_parts: Vec<&str> = vec![CACHE_SCHEMA, "report", &wind_digest, &arrivals_digest, &demand_digest];
    report_parts.extend(profile_digests.iter().map(String::as_str));
    report_parts.extend(cluster_digests.iter().map(String::as_str));
    report_parts.extend(opt_digests.iter().map(String::as_str));
    report_parts.extend(sim_digests.iter().map(String::as_str));
    let report_digest = digest_of(&report_parts);
    let (report_entry, hit) = runner.ensure(Stage::Report, &report_digest, |work| {
        let report = assemble_report(config, &report_digest, &cells, &bundles, &outcomes, &sim_entries)?;
        emit_report(&report, work)?;
        Ok(())
    })?;
    trace.push(StageRun { stage: Stage::Report, unit: "study".into(), digest: report_digest.clone(), cache_hit: hit });

    let report: StudyReport = read_json(Stage::Report, &report_entry.join(STUDY_JSON))?;
    let mut artifacts = Vec::new();
    for name in [ENERGY_CSV, CHARGING_CSV, HEATMAP_CSV, SUMMARY_CSV, STUDY_JSON] {
        let bytes = fs::read(report_entry.join(name))
            .map_err(|e| stage_error(Stage::Report, format!("{name}: {e}")))?;
        let dest = config.output_dir.join(name);
        write_atomic(&dest, &bytes)
            .map_err(|e| stage_error(Stage::Report, format!("{}: {e}", dest.display())))?;
        artifacts.push(dest);
    }
    Ok(RunOutcome { report: Some(report), artifacts, trace })
}

fn wind_digest(config: &StudyConfig) -> Result<String, PipelineError> {
    let source = match (&config.wind.csv, &config.wind.synth) {
        (Some(path), None) => {
            let bytes = fs::read(path)
                .map_err(|e| stage_error(Stage::Wind, format!("{}: {e}", path.display())))?;
            format!("csv:{}", digest_of_bytes(&bytes))
        }
        (None, Some(spec)) => format!("synth:{}:{}", json_of(spec), config.wind.seed),
        _ => unreachable!("config validation enforces exactly one wind source"),
    };
    Ok(digest_of(&[CACHE_SCHEMA, "wind", &source, &json_of(&config.demand.days)]))
}

fn build_wind(config: &StudyConfig, work: &Path) -> Result<(), PipelineError> {
    let err = |e: &dyn fmt::Display| stage_error(Stage::Wind, e);
    let field = match (&config.wind.csv, &config.wind.synth) {
        (Some(path), None) => {
            let file = fs::File::open(path).map_err(|e| err(&format!("{}: {e}", path.display())))?;
            WindField::ingest_csv(BufReader::new(file)).map_err(|e| err(&e))?
        }
        (None, Some(spec)) => WindField::synthesize(spec, config.wind.seed).map_err(|e| err(&e))?,
        _ => unreachable!("config validation enforces exactly one wind source"),
    };
    let dates = study_dates(config, &field)?;
    let mut bytes = Vec::new();
    field.write_csv(&mut bytes).map_err(|e| err(&e))?;
    fs::write(work.join("field.csv"), bytes).map_err(|e| err(&e))?;
    write_json(Stage::Wind, &work.join("meta.json"), &dates)
}

/// The `days` study dates: full UTC days starting at the field's first
/// midnight, with a one-day tail required so late flights stay covered.
fn study_dates(config: &StudyConfig, field: &WindField) -> Result<Vec<NaiveDate>, PipelineError> {
    let (start, end) = field.coverage();
    let first = if start.time() == NaiveTime::MIN {
        start.date_naive()
    } else {
        start
            .date_naive()
            .succ_opt()
            .ok_or_else(|| stage_error(Stage::Wind, "wind start date overflows"))?
    };
    let midnight = first.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
    let available = (end - midnight).num_hours();
    let needed = i64::from(config.needed_wind_hours());
    if available < needed {
        return Err(stage_error(
            Stage::Wind,
            format!(
                "wind covers {available} hours from {first}; {} study days need {needed} \
                 (every day plus a one-day tail)",
                config.demand.days
            ),
        ));
    }
    let mut dates = Vec::with_capacity(config.demand.days as usize);
    let mut date = first;
    for _ in 0..config.demand.days {
        dates.push(date);
        date = date
            .succ_opt()
            .ok_or_else(|| stage_error(Stage::Wind, "study dates overflow the calendar"))?;
    }
    Ok(dates)
}

fn load_wind(
    memo: &mut Option<Arc<WindBundle>>,
    entry: &Path,
) -> Result<Arc<WindBundle>, PipelineError> {
    if let Some(bundle) = memo {
        return Ok(Arc::clone(bundle));
    }
    let path = entry.join("field.csv");
    let file = fs::File::open(&path)
        .map_err(|e| stage_error(Stage::Wind, format!("{}: {e}", path.display())))?;
    let field = WindField::ingest_csv(BufReader::new(file)).map_err(|e| stage_error(Stage::Wind, e))?;
    let dates: Vec<NaiveDate> = read_json(Stage::Wind, &entry.join("meta.json"))?;
    let bundle = Arc::new(WindBundle { field, dates });
    *memo = Some(Arc::clone(&bundle));
    Ok(bundle)
}

fn load_arrivals(entry: &Path) -> Result<ArrivalStream, PipelineError> {
    let path = entry.join("arrivals.csv");
    let file = fs::File::open(&path)
        .map_err(|e| stage_error(Stage::Arrivals, format!("{}: {e}", path.display())))?;
    ArrivalStream::read_csv(BufReader::new(file)).map_err(|e| stage_error(Stage::Arrivals, e))
}

fn load_demand(entry: &Path) -> Result<FlightDemand, PipelineError> {
    let path = entry.join("demand.csv");
    let file = fs::File::open(&path)
        .map_err(|e| stage_error(Stage::Demand, format!("{}: {e}", path.display())))?;
    FlightDemand::read_csv(BufReader::new(file)).map_err(|e| stage_error(Stage::Demand, e))
}

fn build_profiles(
    config: &StudyConfig,
    wind: &WindBundle,
    distance_mi: f64,
    work: &Path,
) -> Result<(), PipelineError> {
    let route =
        Route::from_bearing(config.network.origin, config.network.bearing_deg, miles_to_m(distance_mi));
    let profiles = build_daily_profiles(
        &wind.field,
        route,
        (&config.network.origin_id, &config.network.destination_id),
        &config.aircraft,
        &wind.dates,
    )
    .map_err(|e| stage_error(Stage::Profiles, e))?;
    let mut bytes = Vec::new();
    write_profiles_csv(&profiles, &mut bytes).map_err(|e| stage_error(Stage::Profiles, e))?;
    fs::write(work.join("profiles.csv"), bytes).map_err(|e| stage_error(Stage::Profiles, e))
}

fn build_clusters(config: &StudyConfig, profiles_entry: &Path, work: &Path) -> Result<(), PipelineError> {
    let err = |e: &dyn fmt::Display| stage_error(Stage::Clusters, e);
    let path = profiles_entry.join("profiles.csv");
    let file = fs::File::open(&path).map_err(|e| err(&format!("{}: {e}", path.display())))?;
    let profiles = read_profiles_csv(BufReader::new(file)).map_err(|e| err(&e))?;
    let forward: Vec<DailyProfile> =
        profiles.iter().filter(|p| p.origin == config.network.origin_id).cloned().collect();
    let reverse: Vec<DailyProfile> =
        profiles.iter().filter(|p| p.origin == config.network.destination_id).cloned().collect();
    if forward.is_empty() || reverse.is_empty() {
        return Err(err(&"no usable profiles in either direction; every study day was dropped"));
    }
    let clu = &config.clustering;
    let forward_set =
        select_k(&forward, clu.target, clu.k_max, clu.force_k, clu.seed).map_err(|e| err(&e))?;
    let reverse_set =
        select_k(&reverse, clu.target, clu.k_max, clu.force_k, clu.seed).map_err(|e| err(&e))?;
    let pairs =
        pair_clusters_by_date(&forward, &forward_set, &reverse, &reverse_set).map_err(|e| err(&e))?;
    let medoid_dates: Vec<NaiveDate> =
        forward_set.medoids.iter().map(|&i| forward[i].date).collect();
    let bundle = ClusterBundle { forward: forward_set, reverse: reverse_set, pairs, medoid_dates };
    write_json(Stage::Clusters, &work.join("clusters.json"), &bundle)
}

/// True for optimizer errors that mean "this cell cannot be served",
/// as opposed to a malformed program.
fn is_cell_infeasible(err: &OptError) -> bool {
    matches!(
        err,
        OptError::InfeasibleRoute { .. }
            | OptError::UnservableDemand { .. }
            | OptError::Infeasible { .. }
            | OptError::IntegerInfeasible { .. }
    )
}

/// Per-step route tables from a cluster centroid: flight time rounded
/// up to whole steps, energy rounded up to whole charge levels.
fn centroid_tables(
    grid: TimeGrid,
    ladder: SocLadder,
    centroid: &Centroid,
    battery_kwh: f64,
) -> (Vec<u32>, Vec<u32>) {
    (0..grid.day_steps())
        .map(|t| {
            let hour = grid.hour_of_step(t) as usize;
            let tau = grid.steps_for_duration(centroid.duration_s[hour]);
            let kappa = ladder.levels_for_energy(centroid.energy_kwh[hour], battery_kwh).max(1);
            (tau, kappa)
        })
        .unzip()
}

fn build_optimize_cell(
    config: &StudyConfig,
    bundle: &ClusterBundle,
    cell: CellRef,
    demand: &FlightDemand,
    work: &Path,
) -> Result<(), PipelineError> {
    let err = |e: &dyn fmt::Display| stage_error(Stage::Optimize, e);
    let write_infeasible = |reason: String| {
        let outcome = CellOutcome {
            status: CellStatus::Infeasible,
            reason: Some(reason),
            objective: None,
            fleet_size: None,
            solver: None,
        };
        write_json(Stage::Optimize, &work.join("outcome.json"), &outcome)
    };

    let ladder = SocLadder::new(config.optimizer.k_levels).map_err(|e| err(&e))?;
    let grid =
        TimeGrid::new(config.optimizer.step_s, config.day_steps(), 1).map_err(|e| err(&e))?;
    let battery = config.aircraft.battery_capacity_kwh;
    let (a, b) = (&config.network.origin_id, &config.network.destination_id);
    let mut tau = RouteTable::new(grid.day_steps());
    let mut kappa = RouteTable::new(grid.day_steps());
    let (tau_fwd, kappa_fwd) =
        centroid_tables(grid, ladder, &bundle.forward.centroids[cell.cluster], battery);
    let (tau_rev, kappa_rev) =
        centroid_tables(grid, ladder, &bundle.reverse.centroids[cell.reverse], battery);
    tau.insert(a, b, tau_fwd).map_err(|e| err(&e))?;
    tau.insert(b, a, tau_rev).map_err(|e| err(&e))?;
    kappa.insert(a, b, kappa_fwd).map_err(|e| err(&e))?;
    kappa.insert(b, a, kappa_rev).map_err(|e| err(&e))?;

    let timetable = config.charger.build_timetable(ladder, grid).map_err(|e| err(&e))?;
    let vertiports = [a.clone(), b.clone()];
    let program = match build_program(
        demand,
        &tau,
        &kappa,
        &timetable,
        config.optimizer.k_levels,
        &vertiports,
        config.optimizer.alpha,
    ) {
        Ok(program) => program,
        Err(e) if is_cell_infeasible(&e) => return write_infeasible(e.to_string()),
        Err(e) => return Err(err(&e)),
    };
    let limits = SolveLimits {
        time_limit_s: config.optimizer.time_limit_s,
        node_limit: config.optimizer.node_limit,
        ..SolveLimits::default()
    };
    let solution = match solve(&program, &limits) {
        Ok(solution) => solution,
        Err(e) if is_cell_infeasible(&e) => return write_infeasible(e.to_string()),
        Err(e) => return Err(err(&e)),
    };
    let check = validate(&program, &solution.values);
    if !check.pass {
        let debug_dir = std::path::Path::new("/tmp/windfleet-debug");
        let _ = fs::create_dir_all(debug_dir);
        let _ = fs::write(debug_dir.join("program.lp"), crate::opt::export_lp(&program));
        let _ = fs::write(
            debug_dir.join("values.txt"),
            solution
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{} {v}\n", program.variable_name(i)))
                .collect::<String>(),
        );
        let _ = fs::write(
            debug_dir.join("report.txt"),
            format!(
                "objective {}\nfleet {}\nstats {:?}\nbalance_max {}\nshortfall {}\ncoverage {:?}\n",
                solution.objective,
                solution.fleet_size,
                solution.stats,
                check.balance_max_abs_residual,
                check.demand_max_shortfall,
                check.coverage.iter().filter(|c| c.served < c.required).collect::<Vec<_>>()
            ),
        );
        return Err(err(&format!(
            "solution failed validation: {}",
            check.first_violation.unwrap_or_else(|| "unknown violation".into())
        )));
    }

    let mut bytes = Vec::new();
    write_flight_schedule_csv(&solution.flights, &mut bytes).map_err(|e| err(&e))?;
    fs::write(work.join("flights.csv"), &bytes).map_err(|e| err(&e))?;
    bytes.clear();
    write_charge_schedule_csv(&solution.charges, &mut bytes).map_err(|e| err(&e))?;
    fs::write(work.join("charges.csv"), &bytes).map_err(|e| err(&e))?;
    bytes.clear();
    write_fleet_csv(&solution.initial_idle, &mut bytes).map_err(|e| err(&e))?;
    fs::write(work.join("fleet.csv"), &bytes).map_err(|e| err(&e))?;
    let outcome = CellOutcome {
        status: CellStatus::Ok,
        reason: None,
        objective: Some(solution.objective),
        fleet_size: Some(solution.fleet_size),
        solver: Some(SolverSummary {
            nodes: solution.stats.nodes,
            lp_iterations: solution.stats.lp_iterations,
            gap: solution.stats.gap,
            proved_optimal: solution.stats.proved_optimal,
        }),
    };
    write_json(Stage::Optimize, &work.join("outcome.json"), &outcome)
}

/// Horizon slack past the schedulable day: the longest flight or full
/// recharge, plus ground handling, plus margin for queueing.
fn max_flight_steps(
    config: &StudyConfig,
    grid: TimeGrid,
    bundle: &ClusterBundle,
    cell: CellRef,
) -> Result<u32, PipelineError> {
    let err = |e: &dyn fmt::Display| stage_error(Stage::Simulate, e);
    let flight_steps = bundle.forward.centroids[cell.cluster]
        .duration_s
        .iter()
        .chain(&bundle.reverse.centroids[cell.reverse].duration_s)
        .map(|d| grid.steps_for_duration(*d))
        .max()
        .unwrap_or(1);
    let full_charge_s = config
        .charger
        .charge_time_s(crate::soc::RESERVE_FRACTION, 1.0)
        .map_err(|e| err(&e))?;
    let charge_steps = grid.steps_for_duration(full_charge_s);
    let ground_steps = grid
        .steps_for_duration(2.0 * config.network.taxi_s + config.simulation.turnaround_s);
    Ok(flight_steps.max(charge_steps) + ground_steps + 2)
}

fn build_simulate_cell(
    config: &StudyConfig,
    bundle: &ClusterBundle,
    cell: CellRef,
    opt_entry: &Path,
    wind: &WindBundle,
    arrivals: &ArrivalStream,
    work: &Path,
) -> Result<(), PipelineError> {
    let err = |e: &dyn fmt::Display| stage_error(Stage::Simulate, e);
    let open = |name: &str| {
        fs::File::open(opt_entry.join(name))
            .map(BufReader::new)
            .map_err(|e| stage_error(Stage::Simulate, format!("{name}: {e}")))
    };
    let flights = read_flight_schedule_csv(open("flights.csv")?).map_err(|e| err(&e))?;
    let charges = read_charge_schedule_csv(open("charges.csv")?).map_err(|e| err(&e))?;
    let fleet = read_fleet_csv(open("fleet.csv")?).map_err(|e| err(&e))?;

    let ladder = SocLadder::new(config.optimizer.k_levels).map_err(|e| err(&e))?;
    let day_grid =
        TimeGrid::new(config.optimizer.step_s, config.day_steps(), 1).map_err(|e| err(&e))?;
    let slack = max_flight_steps(config, day_grid, bundle, cell)?;
    let grid =
        TimeGrid::new(config.optimizer.step_s, config.day_steps(), slack).map_err(|e| err(&e))?;
    let mut sim_config = SimConfig::new(
        grid,
        config.aircraft.clone(),
        ladder,
        bundle.medoid_dates[cell.cluster],
    );
    sim_config.charger = config.charger;
    sim_config.turnaround_s = config.simulation.turnaround_s;
    sim_config.allow_substitution = config.simulation.allow_substitution;
    sim_config.boarding_capacity = config.demand.capacity;
    sim_config.max_wait_s = config.demand.max_wait_s;

    let net = &config.network;
    let route = Route::from_bearing(net.origin, net.bearing_deg, miles_to_m(cell.distance_mi));
    let layouts = vec![
        VertiportLayout::simple(&net.origin_id, net.origin, net.pads, net.chargers, net.taxi_s),
        VertiportLayout::simple(&net.destination_id, route.destination, net.pads, net.chargers, net.taxi_s),
    ];
    let (log, metrics) =
        sim::run(&sim_config, &layouts, &fleet, &flights, &charges, &wind.field, arrivals)
            .map_err(|e| err(&e))?;
    let mut bytes = Vec::new();
    log.write_csv(&mut bytes).map_err(|e| err(&e))?;
    fs::write(work.join("events.csv"), bytes).map_err(|e| err(&e))?;
    write_json(Stage::Simulate, &work.join("metrics.json"), &metrics)
}

fn direction_energy(direction: String, centroid: &Centroid) -> DirectionEnergy {
    let n = centroid.energy_kwh.len().max(1) as f64;
    let mean_energy = centroid.energy_kwh.iter().sum::<f64>() / n;
    let min_energy = centroid.energy_kwh.iter().copied().fold(f64::INFINITY, f64::min);
    let max_energy = centroid.energy_kwh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_duration = centroid.duration_s.iter().sum::<f64>() / n;
    DirectionEnergy {
        direction,
        mean_energy_kwh: mean_energy,
        min_energy_kwh: min_energy,
        max_energy_kwh: max_energy,
        mean_duration_s: mean_duration,
    }
}

fn assemble_report(
    config: &StudyConfig,
    report_digest: &str,
    cells: &[CellRef],
    bundles: &[Arc<ClusterBundle>],
    outcomes: &[CellOutcome],
    sim_entries: &[Option<PathBuf>],
) -> Result<StudyReport, PipelineError> {
    let (a, b) = (&config.network.origin_id, &config.network.destination_id);
    let mut reports = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let bundle = &bundles[cell.dist_idx];
        let outcome = &outcomes[i];
        let energy = vec![
            direction_energy(format!("{a}->{b}"), &bundle.forward.centroids[cell.cluster]),
            direction_energy(format!("{b}->{a}"), &bundle.reverse.centroids[cell.reverse]),
        ];
        let metrics: Option<Metrics> = match &sim_entries[i] {
            Some(entry) => Some(read_json(Stage::Report, &entry.join("metrics.json"))?),
            None => None,
        };
        let charging = metrics
            .as_ref()
            .map(|m| {
                m.per_vertiport
                    .iter()
                    .map(|(vertiport, v)| VertiportCharging {
                        vertiport: vertiport.clone(),
                        charge_sessions: u64::from(v.charge_sessions),
                        charger_busy_s: v.charger_busy_s,
                        charge_energy_kwh: v.charge_energy_kwh,
                    })
                    .collect()
            })
            .unwrap_or_default();
        reports.push(CellReport {
            distance_mi: cell.distance_mi,
            cluster: cell.cluster,
            reverse_cluster: cell.reverse,
            weight: bundle.forward.weights[cell.cluster],
            status: outcome.status,
            reason: outcome.reason.clone(),
            fleet_size: outcome.fleet_size,
            objective: outcome.objective,
            solver: outcome.solver.clone(),
            energy,
            charging,
            metrics,
        });
    }
    Ok(StudyReport {
        version: CONFIG_VERSION,
        config_digest: report_digest.to_string(),
        cells: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wind::SynthSpec;

    fn tiny_config(root: &Path) -> StudyConfig {
        let mut config = StudyConfig::desk_scale();
        config.network.distances_mi = vec![20.0, 60.0];
        config.network.pads = 4;
        config.network.chargers = 2;
        config.demand.add = 24.0;
        config.demand.days = 6;
        config.optimizer.step_s = 1800;
        config.optimizer.k_levels = 4;
        config.clustering.force_k = Some(2);
        config.clustering.k_max = 4;
        config.wind.synth = Some(SynthSpec {
            corridor_length_mi: 64.0,
            spacing_mi: 16.0,
            ..SynthSpec::default_desk(6 * 24 + 24)
        });
        config.output_dir = root.join("out");
        config
    }

    fn hits_by_stage(trace: &[StageRun]) -> std::collections::BTreeMap<&'static str, (usize, usize)> {
        let mut by_stage = std::collections::BTreeMap::new();
        for run in trace {
            let slot = by_stage.entry(run.stage.label()).or_insert((0, 0));
            slot.0 += usize::from(run.cache_hit);
            slot.1 += 1;
        }
        by_stage
    }

    #[test]
    fn full_run_then_rerun_is_all_cache_hits_and_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let config = tiny_config(tmp.path());
        let options = RunOptions::default();

        let first = run_pipeline(&config, &options).unwrap();
        let report = first.report.as_ref().expect("report present");
        assert_eq!(report.cells.len(), 4, "2 distances x 2 clusters");
        assert!(first.trace.iter().all(|r| !r.cache_hit));
        let optimize_runs =
            first.trace.iter().filter(|r| r.stage == Stage::Optimize).count();
        assert_eq!(optimize_runs, 4);
        let first_bytes: Vec<Vec<u8>> =
            first.artifacts.iter().map(|p| fs::read(p).unwrap()).collect();

        let second = run_pipeline(&config, &options).unwrap();
        assert!(
            second.trace.iter().all(|r| r.cache_hit),
            "second run should be pure cache: {:?}",
            second.trace.iter().filter(|r| !r.cache_hit).collect::<Vec<_>>()
        );
        let second_bytes: Vec<Vec<u8>> =
            second.artifacts.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first_bytes, second_bytes);
    }

    #[test]
    fn demand_seed_change_invalidates_exactly_the_downstream_stages() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = tiny_config(tmp.path());
        run_pipeline(&config, &RunOptions::default()).unwrap();

        config.demand.seed += 1;
        let rerun = run_pipeline(&config, &RunOptions::default()).unwrap();
        let by_stage = hits_by_stage(&rerun.trace);
        for stage in ["wind", "profiles", "clusters"] {
            let (hits, total) = by_stage[stage];
            assert_eq!(hits, total, "{stage} should be untouched");
        }
        for stage in ["arrivals", "demand", "optimize", "simulate", "report"] {
            let (hits, _) = by_stage[stage];
            assert_eq!(hits, 0, "{stage} should re-run");
        }
    }

    #[test]
    fn force_rebuilds_everything_yet_reproduces_the_same_bytes() {
        let tmp = tempfile::tempdir().unwrap();
        let config = tiny_config(tmp.path());
        let first = run_pipeline(&config, &RunOptions::default()).unwrap();
        let first_bytes: Vec<Vec<u8>> =
            first.artifacts.iter().map(|p| fs::read(p).unwrap()).collect();

        let forced =
            run_pipeline(&config, &RunOptions { force: true, ..RunOptions::default() }).unwrap();
        assert!(forced.trace.iter().all(|r| !r.cache_hit));
        let forced_bytes: Vec<Vec<u8>> =
            forced.artifacts.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first_bytes, forced_bytes);
    }

    #[test]
    fn only_stage_fails_cleanly_without_cached_upstreams() {
        let tmp = tempfile::tempdir().unwrap();
        let config = tiny_config(tmp.path());
        let options = RunOptions { only: Some(Stage::Optimize), ..RunOptions::default() };
        let err = run_pipeline(&config, &options).unwrap_err();
        assert!(err.to_string().contains("no cached output"), "{err}");
    }

    #[test]
    fn only_stage_reruns_just_that_stage_after_a_full_run() {
        let tmp = tempfile::tempdir().unwrap();
        let config = tiny_config(tmp.path());
        run_pipeline(&config, &RunOptions::default()).unwrap();

        let options = RunOptions {
            only: Some(Stage::Optimize),
            force: true,
            ..RunOptions::default()
        };
        let outcome = run_pipeline(&config, &options).unwrap();
        assert!(outcome.report.is_none());
        for run in &outcome.trace {
            if run.stage == Stage::Optimize {
                assert!(!run.cache_hit, "forced target must rebuild");
            } else {
                assert!(run.cache_hit, "upstream {} must come from cache", run.stage);
            }
        }
        assert!(outcome.trace.iter().all(|r| r.stage != Stage::Simulate));
    }

    #[test]
    fn undersized_battery_marks_cells_infeasible_without_failing_the_run() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = tiny_config(tmp.path());
        config.aircraft.battery_capacity_kwh = 20.0;
        let outcome = run_pipeline(&config, &RunOptions::default()).unwrap();
        let report = outcome.report.unwrap();
        assert_eq!(report.cells.len(), 4);
        let far: Vec<_> =
            report.cells.iter().filter(|c| c.distance_mi == 60.0).collect();
        assert!(far.iter().all(|c| c.status == CellStatus::Infeasible), "60 mi exceeds 4 levels");
        assert!(far.iter().all(|c| c.reason.as_deref().is_some_and(|r| r.contains("levels"))));
        let near: Vec<_> =
            report.cells.iter().filter(|c| c.distance_mi == 20.0).collect();
        assert!(near.iter().all(|c| c.status == CellStatus::Ok), "20 mi fits the ladder");
        let heatmap = fs::read_to_string(config.output_dir.join(HEATMAP_CSV)).unwrap();
        assert_eq!(heatmap.lines().count(), 5, "header plus all four cells:\n{heatmap}");
    }

    #[test]
    fn explicit_cache_dir_moves_the_cache() {
        let tmp = tempfile::tempdir().unwrap();
        let config = tiny_config(tmp.path());
        let cache = tmp.path().join("elsewhere");
        let options = RunOptions { cache_dir: Some(cache.clone()), ..RunOptions::default() };
        run_pipeline(&config, &options).unwrap();
        assert!(cache.join("wind").is_dir());
        assert!(!config.output_dir.join("cache").exists());
    }

    #[test]
    fn wind_too_short_for_the_study_fails_the_wind_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = tiny_config(tmp.path());
        config.wind.synth = Some(SynthSpec {
            corridor_length_mi: 64.0,
            spacing_mi: 16.0,
            ..SynthSpec::default_desk(48)
        });
        let err = run_pipeline(&config, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::Stage { stage: Stage::Wind, .. }), "{err}");
        assert!(err.to_string().contains("study days need"), "{err}");
    }
}

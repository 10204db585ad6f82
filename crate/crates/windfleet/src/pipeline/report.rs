//! Study report: one record per (distance, cluster) cell plus flat CSV
//! views. Artifact schemas:
//!
//! * `energy_by_cluster.csv`: `distance_mi,cluster,direction,weight,
//!   mean_energy_kwh,min_energy_kwh,max_energy_kwh,mean_duration_s`,
//!   one row per cell and direction; stats range over the centroid's
//!   24 departure hours and rows exist even for infeasible cells.
//! * `charging_times.csv`: `distance_mi,cluster,vertiport,
//!   charge_sessions,charger_busy_s,charge_energy_kwh`, one row per
//!   vertiport of each simulated cell.
//! * `fleet_heatmap.csv`: `distance_mi,cluster,status,fleet_size`,
//!   every cell present, `fleet_size` empty when infeasible.
//! * `metrics_summary.csv`: one wide row per cell (header below),
//!   numeric fields empty when the cell never reached that stage.
//! * `study.json`: the full [`StudyReport`].
//!
//! An empty study still writes every file with its header line.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::write_atomic;
use super::PipelineError;
use crate::sim::Metrics;

pub const ENERGY_CSV: &str = "energy_by_cluster.csv";
pub const CHARGING_CSV: &str = "charging_times.csv";
pub const HEATMAP_CSV: &str = "fleet_heatmap.csv";
pub const SUMMARY_CSV: &str = "metrics_summary.csv";
pub const STUDY_JSON: &str = "study.json";

const HEATMAP_HEADER: &str = "distance_mi,cluster,status,fleet_size";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub version: u32,
    /// Digest of the driving config; ties artifacts back to inputs.
    pub config_digest: String,
    pub cells: Vec<CellReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Infeasible,
}

impl CellStatus {
    pub fn label(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Infeasible => "infeasible",
        }
    }
}

/// Everything the study learned about one (distance, cluster) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub distance_mi: f64,
    /// Forward-direction cluster index within this distance.
    pub cluster: usize,
    /// Reverse-direction cluster paired with it by shared dates.
    pub reverse_cluster: usize,
    /// Fraction of study days assigned to this cluster.
    pub weight: f64,
    pub status: CellStatus,
    /// Why the optimizer rejected the cell; None when ok.
    pub reason: Option<String>,
    pub fleet_size: Option<u32>,
    pub objective: Option<f64>,
    pub solver: Option<SolverSummary>,
    pub energy: Vec<DirectionEnergy>,
    pub charging: Vec<VertiportCharging>,
    pub metrics: Option<Metrics>,
}

/// Solver counters that are deterministic for a fixed program; wall
/// time is deliberately excluded so identical runs emit identical
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub nodes: u64,
    pub lp_iterations: u64,
    pub gap: f64,
    pub proved_optimal: bool,
}

/// Centroid energy statistics for one direction of a cell, over the 24
/// departure hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEnergy {
    pub direction: String,
    pub mean_energy_kwh: f64,
    pub min_energy_kwh: f64,
    pub max_energy_kwh: f64,
    pub mean_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertiportCharging {
    pub vertiport: String,
    pub charge_sessions: u64,
    pub charger_busy_s: f64,
    pub charge_energy_kwh: f64,
}

/// One reloaded heatmap row; `fleet_size` is None for infeasible cells.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRow {
    pub distance_mi: f64,
    pub cluster: usize,
    pub status: CellStatus,
    pub fleet_size: Option<u32>,
}

fn opt_str<T: ToString>(value: &Option<T>) -> String {
    value.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn energy_csv(report: &StudyReport) -> String {
    let mut out = String::from(
        "distance_mi,cluster,direction,weight,mean_energy_kwh,min_energy_kwh,max_energy_kwh,mean_duration_s\n",
    );
    for cell in &report.cells {
        for dir in &cell.energy {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                cell.distance_mi,
                cell.cluster,
                dir.direction,
                cell.weight,
                dir.mean_energy_kwh,
                dir.min_energy_kwh,
                dir.max_energy_kwh,
                dir.mean_duration_s
            ));
        }
    }
    out
}

fn charging_csv(report: &StudyReport) -> String {
    let mut out =
        String::from("distance_mi,cluster,vertiport,charge_sessions,charger_busy_s,charge_energy_kwh\n");
    for cell in &report.cells {
        for port in &cell.charging {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.distance_mi,
                cell.cluster,
                port.vertiport,
                port.charge_sessions,
                port.charger_busy_s,
                port.charge_energy_kwh
            ));
        }
    }
    out
}

fn heatmap_csv(report: &StudyReport) -> String {
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for cell in &report.cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            cell.distance_mi,
            cell.cluster,
            cell.status.label(),
            opt_str(&cell.fleet_size)
        ));
    }
    out
}

fn summary_csv(report: &StudyReport) -> String {
    let mut out = String::from(
        "distance_mi,cluster,status,fleet_size,objective,solver_nodes,proved_optimal,flights,\
         repositioning_flights,passengers_generated,passengers_served,passengers_unmet,\
         unmet_departures,late_dispatches,substitutions,utilization,mean_occupancy,\
         waiting_mean_s,waiting_p95_s,trip_mean_s,reserve_breaches,truncated_flights,\
         flight_energy_kwh,charge_energy_kwh\n",
    );
    for cell in &report.cells {
        let m = cell.metrics.as_ref();
        let f = |get: &dyn Fn(&Metrics) -> String| m.map(get).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            cell.distance_mi,
            cell.cluster,
            cell.status.label(),
            opt_str(&cell.fleet_size),
            opt_str(&cell.objective),
            opt_str(&cell.solver.as_ref().map(|s| s.nodes)),
            opt_str(&cell.solver.as_ref().map(|s| s.proved_optimal)),
            f(&|m| m.flights.to_string()),
            f(&|m| m.repositioning_flights.to_string()),
            f(&|m| m.passengers.generated.to_string()),
            f(&|m| m.passengers.served.to_string()),
            f(&|m| m.passengers.unmet.to_string()),
            f(&|m| m.unmet_departures.to_string()),
            f(&|m| m.late_dispatches.to_string()),
            f(&|m| m.substitutions.to_string()),
            f(&|m| m.utilization.to_string()),
            f(&|m| m.mean_occupancy.to_string()),
            f(&|m| m.passengers.waiting_mean_s.to_string()),
            f(&|m| m.passengers.waiting_p95_s.to_string()),
            f(&|m| m.passengers.trip_mean_s.to_string()),
            f(&|m| m.reserve_breaches.to_string()),
            f(&|m| m.truncated_flights.to_string()),
            f(&|m| m.total_flight_energy_kwh.to_string()),
            f(&|m| m.total_charge_energy_kwh.to_string()),
        ));
    }
    out
}

/// Writes the four CSV views plus `study.json` into `dir`, each through
/// a temp file and rename. Returns the artifact paths in a fixed order.
pub fn emit_report(report: &StudyReport, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| PipelineError::Config(format!("report serialize: {e}")))?;
    let artifacts: [(&str, String); 5] = [
        (ENERGY_CSV, energy_csv(report)),
        (CHARGING_CSV, charging_csv(report)),
        (HEATMAP_CSV, heatmap_csv(report)),
        (SUMMARY_CSV, summary_csv(report)),
        (STUDY_JSON, json + "\n"),
    ];
    let mut paths = Vec::with_capacity(artifacts.len());
    for (name, content) in artifacts {
        let path = dir.join(name);
        write_atomic(&path, content.as_bytes()).map_err(|e| {
            PipelineError::Config(format!("write {}: {e}", path.display()))
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reloads `fleet_heatmap.csv`; together with a pivot this must
/// reproduce the in-memory fleet table exactly.
pub fn read_fleet_heatmap<R: Read>(reader: R) -> Result<Vec<HeatmapRow>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let bad = |msg: String| PipelineError::Config(format!("fleet heatmap: {msg}"));
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != HEATMAP_HEADER {
        return Err(bad(format!("header `{header}`, expected `{HEATMAP_HEADER}`")));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let status = match field(2) {
            "ok" => CellStatus::Ok,
            "infeasible" => CellStatus::Infeasible,
            other => return Err(bad(format!("unknown status `{other}`"))),
        };
        let fleet_size = match field(3) {
            "" => None,
            text => Some(text.parse::<u32>().map_err(|e| bad(format!("fleet_size: {e}")))?),
        };
        rows.push(HeatmapRow {
            distance_mi: field(0).parse().map_err(|e| bad(format!("distance_mi: {e}")))?,
            cluster: field(1).parse().map_err(|e| bad(format!("cluster: {e}")))?,
            status,
            fleet_size,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tiny_report() -> StudyReport {
        StudyReport {
            version: 1,
            config_digest: "deadbeef".into(),
            cells: vec![
                CellReport {
                    distance_mi: 20.0,
                    cluster: 0,
                    reverse_cluster: 1,
                    weight: 0.6,
                    status: CellStatus::Ok,
                    reason: None,
                    fleet_size: Some(3),
                    objective: Some(3.0125),
                    solver: Some(SolverSummary {
                        nodes: 2,
                        lp_iterations: 40,
                        gap: 0.0,
                        proved_optimal: true,
                    }),
                    energy: vec![DirectionEnergy {
                        direction: "A->B".into(),
                        mean_energy_kwh: 15.5,
                        min_energy_kwh: 14.0,
                        max_energy_kwh: 17.25,
                        mean_duration_s: 900.0,
                    }],
                    charging: vec![VertiportCharging {
                        vertiport: "A".into(),
                        charge_sessions: 4,
                        charger_busy_s: 1800.0,
                        charge_energy_kwh: 64.0,
                    }],
                    metrics: Some(Metrics::default()),
                },
                CellReport {
                    distance_mi: 150.0,
                    cluster: 1,
                    reverse_cluster: 0,
                    weight: 0.4,
                    status: CellStatus::Infeasible,
                    reason: Some("needs 9 charge levels".into()),
                    fleet_size: None,
                    objective: None,
                    solver: None,
                    energy: Vec::new(),
                    charging: Vec::new(),
                    metrics: None,
                },
            ],
        }
    }

    #[test]
    fn empty_study_emits_header_only_files() {
        let tmp = tempfile::tempdir().unwrap();
        let report =
            StudyReport { version: 1, config_digest: "empty".into(), cells: Vec::new() };
        let paths = emit_report(&report, tmp.path()).unwrap();
        assert_eq!(paths.len(), 5);
        for path in &paths[..4] {
            let text = fs::read_to_string(path).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines.len(), 1, "{}", path.display());
            assert!(lines[0].contains("distance_mi"), "{}", lines[0]);
        }
        let study: StudyReport =
            serde_json::from_str(&fs::read_to_string(&paths[4]).unwrap()).unwrap();
        assert_eq!(study, report);
    }

    #[test]
    fn heatmap_reload_pivots_back_to_the_fleet_table() {
        let tmp = tempfile::tempdir().unwrap();
        let report = tiny_report();
        emit_report(&report, tmp.path()).unwrap();
        let rows =
            read_fleet_heatmap(fs::File::open(tmp.path().join(HEATMAP_CSV)).unwrap()).unwrap();
        assert_eq!(rows.len(), report.cells.len());
        for (row, cell) in rows.iter().zip(&report.cells) {
            assert_eq!(row.distance_mi, cell.distance_mi);
            assert_eq!(row.cluster, cell.cluster);
            assert_eq!(row.status, cell.status);
            assert_eq!(row.fleet_size, cell.fleet_size);
        }
    }

    #[test]
    fn infeasible_cells_keep_their_rows_with_empty_numerics() {
        let tmp = tempfile::tempdir().unwrap();
        emit_report(&tiny_report(), tmp.path()).unwrap();
        let summary = fs::read_to_string(tmp.path().join(SUMMARY_CSV)).unwrap();
        let infeasible_row =
            summary.lines().find(|l| l.starts_with("150,")).expect("150 mi row");
        assert!(infeasible_row.contains(",infeasible,,"), "{infeasible_row}");
        let charging = fs::read_to_string(tmp.path().join(CHARGING_CSV)).unwrap();
        assert!(!charging.contains("150,"), "{charging}");
    }

    #[test]
    fn emitted_files_are_byte_stable() {
        let tmp = tempfile::tempdir().unwrap();
        let report = tiny_report();
        let first: Vec<Vec<u8>> = emit_report(&report, tmp.path())
            .unwrap()
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        let second: Vec<Vec<u8>> = emit_report(&report, tmp.path())
            .unwrap()
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        assert_eq!(first, second);
    }
}

//! Study configuration: one versioned JSON document describing the whole
//! sweep. Unknown keys are errors so typos fail loudly at load time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::charging::ChargerModel;
use crate::flight::AircraftParams;
use crate::geo::LatLon;
use crate::wind::SynthSpec;

/// Schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Relative weight of each clock hour in the arrival process: commuter
/// peaks around 07:00 and 17:00, a thin overnight floor.
pub const DEFAULT_HOURLY_WEIGHTS: [f64; 24] = [
    0.2, 0.1, 0.1, 0.2, 0.5, 1.5, 3.0, 5.0, 6.0, 4.0, 2.5, 2.0, 2.0, 2.0, 2.5, 3.5, 5.0, 6.0,
    5.0, 3.0, 1.5, 1.0, 0.6, 0.3,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Must equal [`CONFIG_VERSION`].
    pub version: u32,
    pub network: NetworkConfig,
    #[serde(default)]
    pub aircraft: AircraftParams,
    #[serde(default)]
    pub charger: ChargerModel,
    pub demand: DemandConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    pub wind: WindConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    /// Report artifacts land here; the cache defaults to a subdirectory
    /// unless WINDFLEET_CACHE_DIR overrides it.
    pub output_dir: PathBuf,
}

/// Two vertiports on a bearing, swept over a list of separations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub origin_id: String,
    pub destination_id: String,
    pub origin: LatLon,
    /// Compass bearing from the origin to every swept destination.
    pub bearing_deg: f64,
    /// Strictly ascending, all positive.
    pub distances_mi: Vec<f64>,
    pub pads: u32,
    pub chargers: u32,
    pub taxi_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    /// Average daily arrivals per ordered pair.
    pub add: f64,
    pub capacity: u32,
    pub max_wait_s: f64,
    pub seed: u64,
    /// Wind days fed to clustering; the field must cover them plus a
    /// one-day tail for flights past the last midnight.
    pub days: u32,
    #[serde(default = "default_hourly_weights")]
    pub hourly_weights: Vec<f64>,
}

fn default_hourly_weights() -> Vec<f64> {
    DEFAULT_HOURLY_WEIGHTS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub k_levels: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Schedule grid step; must divide the 86400 s day.
    pub step_s: u32,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    #[serde(default)]
    pub node_limit: Option<u64>,
}

fn default_alpha() -> f64 {
    crate::opt::DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    /// Explained-variation target for picking k.
    pub target: f64,
    pub k_max: usize,
    pub force_k: Option<usize>,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            target: crate::cluster::DEFAULT_EXPLAINED_VARIATION_TARGET,
            k_max: 6,
            force_k: None,
            seed: 11,
        }
    }
}

/// Exactly one of `csv` and `synth` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig {
    /// Hourly wind observations; resolved against the config file's
    /// directory when loaded from disk.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    #[serde(default = "default_wind_seed")]
    pub seed: u64,
}

fn default_wind_seed() -> u64 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub turnaround_s: f64,
    pub allow_substitution: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { turnaround_s: 300.0, allow_substitution: true }
    }
}

impl StudyConfig {
    /// Parses and validates; referenced files must already exist, so a
    /// bad path fails here rather than mid-run. Relative paths in the
    /// document are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut config: StudyConfig = serde_json::from_str(text)
            .map_err(|e| PipelineError::Config(format!("config parse: {e}")))?;
        if config.version != CONFIG_VERSION {
            return Err(PipelineError::Config(format!(
                "config version {} unsupported; this build reads version {CONFIG_VERSION}",
                config.version
            )));
        }
        if let Some(csv) = &config.wind.csv {
            let resolved = if csv.is_absolute() { csv.clone() } else { base_dir.join(csv) };
            if !resolved.is_file() {
                return Err(PipelineError::Config(format!(
                    "wind csv {} does not exist",
                    resolved.display()
                )));
            }
            config.wind.csv = Some(resolved);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base_dir.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("config {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        let net = &self.network;
        for id in [&net.origin_id, &net.destination_id] {
            if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == ',' || c == '=') {
                return bad(format!("vertiport id `{id}` is empty or contains ,/=/whitespace"));
            }
        }
        if net.origin_id == net.destination_id {
            return bad("origin and destination ids must differ".into());
        }
        if !net.origin.lat_deg.is_finite()
            || !net.origin.lon_deg.is_finite()
            || net.origin.lat_deg.abs() > 90.0
            || net.origin.lon_deg.abs() > 180.0
        {
            return bad(format!("origin {:?} is not a valid coordinate", net.origin));
        }
        if !net.bearing_deg.is_finite() {
            return bad("bearing must be finite".into());
        }
        if net.distances_mi.is_empty() {
            return bad("distances_mi must list at least one distance".into());
        }
        for pair in net.distances_mi.windows(2) {
            if pair[1] <= pair[0] {
                return bad(format!(
                    "distances_mi must be strictly ascending, found {} after {}",
                    pair[1], pair[0]
                ));
            }
        }
        if net.distances_mi.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return bad("distances_mi must all be positive and finite".into());
        }
        if net.pads == 0 || net.chargers == 0 {
            return bad("each vertiport needs at least one pad and one charger".into());
        }
        if !(net.taxi_s.is_finite() && net.taxi_s >= 0.0) {
            return bad(format!("taxi_s {} must be nonnegative", net.taxi_s));
        }

        self.aircraft.validate().map_err(|e| PipelineError::Config(format!("aircraft: {e}")))?;
        self.charger.validate().map_err(|e| PipelineError::Config(format!("charger: {e}")))?;

        let dem = &self.demand;
        if !(dem.add.is_finite() && dem.add >= 0.0) {
            return bad(format!("demand.add {} must be nonnegative", dem.add));
        }
        if dem.capacity == 0 || dem.capacity > self.aircraft.seats {
            return bad(format!(
                "demand.capacity {} must be in 1..={} seats",
                dem.capacity, self.aircraft.seats
            ));
        }
        if !(dem.max_wait_s.is_finite() && dem.max_wait_s > 0.0) {
            return bad(format!("demand.max_wait_s {} must be positive", dem.max_wait_s));
        }
        if dem.days == 0 {
            return bad("demand.days must be at least 1".into());
        }
        if dem.hourly_weights.len() != 24 {
            return bad(format!(
                "demand.hourly_weights lists {} values, expected 24",
                dem.hourly_weights.len()
            ));
        }

        let opt = &self.optimizer;
        if opt.k_levels == 0 {
            return bad("optimizer.k_levels must be at least 1".into());
        }
        if !(opt.alpha.is_finite() && opt.alpha > 0.0) {
            return bad(format!("optimizer.alpha {} must be positive", opt.alpha));
        }
        if opt.step_s == 0 || 86_400 % opt.step_s != 0 {
            return bad(format!("optimizer.step_s {} must divide 86400", opt.step_s));
        }

        let clu = &self.clustering;
        if !(clu.target > 0.0 && clu.target <= 1.0) {
            return bad(format!("clustering.target {} must lie in (0, 1]", clu.target));
        }
        if clu.k_max == 0 {
            return bad("clustering.k_max must be at least 1".into());
        }
        if let Some(k) = clu.force_k {
            if k == 0 || k > clu.k_max {
                return bad(format!("clustering.force_k {k} must lie in 1..=k_max"));
            }
        }

        match (&self.wind.csv, &self.wind.synth) {
            (Some(_), Some(_)) => bad("wind: set csv or synth, not both".into()),
            (None, None) => bad("wind: set one of csv or synth".into()),
            _ => Ok(()),
        }?;

        if !(self.simulation.turnaround_s.is_finite() && self.simulation.turnaround_s >= 0.0) {
            return bad(format!(
                "simulation.turnaround_s {} must be nonnegative",
                self.simulation.turnaround_s
            ));
        }
        Ok(())
    }

    /// Steps per schedulable day under this grid.
    pub fn day_steps(&self) -> u32 {
        86_400 / self.optimizer.step_s
    }

    /// Ordered pairs the demand process serves.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let a = self.network.origin_id.clone();
        let b = self.network.destination_id.clone();
        vec![(a.clone(), b.clone()), (b, a)]
    }

    /// Hours of wind the study needs: every clustered day plus a tail
    /// day so flights departing late on the last date stay covered.
    pub fn needed_wind_hours(&self) -> u32 {
        self.demand.days * 24 + 24
    }

    /// Desk-scale corridor study: two vertiports swept over three
    /// separations with synthetic coastal wind, sized to finish on a
    /// laptop in minutes.
    pub fn desk_scale() -> Self {
        let days = 90;
        Self {
            version: CONFIG_VERSION,
            network: NetworkConfig {
                origin_id: "A".into(),
                destination_id: "B".into(),
                origin: LatLon::new(36.587, -121.843),
                bearing_deg: 13.0,
                distances_mi: vec![20.0, 80.0, 150.0],
                pads: 6,
                chargers: 3,
                taxi_s: 30.0,
            },
            aircraft: AircraftParams::default(),
            charger: ChargerModel::default(),
            demand: DemandConfig {
                add: 100.0,
                capacity: 4,
                max_wait_s: 300.0,
                seed: 7,
                days,
                hourly_weights: default_hourly_weights(),
            },
            optimizer: OptimizerConfig {
                k_levels: 8,
                alpha: default_alpha(),
                step_s: 300,
                time_limit_s: None,
                node_limit: None,
            },
            clustering: ClusteringConfig::default(),
            wind: WindConfig {
                csv: None,
                synth: Some(SynthSpec::default_desk(days * 24 + 24)),
                seed: 3,
            },
            simulation: SimulationConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

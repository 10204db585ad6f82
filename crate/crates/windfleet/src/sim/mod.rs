//! Discrete-event simulation of one operating day over a vertiport
//! network.
//!
//! The engine replays an optimized schedule against continuous flight
//! physics and ground resources. Flight and charge directives fire at
//! the start of their grid step; each directive is matched to a ready
//! aircraft at its location by exact state-of-charge level, with
//! higher-level substitution as a configurable fallback. Directives
//! with no candidate wait and are retried as aircraft become ready, so
//! a late aircraft delays dependent work rather than failing the run;
//! anything still unmatched at the horizon is logged as a matching
//! failure. FATO pads are unit-capacity resources granted FIFO with
//! landings ahead of takeoffs, and charger plugs are counted resources
//! with FIFO queues. Parking pads are treated as ample aprons and only
//! steer placement preferences.
//!
//! Execution is single-threaded over a (time, priority, sequence)
//! event queue, so a run is a pure function of its inputs: two runs
//! with identical inputs produce byte-identical event logs.

mod event;
mod layout;
mod metrics;

pub use event::{Event, EventKind, EventLog};
pub use layout::{
    read_layouts_json, write_layouts_json, LayoutNode, NodeClass, TaxiLink, VertiportLayout,
};
pub use metrics::{compute_metrics, Metrics, MetricsScope, PassengerMetrics, VertiportMetrics};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charging::{ChargeError, ChargerModel};
use crate::demand::{aggregate_requests, ArrivalStream, DemandError};
use crate::flight::{
    build_profile, hover_power, simulate_flight, AircraftParams, FlightError, FlightProfile,
    FlightResult, Route,
};
use crate::opt::{ChargeEntry, FlightEntry, IdleEntry};
use crate::soc::{SocError, SocLadder};
use crate::timegrid::TimeGrid;
use crate::units::AIR_DENSITY_KGM3;
use crate::wind::WindSource;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("layout `{id}`: {reason}")]
    Layout { id: String, reason: String },
    #[error("layout JSON: {0}")]
    Json(String),
    #[error("bad simulation input: {0}")]
    BadConfig(String),
    #[error("unknown vertiport `{id}`")]
    UnknownVertiport { id: String },
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Charge(#[from] ChargeError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Soc(#[from] SocError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Everything a run needs beyond the network, schedule, and wind.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: TimeGrid,
    pub aircraft: AircraftParams,
    pub charger: ChargerModel,
    pub ladder: SocLadder,
    /// Calendar day being simulated; anchors wind lookups.
    pub day: NaiveDate,
    /// Ground time between disembark and the aircraft becoming
    /// dispatchable again, seconds.
    pub turnaround_s: f64,
    /// Let a higher-level aircraft serve a directive when no exact
    /// match exists.
    pub allow_substitution: bool,
    /// Passengers pooled into one departure.
    pub boarding_capacity: u32,
    /// Longest a boarded group waits for more passengers, seconds.
    pub max_wait_s: f64,
}

impl SimConfig {
    pub fn new(grid: TimeGrid, aircraft: AircraftParams, ladder: SocLadder, day: NaiveDate) -> Self {
        let boarding_capacity = aircraft.seats;
        Self {
            grid,
            aircraft,
            charger: ChargerModel::default(),
            ladder,
            day,
            turnaround_s: 300.0,
            allow_substitution: true,
            boarding_capacity,
            max_wait_s: 300.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.aircraft.validate()?;
        self.charger.validate()?;
        if !(self.turnaround_s >= 0.0 && self.turnaround_s.is_finite()) {
            return Err(SimError::BadConfig(format!(
                "turnaround_s {} must be finite and nonnegative",
                self.turnaround_s
            )));
        }
        if self.boarding_capacity == 0 || self.boarding_capacity > self.aircraft.seats {
            return Err(SimError::BadConfig(format!(
                "boarding_capacity {} must be in 1..={}",
                self.boarding_capacity, self.aircraft.seats
            )));
        }
        if !(self.max_wait_s > 0.0 && self.max_wait_s.is_finite()) {
            return Err(SimError::BadConfig(format!(
                "max_wait_s {} must be finite and positive",
                self.max_wait_s
            )));
        }
        Ok(())
    }

    fn day_start(&self) -> DateTime<Utc> {
        self.day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationalState {
    Idle,
    /// Ready and waiting for schedule-driven work.
    Holding,
    Taxiing,
    Flying,
    Charging,
    Turnaround,
}

/// Snapshot of one aircraft, as seeded at midnight or observed later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub name: String,
    pub vertiport: String,
    pub soc: f64,
    pub state: OperationalState,
    /// Set while the aircraft is dispatchable.
    pub ready_since_us: Option<i64>,
}

/// One dispatchable aircraft as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchCandidate {
    /// Caller-side handle, echoed back through the result.
    pub index: usize,
    pub soc_level: u32,
    pub ready_since_us: i64,
    /// Stable identity for the final tie-break.
    pub id: u32,
}

/// Picks the aircraft for a directive needing `required_level`.
///
/// Exact-level candidates win, longest idle first, then lowest id.
/// With `allow_higher`, a higher-level aircraft substitutes only when
/// no exact match exists: closest level first, then the same ties.
/// Returns the position within `candidates` and whether the pick was
/// a substitution.
pub fn match_aircraft(
    candidates: &[MatchCandidate],
    required_level: u32,
    allow_higher: bool,
) -> Option<(usize, bool)> {
    let best = |pred: &dyn Fn(&MatchCandidate) -> bool| {
        candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| pred(c))
            .min_by_key(|(_, c)| (c.soc_level, c.ready_since_us, c.id))
            .map(|(pos, _)| pos)
    };
    if let Some(pos) = best(&|c| c.soc_level == required_level) {
        return Some((pos, false));
    }
    if allow_higher {
        if let Some(pos) = best(&|c| c.soc_level > required_level) {
            return Some((pos, true));
        }
    }
    None
}

/// Fleet state at midnight, in aircraft-creation order: aircraft
/// finishing overnight charges first (sorted by vertiport, then the
/// charge's level pair), then idle aircraft (sorted by vertiport,
/// then level). Names are assigned in this order, so any consumer
/// replaying the day sees the same identities the engine uses.
pub fn initial_fleet_states(
    config: &SimConfig,
    idle: &[IdleEntry],
    charges: &[ChargeEntry],
) -> Result<Vec<AircraftState>, SimError> {
    let mut states = Vec::new();
    let mut overnight: Vec<&ChargeEntry> = charges.iter().filter(|c| c.t == 0).collect();
    overnight.sort_by(|a, b| {
        (&a.vertiport, a.from_level, a.to_level).cmp(&(&b.vertiport, b.from_level, b.to_level))
    });
    for entry in overnight {
        for _ in 0..entry.count {
            states.push(AircraftState {
                name: String::new(),
                vertiport: entry.vertiport.clone(),
                soc: config.ladder.fraction(entry.from_level)?,
                state: OperationalState::Charging,
                ready_since_us: None,
            });
        }
    }
    let mut parked: Vec<&IdleEntry> = idle.iter().collect();
    parked.sort_by(|a, b| (&a.vertiport, a.soc_level).cmp(&(&b.vertiport, b.soc_level)));
    for entry in parked {
        for _ in 0..entry.count {
            states.push(AircraftState {
                name: String::new(),
                vertiport: entry.vertiport.clone(),
                soc: config.ladder.fraction(entry.soc_level)?,
                state: OperationalState::Idle,
                ready_since_us: Some(0),
            });
        }
    }
    for (index, state) in states.iter_mut().enumerate() {
        state.name = format!("AC{:03}", index + 1);
    }
    Ok(states)
}

/// Runs one day. Returns the ordered event log and metrics replayed
/// from it.
#[allow(clippy::too_many_arguments)]
pub fn run<W: WindSource + ?Sized>(
    config: &SimConfig,
    layouts: &[VertiportLayout],
    fleet: &[IdleEntry],
    flights: &[FlightEntry],
    charges: &[ChargeEntry],
    wind: &W,
    arrivals: &ArrivalStream,
) -> Result<(EventLog, Metrics), SimError> {
    let mut engine = Engine::new(config, layouts, fleet, flights, charges, wind, arrivals)?;
    engine.run_to_horizon()?;
    Ok(engine.finish())
}

const CLASS_LANDING: u8 = 0;
const CLASS_TAKEOFF: u8 = 1;
const CLASS_CHARGE: u8 = 2;
const CLASS_GROUND: u8 = 3;

fn us_of(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

fn s_of(us: i64) -> f64 {
    us as f64 / 1e6
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    FireDirective(usize),
    TaxiOutDone(usize),
    LiftoffDone(usize),
    FixArrival(usize),
    Touchdown(usize),
    TaxiInDone(usize),
    TurnaroundDone(usize),
    ChargeTaxiDone(usize),
    ChargeDone(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    time_us: i64,
    class: u8,
    seq: u64,
}

#[derive(Debug, Clone)]
struct Pax {
    id: String,
    arrival_us: i64,
}

#[derive(Debug, Clone)]
enum DirKind {
    Flight { origin: String, destination: String, soc_level: u32, manifest: Vec<Pax> },
    Charge { vertiport: String, from_level: u32, to_level: u32 },
}

#[derive(Debug, Clone)]
struct Directive {
    scheduled_t: u32,
    fire_us: i64,
    kind: DirKind,
}

impl Directive {
    fn vertiport(&self) -> &str {
        match &self.kind {
            DirKind::Flight { origin, .. } => origin,
            DirKind::Charge { vertiport, .. } => vertiport,
        }
    }
}

#[derive(Debug)]
struct FlightJob {
    origin: String,
    destination: String,
    scheduled_t: u32,
    scheduled_us: i64,
    dispatch_us: i64,
    substituted: bool,
    manifest: Vec<Pax>,
    plan: FlightResult,
    /// Static hover power for time spent holding at the arrival fix, kW.
    hover_kw: f64,
    fato: String,
    fato_slot: usize,
    liftoff_us: i64,
    fix_us: i64,
    land_grant_us: i64,
    hold_energy_kwh: f64,
}

#[derive(Debug)]
struct ChargeJob {
    vertiport: String,
    scheduled_t: u32,
    scheduled_us: i64,
    dispatch_us: i64,
    substituted: bool,
    target_level: u32,
    target_fraction: f64,
    slot: usize,
    node: String,
    start_us: i64,
    from_fraction: f64,
}

#[derive(Debug)]
struct Aircraft {
    name: String,
    vertiport: String,
    node: String,
    soc: f64,
    state: OperationalState,
    ready_since_us: Option<i64>,
    flight: Option<FlightJob>,
    charge: Option<ChargeJob>,
}

#[derive(Debug, Clone)]
struct PadSpot {
    node: String,
    is_charger: bool,
    parked: u32,
}

#[derive(Debug)]
struct Port {
    fatos: Vec<String>,
    fato_free: Vec<bool>,
    land_queue: VecDeque<(u64, usize)>,
    takeoff_queue: VecDeque<(u64, usize)>,
    pads: Vec<PadSpot>,
    chargers: Vec<String>,
    charger_free: Vec<bool>,
    charger_queue: VecDeque<(u64, usize)>,
    taxi: BTreeMap<(String, String), f64>,
}

impl Port {
    fn from_layout(layout: &VertiportLayout) -> Self {
        let fatos: Vec<String> = layout
            .nodes_of_class(NodeClass::Fato)
            .map(|n| n.id.clone())
            .collect();
        let pads: Vec<PadSpot> = layout
            .nodes
            .iter()
            .filter(|n| n.class.is_pad())
            .map(|n| PadSpot {
                node: n.id.clone(),
                is_charger: n.class == NodeClass::PadCharger,
                parked: 0,
            })
            .collect();
        let chargers: Vec<String> = layout
            .nodes_of_class(NodeClass::PadCharger)
            .map(|n| n.id.clone())
            .collect();
        Self {
            fato_free: vec![true; fatos.len()],
            charger_free: vec![true; chargers.len()],
            fatos,
            pads,
            chargers,
            land_queue: VecDeque::new(),
            takeoff_queue: VecDeque::new(),
            charger_queue: VecDeque::new(),
            taxi: layout.taxi_times(),
        }
    }

    fn taxi_s(&self, from: &str, to: &str) -> f64 {
        self.taxi.get(&(from.to_string(), to.to_string())).copied().unwrap_or(0.0)
    }

    /// Parking preference only; pads never reject an aircraft.
    fn park(&mut self) -> String {
        let spot = self
            .pads
            .iter_mut()
            .min_by_key(|p| (p.is_charger, p.parked, p.node.clone()))
            .expect("layouts have at least one pad");
        spot.parked += 1;
        spot.node.clone()
    }

    fn unpark(&mut self, node: &str) {
        if let Some(spot) = self.pads.iter_mut().find(|p| p.node == node) {
            spot.parked = spot.parked.saturating_sub(1);
        }
    }

    fn free_fato(&self) -> Option<usize> {
        self.fato_free.iter().position(|&free| free)
    }

    fn free_charger(&self) -> Option<usize> {
        self.charger_free.iter().position(|&free| free)
    }
}

struct Engine<'a, W: WindSource + ?Sized> {
    config: &'a SimConfig,
    wind: &'a W,
    day0: DateTime<Utc>,
    ports: BTreeMap<String, Port>,
    profiles: BTreeMap<(String, String), FlightProfile>,
    directives: Vec<Directive>,
    /// Fired directives waiting for a candidate, in fire order.
    pending: Vec<usize>,
    aircraft: Vec<Aircraft>,
    queue: BinaryHeap<Reverse<(QueueKey, Action)>>,
    events: Vec<Event>,
    seq: u64,
    horizon_us: i64,
}

impl<'a, W: WindSource + ?Sized> Engine<'a, W> {
    fn new(
        config: &'a SimConfig,
        layouts: &[VertiportLayout],
        fleet: &[IdleEntry],
        flights: &[FlightEntry],
        charges: &[ChargeEntry],
        wind: &'a W,
        arrivals: &ArrivalStream,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let grid = config.grid;
        let horizon = grid.horizon();

        let mut ports = BTreeMap::new();
        let mut positions = BTreeMap::new();
        for layout in layouts {
            layout.validate()?;
            if ports.contains_key(&layout.id) {
                return Err(SimError::Layout {
                    id: layout.id.clone(),
                    reason: "duplicate vertiport id".into(),
                });
            }
            positions.insert(layout.id.clone(), layout.position);
            ports.insert(layout.id.clone(), Port::from_layout(layout));
        }
        let known = |id: &str| -> Result<(), SimError> {
            if positions.contains_key(id) {
                Ok(())
            } else {
                Err(SimError::UnknownVertiport { id: id.to_string() })
            }
        };

        let mut engine = Self {
            config,
            wind,
            day0: config.day_start(),
            ports,
            profiles: BTreeMap::new(),
            directives: Vec::new(),
            pending: Vec::new(),
            aircraft: Vec::new(),
            queue: BinaryHeap::new(),
            events: Vec::new(),
            seq: 0,
            horizon_us: us_of(grid.instant_s(horizon)),
        };

        // Passenger arrivals and the trip requests they pool into. Ids
        // index each pair's arrival list, so request manifests bind to
        // the same identities the arrival events carry.
        for ((origin, destination), instants) in &arrivals.arrivals {
            known(origin)?;
            known(destination)?;
            for (index, instant) in instants.iter().enumerate() {
                let id = pax_id(origin, destination, index);
                engine.events.push(Event {
                    time_us: us_of(*instant),
                    entity: id,
                    kind: EventKind::Arrival,
                    payload: format!("origin={origin} destination={destination}"),
                });
            }
        }
        let requests =
            aggregate_requests(arrivals, config.boarding_capacity, config.max_wait_s, grid)?;
        let mut cells: BTreeMap<(String, String, u32), VecDeque<Vec<Pax>>> = BTreeMap::new();
        let mut assigned: BTreeMap<(String, String), usize> = BTreeMap::new();
        for request in requests {
            let pair = (request.origin.clone(), request.destination.clone());
            let next = assigned.entry(pair.clone()).or_insert(0);
            let manifest: Vec<Pax> = request
                .passengers
                .iter()
                .enumerate()
                .map(|(offset, instant)| Pax {
                    id: pax_id(&pair.0, &pair.1, *next + offset),
                    arrival_us: us_of(*instant),
                })
                .collect();
            *next += manifest.len();
            cells
                .entry((pair.0, pair.1, request.step))
                .or_default()
                .push_back(manifest);
        }

        // Flight directives claim pooled requests cell by cell; extras
        // fly empty as repositioning legs.
        let mut flight_units: Vec<&FlightEntry> = Vec::new();
        for entry in flights {
            known(&entry.origin)?;
            known(&entry.destination)?;
            if entry.origin == entry.destination {
                return Err(SimError::BadConfig(format!(
                    "flight at step {} departs {} for itself",
                    entry.t, entry.origin
                )));
            }
            if entry.t == 0 || entry.t >= horizon {
                return Err(SimError::BadConfig(format!(
                    "flight step {} outside 1..{horizon}",
                    entry.t
                )));
            }
            if entry.soc_level == 0 || entry.soc_level > config.ladder.top() {
                return Err(SimError::BadConfig(format!(
                    "flight level {} outside the ladder",
                    entry.soc_level
                )));
            }
            for _ in 0..entry.count {
                flight_units.push(entry);
            }
        }
        flight_units.sort_by(|a, b| {
            (a.t, &a.origin, &a.destination, a.soc_level)
                .cmp(&(b.t, &b.origin, &b.destination, b.soc_level))
        });
        for entry in flight_units {
            let pair = (entry.origin.clone(), entry.destination.clone());
            if !engine.profiles.contains_key(&pair) {
                let route = Route::between(positions[&entry.origin], positions[&entry.destination]);
                engine
                    .profiles
                    .insert(pair.clone(), build_profile(route, &config.aircraft)?);
            }
            let manifest = cells
                .get_mut(&(pair.0.clone(), pair.1.clone(), entry.t))
                .and_then(|queue| queue.pop_front())
                .unwrap_or_default();
            engine.directives.push(Directive {
                scheduled_t: entry.t,
                fire_us: us_of(grid.instant_s(entry.t)),
                kind: DirKind::Flight {
                    origin: pair.0,
                    destination: pair.1,
                    soc_level: entry.soc_level,
                    manifest,
                },
            });
        }

        let mut day_charges: Vec<&ChargeEntry> = Vec::new();
        for entry in charges {
            known(&entry.vertiport)?;
            if entry.from_level >= entry.to_level || entry.to_level > config.ladder.top() {
                return Err(SimError::BadConfig(format!(
                    "charge {}->{} is not an ascending ladder interval",
                    entry.from_level, entry.to_level
                )));
            }
            if entry.t >= horizon {
                return Err(SimError::BadConfig(format!(
                    "charge step {} outside 0..{horizon}",
                    entry.t
                )));
            }
            if entry.t > 0 {
                for _ in 0..entry.count {
                    day_charges.push(entry);
                }
            }
        }
        day_charges.sort_by(|a, b| {
            (a.t, &a.vertiport, a.from_level, a.to_level)
                .cmp(&(b.t, &b.vertiport, b.from_level, b.to_level))
        });
        for entry in day_charges {
            engine.directives.push(Directive {
                scheduled_t: entry.t,
                fire_us: us_of(grid.instant_s(entry.t)),
                kind: DirKind::Charge {
                    vertiport: entry.vertiport.clone(),
                    from_level: entry.from_level,
                    to_level: entry.to_level,
                },
            });
        }
        for index in 0..engine.directives.len() {
            let class = match engine.directives[index].kind {
                DirKind::Flight { .. } => CLASS_TAKEOFF,
                DirKind::Charge { .. } => CLASS_CHARGE,
            };
            engine.push(engine.directives[index].fire_us, class, Action::FireDirective(index));
        }

        // Fleet at midnight: overnight chargers first, then idles, in
        // the same order initial_fleet_states documents.
        for entry in fleet {
            known(&entry.vertiport)?;
            if entry.soc_level > config.ladder.top() {
                return Err(SimError::BadConfig(format!(
                    "idle level {} outside the ladder",
                    entry.soc_level
                )));
            }
        }
        let seeds = initial_fleet_states(config, fleet, charges)?;
        let mut overnight_targets: Vec<u32> = Vec::new();
        let mut expanded: Vec<&ChargeEntry> = charges.iter().filter(|c| c.t == 0).collect();
        expanded.sort_by(|a, b| {
            (&a.vertiport, a.from_level, a.to_level).cmp(&(&b.vertiport, b.from_level, b.to_level))
        });
        for entry in &expanded {
            for _ in 0..entry.count {
                overnight_targets.push(entry.to_level);
            }
        }
        for (index, seed) in seeds.iter().enumerate() {
            let node = engine
                .ports
                .get_mut(&seed.vertiport)
                .expect("seed vertiports validated")
                .park();
            engine.aircraft.push(Aircraft {
                name: seed.name.clone(),
                vertiport: seed.vertiport.clone(),
                node,
                soc: seed.soc,
                state: seed.state,
                ready_since_us: seed.ready_since_us,
                flight: None,
                charge: None,
            });
            if seed.state == OperationalState::Charging {
                let target_level = overnight_targets[index];
                engine.aircraft[index].charge = Some(ChargeJob {
                    vertiport: seed.vertiport.clone(),
                    scheduled_t: 0,
                    scheduled_us: 0,
                    dispatch_us: 0,
                    substituted: false,
                    target_level,
                    target_fraction: config.ladder.fraction(target_level)?,
                    slot: usize::MAX,
                    node: String::new(),
                    start_us: 0,
                    from_fraction: seed.soc,
                });
            }
        }
        // Overnight aircraft are already plugged at midnight; they
        // claim a charger slot directly, queueing if the plan exceeds
        // the installed plugs.
        for index in 0..engine.aircraft.len() {
            if engine.aircraft[index].charge.is_some() {
                engine.request_charger(index, 0)?;
            }
        }
        Ok(engine)
    }

    fn push(&mut self, time_us: i64, class: u8, action: Action) {
        self.seq += 1;
        self.queue.push(Reverse((QueueKey { time_us, class, seq: self.seq }, action)));
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn log(&mut self, time_us: i64, entity: &str, kind: EventKind, payload: String) {
        self.events.push(Event { time_us, entity: entity.to_string(), kind, payload });
    }

    fn at(&self, time_us: i64) -> DateTime<Utc> {
        self.day0 + chrono::Duration::microseconds(time_us)
    }

    fn run_to_horizon(&mut self) -> Result<(), SimError> {
        loop {
            match self.queue.peek() {
                Some(Reverse((key, _))) if key.time_us <= self.horizon_us => {}
                _ => break,
            }
            let Reverse((key, action)) = self.queue.pop().expect("peeked");
            let now = key.time_us;
            match action {
                Action::FireDirective(index) => {
                    if !self.try_dispatch(index, now)? {
                        self.pending.push(index);
                    }
                }
                Action::TaxiOutDone(ac) => self.taxi_out_done(ac, now)?,
                Action::LiftoffDone(ac) => self.liftoff_done(ac, now)?,
                Action::FixArrival(ac) => self.fix_arrival(ac, now)?,
                Action::Touchdown(ac) => self.touchdown(ac, now)?,
                Action::TaxiInDone(ac) => self.taxi_in_done(ac, now)?,
                Action::TurnaroundDone(ac) => self.aircraft_ready(ac, now)?,
                Action::ChargeTaxiDone(ac) => self.request_charger(ac, now)?,
                Action::ChargeDone(ac) => self.charge_done(ac, now)?,
            }
        }
        self.truncate();
        Ok(())
    }

    /// Truncation at the horizon: open flights get a marker, unmatched
    /// directives a failure event.
    fn truncate(&mut self) {
        let horizon = self.horizon_us;
        for index in 0..self.aircraft.len() {
            if self.aircraft[index].state != OperationalState::Flying {
                continue;
            }
            let (name, payload) = {
                let ac = &self.aircraft[index];
                let job = ac.flight.as_ref().expect("flying aircraft has a job");
                (
                    ac.name.clone(),
                    format!("origin={} destination={}", job.origin, job.destination),
                )
            };
            self.log(horizon, &name, EventKind::Truncated, payload);
        }
        let pending = std::mem::take(&mut self.pending);
        for index in pending {
            let payload = match &self.directives[index].kind {
                DirKind::Flight { origin, destination, soc_level, .. } => format!(
                    "kind=flight origin={origin} destination={destination} level={soc_level} \
                     t={} reason=no_candidate",
                    self.directives[index].scheduled_t
                ),
                DirKind::Charge { vertiport, from_level, to_level } => format!(
                    "kind=charge vertiport={vertiport} from_level={from_level} \
                     to_level={to_level} t={} reason=no_candidate",
                    self.directives[index].scheduled_t
                ),
            };
            self.log(
                horizon,
                &format!("directive:{index:04}"),
                EventKind::MatchingFailure,
                payload,
            );
        }
    }

    fn finish(self) -> (EventLog, Metrics) {
        let scope = MetricsScope {
            fleet_size: self.aircraft.len() as u32,
            horizon_s: self.config.grid.instant_s(self.config.grid.horizon()),
            seats: self.config.aircraft.seats,
        };
        let log = EventLog::from_unordered(self.events);
        let metrics = compute_metrics(&log, &scope);
        (log, metrics)
    }

    fn candidates_at(&self, vertiport: &str) -> Vec<MatchCandidate> {
        self.aircraft
            .iter()
            .enumerate()
            .filter(|(_, ac)| {
                ac.vertiport == vertiport
                    && matches!(ac.state, OperationalState::Idle | OperationalState::Holding)
            })
            .map(|(index, ac)| MatchCandidate {
                index,
                soc_level: self.config.ladder.level_floor(ac.soc),
                ready_since_us: ac.ready_since_us.unwrap_or(0),
                id: index as u32,
            })
            .collect()
    }

    /// Logs the retroactive hold bracket and marks the aircraft busy.
    fn commit_dispatch(&mut self, ac: usize, now: i64) {
        let (name, vertiport, ready) = {
            let a = &self.aircraft[ac];
            (a.name.clone(), a.vertiport.clone(), a.ready_since_us)
        };
        if let Some(ready_us) = ready {
            if ready_us < now {
                self.log(ready_us, &name, EventKind::HoldStart, format!("vertiport={vertiport}"));
                self.log(now, &name, EventKind::HoldEnd, format!("vertiport={vertiport}"));
            }
        }
        let a = &mut self.aircraft[ac];
        a.ready_since_us = None;
        a.state = OperationalState::Taxiing;
    }

    fn try_dispatch(&mut self, index: usize, now: i64) -> Result<bool, SimError> {
        match &self.directives[index].kind {
            DirKind::Flight { .. } => self.try_dispatch_flight(index, now),
            DirKind::Charge { .. } => self.try_dispatch_charge(index, now),
        }
    }

    fn try_dispatch_flight(&mut self, index: usize, now: i64) -> Result<bool, SimError> {
        let (origin, destination, soc_level, scheduled_t, scheduled_us) = {
            let directive = &self.directives[index];
            let DirKind::Flight { origin, destination, soc_level, .. } = &directive.kind else {
                unreachable!("dispatch routed by kind");
            };
            (
                origin.clone(),
                destination.clone(),
                *soc_level,
                directive.scheduled_t,
                directive.fire_us,
            )
        };
        let candidates = self.candidates_at(&origin);
        let Some((pos, substituted)) =
            match_aircraft(&candidates, soc_level, self.config.allow_substitution)
        else {
            return Ok(false);
        };
        let ac = candidates[pos].index;

        // Feasibility probe at the expected liftoff; a flight the wind
        // forbids is dropped here, before anyone boards.
        let (node, name) = (self.aircraft[ac].node.clone(), self.aircraft[ac].name.clone());
        let port = &self.ports[&origin];
        let stage_fato = port.fatos[0].clone();
        let taxi_out_s = port.taxi_s(&node, &stage_fato);
        let manifest_len = match &self.directives[index].kind {
            DirKind::Flight { manifest, .. } => manifest.len(),
            DirKind::Charge { .. } => unreachable!(),
        };
        let profile = &self.profiles[&(origin.clone(), destination.clone())];
        let liftoff_estimate = now + us_of(taxi_out_s);
        let plan = match simulate_flight(
            profile,
            &self.config.aircraft,
            self.config.ladder,
            self.wind,
            self.at(liftoff_estimate),
            manifest_len as u32,
        ) {
            Ok(plan) => plan,
            Err(
                err @ (FlightError::FlightInfeasible { .. } | FlightError::CrabInfeasible { .. }),
            ) => {
                self.log(
                    now,
                    &format!("directive:{index:04}"),
                    EventKind::MatchingFailure,
                    format!(
                        "kind=flight origin={origin} destination={destination} level={soc_level} \
                         t={scheduled_t} reason=flight_infeasible detail={}",
                        err.to_string().replace(' ', "_")
                    ),
                );
                return Ok(true);
            }
            Err(err) => return Err(err.into()),
        };
        let mass =
            self.config.aircraft.total_mass_kg(manifest_len as u32)?;
        let hover_kw =
            hover_power(&self.config.aircraft, mass, 0.0, AIR_DENSITY_KGM3)? / 1e3;

        self.commit_dispatch(ac, now);
        let manifest = match &mut self.directives[index].kind {
            DirKind::Flight { manifest, .. } => std::mem::take(manifest),
            DirKind::Charge { .. } => unreachable!(),
        };
        for pax in &manifest {
            self.log(
                now,
                &pax.id.clone(),
                EventKind::Board,
                format!(
                    "aircraft={name} origin={origin} destination={destination} wait_s={}",
                    s_of(now - pax.arrival_us)
                ),
            );
        }
        self.log(
            now,
            &name,
            EventKind::PhaseChange,
            format!(
                "phase=taxi_out from={node} to={stage_fato} duration_s={taxi_out_s} energy_kwh=0"
            ),
        );
        self.ports.get_mut(&origin).expect("origin known").unpark(&node);
        let aircraft = &mut self.aircraft[ac];
        aircraft.node = stage_fato.clone();
        aircraft.flight = Some(FlightJob {
            origin,
            destination,
            scheduled_t,
            scheduled_us,
            dispatch_us: now,
            substituted,
            manifest,
            plan,
            hover_kw,
            fato: stage_fato,
            fato_slot: usize::MAX,
            liftoff_us: 0,
            fix_us: 0,
            land_grant_us: 0,
            hold_energy_kwh: 0.0,
        });
        self.push(now + us_of(taxi_out_s), CLASS_GROUND, Action::TaxiOutDone(ac));
        Ok(true)
    }

    fn try_dispatch_charge(&mut self, index: usize, now: i64) -> Result<bool, SimError> {
        let (vertiport, from_level, to_level, scheduled_t, scheduled_us) = {
            let directive = &self.directives[index];
            let DirKind::Charge { vertiport, from_level, to_level } = &directive.kind else {
                unreachable!("dispatch routed by kind");
            };
            (vertiport.clone(), *from_level, *to_level, directive.scheduled_t, directive.fire_us)
        };
        let candidates = self.candidates_at(&vertiport);
        // Continuous physics lets levels drift off the plan, so after
        // the exact match the lowest-level ready aircraft substitutes:
        // the neediest battery takes the plug. One already at or above
        // the target passes through with a zero-duration charge.
        let exact = match_aircraft(&candidates, from_level, false);
        let picked = exact.or_else(|| {
            if !self.config.allow_substitution {
                return None;
            }
            candidates
                .iter()
                .enumerate()
                .min_by_key(|(_, c)| (c.soc_level, c.ready_since_us, c.id))
                .map(|(pos, _)| (pos, true))
        });
        let Some((pos, substituted)) = picked else {
            return Ok(false);
        };
        let ac = candidates[pos].index;

        let (node, name) = (self.aircraft[ac].node.clone(), self.aircraft[ac].name.clone());
        let port = &self.ports[&vertiport];
        if port.chargers.is_empty() {
            return Err(SimError::BadConfig(format!(
                "charge scheduled at {vertiport}, which has no chargers"
            )));
        }
        let stage = port.chargers[0].clone();
        let taxi_s = port.taxi_s(&node, &stage);
        self.commit_dispatch(ac, now);
        self.log(
            now,
            &name,
            EventKind::PhaseChange,
            format!("phase=taxi_charge from={node} to={stage} duration_s={taxi_s} energy_kwh=0"),
        );
        self.ports.get_mut(&vertiport).expect("vertiport known").unpark(&node);
        let aircraft = &mut self.aircraft[ac];
        aircraft.node = stage;
        aircraft.charge = Some(ChargeJob {
            vertiport,
            scheduled_t,
            scheduled_us,
            dispatch_us: now,
            substituted,
            target_level: to_level,
            target_fraction: self.config.ladder.fraction(to_level)?,
            slot: usize::MAX,
            node: String::new(),
            start_us: 0,
            from_fraction: 0.0,
        });
        self.push(now + us_of(taxi_s), CLASS_GROUND, Action::ChargeTaxiDone(ac));
        Ok(true)
    }

    /// An aircraft has become dispatchable; retry pending directives
    /// at its vertiport until none can fire.
    fn aircraft_ready(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        {
            let aircraft = &mut self.aircraft[ac];
            aircraft.state = OperationalState::Holding;
            aircraft.ready_since_us = Some(now);
            aircraft.flight = None;
            aircraft.charge = None;
        }
        let vertiport = self.aircraft[ac].vertiport.clone();
        loop {
            let mut fired = None;
            // Dispatching never touches the pending list itself, so a
            // snapshot keeps the slots valid across the retries.
            let waiting: Vec<(usize, usize)> =
                self.pending.iter().copied().enumerate().collect();
            for (slot, index) in waiting {
                if self.directives[index].vertiport() != vertiport {
                    continue;
                }
                if self.try_dispatch(index, now)? {
                    fired = Some(slot);
                    break;
                }
            }
            match fired {
                Some(slot) => {
                    self.pending.remove(slot);
                }
                None => break,
            }
        }
        Ok(())
    }

    fn taxi_out_done(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let origin = self.aircraft[ac].flight.as_ref().expect("taxiing to fly").origin.clone();
        let port = self.ports.get_mut(&origin).expect("origin known");
        match port.free_fato() {
            Some(slot) => {
                port.fato_free[slot] = false;
                self.grant_takeoff(ac, slot, now)
            }
            None => {
                let seq = self.next_seq();
                let port = self.ports.get_mut(&origin).expect("origin known");
                port.takeoff_queue.push_back((seq, ac));
                Ok(())
            }
        }
    }

    fn grant_takeoff(&mut self, ac: usize, slot: usize, now: i64) -> Result<(), SimError> {
        let (origin, destination, manifest_len, scheduled_t, scheduled_us, dispatch_us, substituted) = {
            let job = self.aircraft[ac].flight.as_ref().expect("takeoff has a job");
            (
                job.origin.clone(),
                job.destination.clone(),
                job.manifest.len(),
                job.scheduled_t,
                job.scheduled_us,
                job.dispatch_us,
                job.substituted,
            )
        };
        let fato = self.ports[&origin].fatos[slot].clone();
        // Re-run the physics at the granted liftoff instant; if the
        // wind turned infeasible while queueing, fly the dispatch-time
        // plan rather than strand a boarded flight.
        let profile = &self.profiles[&(origin.clone(), destination.clone())];
        match simulate_flight(
            profile,
            &self.config.aircraft,
            self.config.ladder,
            self.wind,
            self.at(now),
            manifest_len as u32,
        ) {
            Ok(plan) => {
                self.aircraft[ac].flight.as_mut().expect("job").plan = plan;
            }
            Err(FlightError::FlightInfeasible { .. } | FlightError::CrabInfeasible { .. }) => {}
            Err(err) => return Err(err.into()),
        }

        let (name, soc) = (self.aircraft[ac].name.clone(), self.aircraft[ac].soc);
        let (phases, total_duration_s) = {
            let job = self.aircraft[ac].flight.as_ref().expect("job");
            (job.plan.phases.clone(), job.plan.total_duration_s)
        };
        let hover_climb_s = phases.first().expect("profiles have phases").duration_s;
        let hover_descent_s = phases.last().expect("profiles have phases").duration_s;
        let fix_offset_s = total_duration_s - hover_descent_s;
        let delay_s = s_of(dispatch_us - scheduled_us);

        self.log(
            now,
            &name,
            EventKind::Depart,
            format!(
                "origin={origin} destination={destination} pax={manifest_len} soc={soc} \
                 t={scheduled_t} delay_s={delay_s} substituted={} fato={fato} \
                 fato_from_us={now} fato_until_us={}",
                u8::from(substituted),
                now + us_of(hover_climb_s)
            ),
        );
        let mut elapsed = 0.0;
        for phase in &phases {
            self.log(
                now + us_of(elapsed),
                &name,
                EventKind::PhaseChange,
                format!(
                    "phase={} duration_s={} energy_kwh={}",
                    phase.kind.label(),
                    phase.duration_s,
                    phase.energy_kwh
                ),
            );
            elapsed += phase.duration_s;
        }
        {
            let aircraft = &mut self.aircraft[ac];
            aircraft.state = OperationalState::Flying;
            aircraft.node = String::new();
            let job = aircraft.flight.as_mut().expect("job");
            job.fato = fato;
            job.fato_slot = slot;
            job.liftoff_us = now;
            job.fix_us = now + us_of(fix_offset_s);
        }
        self.push(now + us_of(hover_climb_s), CLASS_TAKEOFF, Action::LiftoffDone(ac));
        self.push(now + us_of(fix_offset_s), CLASS_LANDING, Action::FixArrival(ac));
        Ok(())
    }

    fn liftoff_done(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let (origin, slot) = {
            let job = self.aircraft[ac].flight.as_ref().expect("airborne job");
            (job.origin.clone(), job.fato_slot)
        };
        self.release_fato(&origin, slot, now)
    }

    fn release_fato(&mut self, vertiport: &str, slot: usize, now: i64) -> Result<(), SimError> {
        let port = self.ports.get_mut(vertiport).expect("port known");
        if let Some((_, next)) = port.land_queue.pop_front() {
            self.grant_landing(next, slot, now)
        } else if let Some((_, next)) = port.takeoff_queue.pop_front() {
            self.grant_takeoff(next, slot, now)
        } else {
            port.fato_free[slot] = true;
            Ok(())
        }
    }

    fn fix_arrival(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let destination =
            self.aircraft[ac].flight.as_ref().expect("airborne job").destination.clone();
        let port = self.ports.get_mut(&destination).expect("destination known");
        match port.free_fato() {
            Some(slot) => {
                port.fato_free[slot] = false;
                self.grant_landing(ac, slot, now)
            }
            None => {
                let seq = self.next_seq();
                let port = self.ports.get_mut(&destination).expect("destination known");
                port.land_queue.push_back((seq, ac));
                Ok(())
            }
        }
    }

    fn grant_landing(&mut self, ac: usize, slot: usize, now: i64) -> Result<(), SimError> {
        let (destination, fix_us, hover_kw, hover_descent_s) = {
            let job = self.aircraft[ac].flight.as_ref().expect("landing job");
            (
                job.destination.clone(),
                job.fix_us,
                job.hover_kw,
                job.plan.phases.last().expect("phases").duration_s,
            )
        };
        let fato = self.ports[&destination].fatos[slot].clone();
        let name = self.aircraft[ac].name.clone();
        let wait_s = s_of(now - fix_us);
        let mut hold_energy_kwh = 0.0;
        if now > fix_us {
            hold_energy_kwh = hover_kw * wait_s / 3600.0;
            self.log(
                fix_us,
                &name,
                EventKind::PhaseChange,
                format!("phase=fix_hold duration_s={wait_s} energy_kwh={hold_energy_kwh}"),
            );
        }
        {
            let job = self.aircraft[ac].flight.as_mut().expect("landing job");
            job.fato = fato;
            job.fato_slot = slot;
            job.land_grant_us = now;
            job.hold_energy_kwh = hold_energy_kwh;
        }
        self.push(now + us_of(hover_descent_s), CLASS_LANDING, Action::Touchdown(ac));
        Ok(())
    }

    fn touchdown(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let (origin, destination, fato, slot, grant_us, manifest_len, energy_kwh, fallbacks, fix_wait_s) = {
            let job = self.aircraft[ac].flight.as_ref().expect("landing job");
            (
                job.origin.clone(),
                job.destination.clone(),
                job.fato.clone(),
                job.fato_slot,
                job.land_grant_us,
                job.manifest.len(),
                job.plan.total_energy_kwh + job.hold_energy_kwh,
                job.plan.fallback_segments,
                s_of(job.land_grant_us - job.fix_us).max(0.0),
            )
        };
        let name = self.aircraft[ac].name.clone();
        let soc_after = {
            let aircraft = &mut self.aircraft[ac];
            aircraft.soc -= energy_kwh / self.config.aircraft.battery_capacity_kwh;
            aircraft.soc
        };
        self.log(
            now,
            &name,
            EventKind::Land,
            format!(
                "origin={origin} destination={destination} pax={manifest_len} soc={soc_after} \
                 energy_kwh={energy_kwh} fix_wait_s={fix_wait_s} fallbacks={fallbacks} \
                 fato={fato} fato_from_us={grant_us} fato_until_us={now}"
            ),
        );
        self.release_fato(&destination, slot, now)?;
        let pad = self.ports.get_mut(&destination).expect("destination known").park();
        let taxi_s = self.ports[&destination].taxi_s(&fato, &pad);
        self.log(
            now,
            &name,
            EventKind::PhaseChange,
            format!("phase=taxi_in from={fato} to={pad} duration_s={taxi_s} energy_kwh=0"),
        );
        {
            let aircraft = &mut self.aircraft[ac];
            aircraft.state = OperationalState::Taxiing;
            aircraft.vertiport = destination;
            aircraft.node = pad;
        }
        self.push(now + us_of(taxi_s), CLASS_GROUND, Action::TaxiInDone(ac));
        Ok(())
    }

    fn taxi_in_done(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let (name, vertiport, manifest) = {
            let aircraft = &self.aircraft[ac];
            let job = aircraft.flight.as_ref().expect("arriving job");
            (aircraft.name.clone(), aircraft.vertiport.clone(), job.manifest.clone())
        };
        for pax in &manifest {
            self.log(
                now,
                &pax.id,
                EventKind::Disembark,
                format!("vertiport={vertiport} aircraft={name}"),
            );
        }
        self.aircraft[ac].state = OperationalState::Turnaround;
        self.push(
            now + us_of(self.config.turnaround_s),
            CLASS_GROUND,
            Action::TurnaroundDone(ac),
        );
        Ok(())
    }

    fn request_charger(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let vertiport = self.aircraft[ac].charge.as_ref().expect("charge job").vertiport.clone();
        let port = self.ports.get_mut(&vertiport).expect("vertiport known");
        if port.chargers.is_empty() {
            return Err(SimError::BadConfig(format!(
                "charge scheduled at {vertiport}, which has no chargers"
            )));
        }
        match port.free_charger() {
            Some(slot) => {
                port.charger_free[slot] = false;
                self.start_charge(ac, slot, now)
            }
            None => {
                let seq = self.next_seq();
                let port = self.ports.get_mut(&vertiport).expect("vertiport known");
                port.charger_queue.push_back((seq, ac));
                Ok(())
            }
        }
    }

    fn start_charge(&mut self, ac: usize, slot: usize, now: i64) -> Result<(), SimError> {
        let (vertiport, target_fraction, target_level, scheduled_t, scheduled_us, dispatch_us, substituted) = {
            let job = self.aircraft[ac].charge.as_ref().expect("charge job");
            (
                job.vertiport.clone(),
                job.target_fraction,
                job.target_level,
                job.scheduled_t,
                job.scheduled_us,
                job.dispatch_us,
                job.substituted,
            )
        };
        let node = self.ports[&vertiport].chargers[slot].clone();
        let name = self.aircraft[ac].name.clone();
        let from = self.aircraft[ac].soc;
        let duration_s = if from >= target_fraction {
            0.0
        } else {
            self.config.charger.charge_time_s(from, target_fraction)?
        };
        let delay_s = s_of(dispatch_us - scheduled_us);
        self.log(
            now,
            &name,
            EventKind::ChargeStart,
            format!(
                "vertiport={vertiport} node={node} from_soc={from} to_soc={target_fraction} \
                 to_level={target_level} t={scheduled_t} delay_s={delay_s} substituted={}",
                u8::from(substituted)
            ),
        );
        {
            let aircraft = &mut self.aircraft[ac];
            aircraft.state = OperationalState::Charging;
            aircraft.node = node.clone();
            let job = aircraft.charge.as_mut().expect("charge job");
            job.slot = slot;
            job.node = node;
            job.start_us = now;
            job.from_fraction = from;
        }
        self.push(now + us_of(duration_s), CLASS_CHARGE, Action::ChargeDone(ac));
        Ok(())
    }

    fn charge_done(&mut self, ac: usize, now: i64) -> Result<(), SimError> {
        let (vertiport, node, slot, start_us, from, target) = {
            let job = self.aircraft[ac].charge.as_ref().expect("charge job");
            (
                job.vertiport.clone(),
                job.node.clone(),
                job.slot,
                job.start_us,
                job.from_fraction,
                job.target_fraction,
            )
        };
        let name = self.aircraft[ac].name.clone();
        let energy_kwh = (target - from).max(0.0) * self.config.charger.capacity_kwh;
        self.aircraft[ac].soc = target.max(from);
        self.log(
            now,
            &name,
            EventKind::ChargeEnd,
            format!(
                "vertiport={vertiport} node={node} soc={} energy_kwh={energy_kwh} duration_s={}",
                self.aircraft[ac].soc,
                s_of(now - start_us)
            ),
        );
        let next = {
            let port = self.ports.get_mut(&vertiport).expect("vertiport known");
            match port.charger_queue.pop_front() {
                Some((_, waiting)) => Some(waiting),
                None => {
                    port.charger_free[slot] = true;
                    None
                }
            }
        };
        if let Some(waiting) = next {
            self.start_charge(waiting, slot, now)?;
        }
        self.aircraft_ready(ac, now)
    }
}

fn pax_id(origin: &str, destination: &str, index: usize) -> String {
    format!("pax:{origin}:{destination}:{:04}", index + 1)
}

//! Fleet sizing as a time-expanded integer program.
//!
//! Aircraft live on a grid of vertiports, discrete charge levels
//! 0..=K, and time steps 0..=T. Idle counts, flight dispatches, and
//! charge commitments are nonnegative integer variables tied together
//! by per-(vertiport, level, step) conservation rows; demand rows
//! force enough dispatches on demanded (origin, destination, step)
//! triples. The horizon is cyclic: step T is step 0, so an optimal
//! plan repeats day after day. Solved exactly by branch-and-bound on
//! an internal primal simplex; also exportable as LP text.

mod branch;
mod lp_text;
mod lu;
mod simplex;

pub use branch::{solve, SolveLimits, SolverStats};
pub use lp_text::export_lp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charging::ChargingTimetable;
use crate::demand::FlightDemand;

/// Keeps `alpha * plausible flight count` far below one aircraft.
const INTEGRALITY_TOL: f64 = 1e-6;
pub const DEFAULT_ALPHA: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("route {origin}->{destination} at step {step} needs {levels} charge levels but the ladder tops out at {top}")]
    InfeasibleRoute { origin: String, destination: String, step: u32, levels: u32, top: u32 },
    #[error("demand references route {origin}->{destination} missing from the tau/kappa tables")]
    UnroutedDemand { origin: String, destination: String },
    #[error("demand at {origin}->{destination} step {step} has no admissible flight variable")]
    UnservableDemand { origin: String, destination: String, step: u32 },
    #[error("vertiport `{0}` is not in the network")]
    UnknownVertiport(String),
    #[error("alpha must be positive, found {0}")]
    BadAlpha(f64),
    #[error("alpha {alpha} times the flight-count bound {bound} reaches 1; fleet sizes would trade against the flight term")]
    AlphaTooLarge { alpha: f64, bound: f64 },
    #[error("charging timetable has {timetable_top} levels but K = {k}")]
    LadderMismatch { timetable_top: u32, k: u32 },
    #[error("route table: {0}")]
    TableShape(String),
    #[error("demand at {origin}->{destination} step {step} is outside the schedulable day of {day_steps} steps")]
    DemandOffGrid { origin: String, destination: String, step: u32, day_steps: u32 },
    #[error("program is infeasible; first violated family: {family}")]
    Infeasible { family: String },
    #[error("no integer solution exists (LP bound {bound})")]
    IntegerInfeasible { bound: f64 },
    #[error("search limits hit before any incumbent; LP bound {bound}")]
    NoIncumbent { bound: f64 },
    #[error("variable {name} = {value} is not integral")]
    Fractional { name: String, value: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must be `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
    #[error("csv line {line}: {reason}")]
    Value { line: u64, reason: String },
}

/// Per-route, per-departure-step integer lookups (flight steps for tau,
/// charge levels for kappa). Lookups wrap modulo the day, so the tail
/// window past midnight reuses time-of-day values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTable {
    day_steps: u32,
    values: BTreeMap<(String, String), Vec<u32>>,
}

impl RouteTable {
    pub fn new(day_steps: u32) -> Self {
        Self { day_steps, values: BTreeMap::new() }
    }

    /// Same value at every step, for every ordered pair given.
    pub fn constant(day_steps: u32, pairs: &[(String, String)], value: u32) -> Self {
        let mut table = Self::new(day_steps);
        for (origin, destination) in pairs {
            table.values.insert(
                (origin.clone(), destination.clone()),
                vec![value; day_steps as usize],
            );
        }
        table
    }

    pub fn day_steps(&self) -> u32 {
        self.day_steps
    }

    pub fn insert(
        &mut self,
        origin: &str,
        destination: &str,
        per_step: Vec<u32>,
    ) -> Result<(), OptError> {
        if per_step.len() != self.day_steps as usize {
            return Err(OptError::TableShape(format!(
                "{origin}->{destination} lists {} steps, expected {}",
                per_step.len(),
                self.day_steps
            )));
        }
        self.values.insert((origin.to_string(), destination.to_string()), per_step);
        Ok(())
    }

    /// Value at step `t` (wrapping past the day end); None for routes
    /// the table does not know.
    pub fn get(&self, origin: &str, destination: &str, t: u32) -> Option<u32> {
        self.values
            .get(&(origin.to_string(), destination.to_string()))
            .map(|steps| steps[(t % self.day_steps) as usize])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.keys().map(|(o, d)| (o.as_str(), d.as_str()))
    }

    pub fn contains(&self, origin: &str, destination: &str) -> bool {
        self.values.contains_key(&(origin.to_string(), destination.to_string()))
    }

    const HEADER: &'static str = "i,j,t,value";

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), OptError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::HEADER.split(','))?;
        for ((origin, destination), per_step) in &self.values {
            for (t, value) in per_step.iter().enumerate() {
                w.write_record([
                    origin.as_str(),
                    destination.as_str(),
                    &t.to_string(),
                    &value.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, day_steps: u32) -> Result<Self, OptError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if found != Self::HEADER {
            return Err(OptError::Header { expected: Self::HEADER, found });
        }
        let mut acc: BTreeMap<(String, String), Vec<Option<u32>>> = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |reason: String| OptError::Value { line, reason };
            if row.len() != 4 {
                return Err(bad("expected 4 fields".into()));
            }
            let t: u32 = row[2].parse().map_err(|_| bad(format!("bad step `{}`", &row[2])))?;
            if t >= day_steps {
                return Err(bad(format!("step {t} outside 0..{day_steps}")));
            }
            let value: u32 =
                row[3].parse().map_err(|_| bad(format!("bad value `{}`", &row[3])))?;
            let slot = acc
                .entry((row[0].to_string(), row[1].to_string()))
                .or_insert_with(|| vec![None; day_steps as usize]);
            if slot[t as usize].replace(value).is_some() {
                return Err(bad(format!("duplicate step {t} for {}->{}", &row[0], &row[1])));
            }
        }
        let mut table = Self::new(day_steps);
        for ((origin, destination), per_step) in acc {
            let dense: Option<Vec<u32>> = per_step.into_iter().collect();
            let dense = dense.ok_or_else(|| {
                OptError::TableShape(format!(
                    "{origin}->{destination} is missing steps; all 0..{day_steps} required"
                ))
            })?;
            table.values.insert((origin, destination), dense);
        }
        Ok(table)
    }
}

/// Identity of one integer variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VarKey {
    /// n: aircraft idling at vertiport `i` with charge level `k` at
    /// step `t` (t in 0..T; step T shares step 0's variables).
    Idle { i: usize, k: u32, t: u32 },
    /// u: flights from `i` to `j` departing at `t` with level `k`.
    Flight { i: usize, j: usize, k: u32, t: u32 },
    /// C: charges at `i` from level `x` to `y` committed at `t`;
    /// t = 0 is the midnight-spanning commitment (= step T).
    Charge { i: usize, x: u32, y: u32, t: u32 },
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub key: VarKey,
    pub objective: f64,
    /// Counted in the fleet size (idle or charging at step 0).
    pub fleet_member: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowKind {
    /// Conservation at (vertiport, level, step), steps 1..=T.
    Balance { i: usize, k: u32, t: u32 },
    /// Coverage of demanded flights at (origin, destination, step).
    Demand { i: usize, j: usize, t: u32 },
}

#[derive(Debug, Clone)]
pub struct Row {
    pub kind: RowKind,
    /// (variable index, coefficient), ascending by index.
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct IntegerProgram {
    vertiports: Vec<String>,
    k_levels: u32,
    day_steps: u32,
    horizon: u32,
    alpha: f64,
    vars: Vec<Variable>,
    index: BTreeMap<VarKey, usize>,
    rows: Vec<Row>,
}

impl IntegerProgram {
    pub fn vertiports(&self) -> &[String] {
        &self.vertiports
    }

    pub fn k_levels(&self) -> u32 {
        self.k_levels
    }

    pub fn day_steps(&self) -> u32 {
        self.day_steps
    }

    /// T: the cyclic horizon (day plus the longest overhang plus one).
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn variable_index(&self, key: VarKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn variable_name(&self, index: usize) -> String {
        lp_text::variable_name(self, self.vars[index].key)
    }

    pub(crate) fn to_linear_program(&self) -> simplex::LinearProgram {
        let mut cols: Vec<simplex::LpColumn> = self
            .vars
            .iter()
            .map(|v| simplex::LpColumn { cost: v.objective, entries: Vec::new() })
            .collect();
        let mut senses = Vec::with_capacity(self.rows.len());
        let mut rhs = Vec::with_capacity(self.rows.len());
        for (row_index, row) in self.rows.iter().enumerate() {
            for &(var, coefficient) in &row.entries {
                cols[var].entries.push((row_index, coefficient));
            }
            senses.push(match row.kind {
                RowKind::Balance { .. } => simplex::Sense::Eq,
                RowKind::Demand { .. } => simplex::Sense::Ge,
            });
            rhs.push(row.rhs);
        }
        simplex::LinearProgram { num_rows: self.rows.len(), cols, senses, rhs }
    }

    fn row_family(&self, row: usize) -> String {
        match &self.rows[row].kind {
            RowKind::Balance { i, k, t } => {
                format!("balance at ({}, level {k}, step {t})", self.vertiports[*i])
            }
            RowKind::Demand { i, j, t } => format!(
                "demand at {}->{} step {t}",
                self.vertiports[*i], self.vertiports[*j]
            ),
        }
    }
}

/// Builds the cyclic fleet program. `alpha` is the tie-break weight
/// that charges each flight a sliver of objective so the solver never
/// flies for free.
pub fn build_program(
    demand: &FlightDemand,
    tau: &RouteTable,
    kappa: &RouteTable,
    timetable: &ChargingTimetable,
    k_levels: u32,
    vertiports: &[String],
    alpha: f64,
) -> Result<IntegerProgram, OptError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(OptError::BadAlpha(alpha));
    }
    if timetable.ladder.top() != k_levels {
        return Err(OptError::LadderMismatch { timetable_top: timetable.ladder.top(), k: k_levels });
    }
    let day_steps = tau.day_steps();
    if kappa.day_steps() != day_steps {
        return Err(OptError::TableShape(format!(
            "kappa table covers {} steps, tau covers {day_steps}",
            kappa.day_steps()
        )));
    }
    if day_steps == 0 {
        return Err(OptError::TableShape("tables cover zero steps".into()));
    }
    let vertiport_index: BTreeMap<&str, usize> =
        vertiports.iter().enumerate().map(|(idx, name)| (name.as_str(), idx)).collect();
    if vertiport_index.len() != vertiports.len() {
        return Err(OptError::TableShape("duplicate vertiport ids".into()));
    }

    // Routes are the pairs both tables know, in index order.
    let mut routes: Vec<(usize, usize)> = Vec::new();
    for (origin, destination) in tau.pairs() {
        let &i = vertiport_index
            .get(origin)
            .ok_or_else(|| OptError::UnknownVertiport(origin.to_string()))?;
        let &j = vertiport_index
            .get(destination)
            .ok_or_else(|| OptError::UnknownVertiport(destination.to_string()))?;
        if i != j && kappa.contains(origin, destination) {
            routes.push((i, j));
        }
    }
    routes.sort_unstable();

    let route_value = |table: &RouteTable, i: usize, j: usize, t: u32| -> u32 {
        table.get(&vertiports[i], &vertiports[j], t).expect("route pairs pre-checked")
    };

    let mut max_tau = 0u32;
    for &(i, j) in &routes {
        for t in 0..day_steps {
            let flight_steps = route_value(tau, i, j, t);
            let levels = route_value(kappa, i, j, t);
            if flight_steps == 0 || levels == 0 {
                return Err(OptError::TableShape(format!(
                    "route {}->{} at step {t} has a zero entry; tau and kappa must be >= 1",
                    vertiports[i], vertiports[j]
                )));
            }
            if levels > k_levels {
                return Err(OptError::InfeasibleRoute {
                    origin: vertiports[i].clone(),
                    destination: vertiports[j].clone(),
                    step: t,
                    levels,
                    top: k_levels,
                });
            }
            max_tau = max_tau.max(flight_steps);
        }
    }
    let horizon = day_steps + max_tau + 1;

    // Demand sanity before any allocation.
    let mut total_demand = 0u64;
    for ((origin, destination), per_step) in &demand.counts {
        let &i = vertiport_index
            .get(origin.as_str())
            .ok_or_else(|| OptError::UnknownVertiport(origin.clone()))?;
        let &j = vertiport_index
            .get(destination.as_str())
            .ok_or_else(|| OptError::UnknownVertiport(destination.clone()))?;
        if !routes.contains(&(i, j)) {
            return Err(OptError::UnroutedDemand {
                origin: origin.clone(),
                destination: destination.clone(),
            });
        }
        for (&t, &count) in per_step {
            if t == 0 || t > day_steps {
                return Err(OptError::DemandOffGrid {
                    origin: origin.clone(),
                    destination: destination.clone(),
                    step: t,
                    day_steps,
                });
            }
            total_demand += u64::from(count);
        }
    }
    // A plausible ceiling on optimal flight counts: serving all demand
    // plus a repositioning return for every served flight.
    let flight_bound = (2 * total_demand) as f64 + f64::from(k_levels)
        * vertiports.len() as f64;
    if alpha * flight_bound >= 1.0 {
        return Err(OptError::AlphaTooLarge { alpha, bound: flight_bound });
    }

    let mut vars: Vec<Variable> = Vec::new();
    let mut index: BTreeMap<VarKey, usize> = BTreeMap::new();
    let push = |vars: &mut Vec<Variable>,
                    index: &mut BTreeMap<VarKey, usize>,
                    key: VarKey,
                    objective: f64,
                    fleet_member: bool| {
        index.insert(key, vars.len());
        vars.push(Variable { key, objective, fleet_member });
    };

    for i in 0..vertiports.len() {
        for k in 0..=k_levels {
            for t in 0..horizon {
                let at_midnight = t == 0;
                push(
                    &mut vars,
                    &mut index,
                    VarKey::Idle { i, k, t },
                    if at_midnight { 1.0 } else { 0.0 },
                    at_midnight,
                );
            }
        }
    }
    for &(i, j) in &routes {
        for t in 1..horizon {
            let flight_steps = route_value(tau, i, j, t);
            if t + flight_steps > horizon {
                // Cannot land inside the horizon; the balance rows force
                // such flights to zero anyway, so skip the variable.
                continue;
            }
            let levels = route_value(kappa, i, j, t);
            for k in levels.max(1)..=k_levels {
                push(&mut vars, &mut index, VarKey::Flight { i, j, k, t }, alpha, false);
            }
        }
    }
    for i in 0..vertiports.len() {
        for x in 0..k_levels {
            for y in x + 1..=k_levels {
                let lag = timetable.steps_between(x, y);
                for t in 0..horizon {
                    let completion = if t == 0 { lag } else { t + lag };
                    if completion > horizon {
                        continue;
                    }
                    let at_midnight = t == 0;
                    push(
                        &mut vars,
                        &mut index,
                        VarKey::Charge { i, x, y, t },
                        if at_midnight { 1.0 } else { 0.0 },
                        at_midnight,
                    );
                }
            }
        }
    }

    // Arrival buckets: arrivals_at[(j, i)][t] = departure steps landing
    // exactly at t.
    let mut arrivals_at: BTreeMap<(usize, usize), Vec<Vec<u32>>> = BTreeMap::new();
    for &(i, j) in &routes {
        let buckets = arrivals_at
            .entry((i, j))
            .or_insert_with(|| vec![Vec::new(); horizon as usize + 1]);
        for departure in 1..horizon {
            let arrival = departure + route_value(tau, i, j, departure);
            if arrival <= horizon {
                buckets[arrival as usize].push(departure);
            }
        }
    }

    let mut rows: Vec<Row> = Vec::new();
    for i in 0..vertiports.len() {
        for k in 0..=k_levels {
            for t in 1..=horizon {
                let mut coefficients: BTreeMap<usize, f64> = BTreeMap::new();
                let mut add = |key: VarKey, coefficient: f64| {
                    if let Some(&var) = index.get(&key) {
                        *coefficients.entry(var).or_default() += coefficient;
                    }
                };
                let now = if t == horizon { 0 } else { t };
                add(VarKey::Idle { i, k, t: now }, 1.0);
                add(VarKey::Idle { i, k, t: t - 1 }, -1.0);
                // Arrivals: flights into i landing at t whose departure
                // level was k + kappa at their departure step.
                for &(origin, destination) in &routes {
                    if destination != i {
                        continue;
                    }
                    for &departure in &arrivals_at[&(origin, destination)][t as usize] {
                        let spent = route_value(kappa, origin, destination, departure);
                        if k + spent <= k_levels {
                            add(
                                VarKey::Flight {
                                    i: origin,
                                    j: destination,
                                    k: k + spent,
                                    t: departure,
                                },
                                -1.0,
                            );
                        }
                    }
                }
                // Departures out of i at level k (none at the horizon
                // step: u(T) = u(0) = 0).
                if t < horizon {
                    for &(origin, destination) in &routes {
                        if origin == i {
                            add(VarKey::Flight { i, j: destination, k, t }, 1.0);
                        }
                    }
                }
                // Charge completions arriving at level k at step t.
                for x in 0..k {
                    let lag = timetable.steps_between(x, k);
                    if t >= lag {
                        add(VarKey::Charge { i, x, y: k, t: t - lag }, -1.0);
                    }
                }
                // Charge commitments leaving level k at step t; the
                // horizon row debits the midnight-spanning commitments.
                let commit_step = if t == horizon { Some(0) } else { Some(t) };
                if let Some(step) = commit_step {
                    for y in k + 1..=k_levels {
                        add(VarKey::Charge { i, x: k, y, t: step }, 1.0);
                    }
                }
                rows.push(Row {
                    kind: RowKind::Balance { i, k, t },
                    entries: coefficients.into_iter().collect(),
                    rhs: 0.0,
                });
            }
        }
    }
    for ((origin, destination), per_step) in &demand.counts {
        let i = vertiport_index[origin.as_str()];
        let j = vertiport_index[destination.as_str()];
        for (&t, &count) in per_step {
            if count == 0 {
                continue;
            }
            let mut entries = Vec::new();
            for k in 1..=k_levels {
                if let Some(&var) = index.get(&VarKey::Flight { i, j, k, t }) {
                    entries.push((var, 1.0));
                }
            }
            if entries.is_empty() {
                return Err(OptError::UnservableDemand {
                    origin: origin.clone(),
                    destination: destination.clone(),
                    step: t,
                });
            }
            rows.push(Row {
                kind: RowKind::Demand { i, j, t },
                entries,
                rhs: f64::from(count),
            });
        }
    }

    Ok(IntegerProgram {
        vertiports: vertiports.to_vec(),
        k_levels,
        day_steps,
        horizon,
        alpha,
        vars,
        index,
        rows,
    })
}

/// One dispatched flight directive (always a single aircraft).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightEntry {
    pub t: u32,
    pub origin: String,
    pub destination: String,
    pub soc_level: u32,
    pub count: u32,
}

/// One charge directive (always a single aircraft).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeEntry {
    pub t: u32,
    pub vertiport: String,
    pub from_level: u32,
    pub to_level: u32,
    pub count: u32,
}

/// Aircraft idle at a vertiport when the cyclic day starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdleEntry {
    pub vertiport: String,
    pub soc_level: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSolution {
    pub objective: f64,
    pub fleet_size: u32,
    /// Integral value per program variable.
    pub values: Vec<f64>,
    /// Where the idle share of the fleet sits at midnight; together
    /// with the t = 0 charges this is the whole fleet.
    pub initial_idle: Vec<IdleEntry>,
    pub flights: Vec<FlightEntry>,
    pub charges: Vec<ChargeEntry>,
    pub stats: SolverStats,
}

/// Expands an integral solution into unit schedule entries, sorted by
/// (step, origin, destination, level).
pub fn extract_schedules(
    program: &IntegerProgram,
    values: &[f64],
) -> Result<(Vec<FlightEntry>, Vec<ChargeEntry>), OptError> {
    let mut flights = Vec::new();
    let mut charges = Vec::new();
    for (var, value) in program.vars.iter().zip(values) {
        let rounded = value.round();
        if (value - rounded).abs() > INTEGRALITY_TOL || rounded < -INTEGRALITY_TOL {
            return Err(OptError::Fractional {
                name: lp_text::variable_name(program, var.key),
                value: *value,
            });
        }
        let units = rounded as u32;
        if units == 0 {
            continue;
        }
        match var.key {
            VarKey::Flight { i, j, k, t } => {
                for _ in 0..units {
                    flights.push(FlightEntry {
                        t,
                        origin: program.vertiports[i].clone(),
                        destination: program.vertiports[j].clone(),
                        soc_level: k,
                        count: 1,
                    });
                }
            }
            VarKey::Charge { i, x, y, t } => {
                for _ in 0..units {
                    charges.push(ChargeEntry {
                        t,
                        vertiport: program.vertiports[i].clone(),
                        from_level: x,
                        to_level: y,
                        count: 1,
                    });
                }
            }
            VarKey::Idle { .. } => {}
        }
    }
    flights.sort_by(|a, b| {
        (a.t, &a.origin, &a.destination, a.soc_level)
            .cmp(&(b.t, &b.origin, &b.destination, b.soc_level))
    });
    charges.sort_by(|a, b| {
        (a.t, &a.vertiport, a.from_level, a.to_level)
            .cmp(&(b.t, &b.vertiport, b.from_level, b.to_level))
    });
    Ok((flights, charges))
}

/// Reads off the midnight idle placement, sorted by (vertiport, level).
pub fn extract_initial_idle(
    program: &IntegerProgram,
    values: &[f64],
) -> Result<Vec<IdleEntry>, OptError> {
    let mut idle = Vec::new();
    for (var, value) in program.vars.iter().zip(values) {
        let VarKey::Idle { i, k, t: 0 } = var.key else { continue };
        let rounded = value.round();
        if (value - rounded).abs() > INTEGRALITY_TOL || rounded < -INTEGRALITY_TOL {
            return Err(OptError::Fractional {
                name: lp_text::variable_name(program, var.key),
                value: *value,
            });
        }
        if rounded > 0.0 {
            idle.push(IdleEntry {
                vertiport: program.vertiports[i].clone(),
                soc_level: k,
                count: rounded as u32,
            });
        }
    }
    idle.sort_by(|a, b| (&a.vertiport, a.soc_level).cmp(&(&b.vertiport, b.soc_level)));
    Ok(idle)
}

/// Demand coverage detail in validation reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageRow {
    pub origin: String,
    pub destination: String,
    pub t: u32,
    pub required: u32,
    pub served: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub pass: bool,
    pub balance_max_abs_residual: i64,
    pub demand_max_shortfall: i64,
    pub first_violation: Option<String>,
    pub fleet_size: u64,
    pub coverage: Vec<CoverageRow>,
}

/// Replays every constraint against rounded values in exact integer
/// arithmetic. Report-only: corrupted solutions come back as FAIL, not
/// as errors.
pub fn validate(program: &IntegerProgram, values: &[f64]) -> ValidationReport {
    let rounded: Vec<i64> = values.iter().map(|v| v.round() as i64).collect();
    let mut balance_max = 0i64;
    let mut shortfall_max = 0i64;
    let mut first_violation = None;
    let mut coverage = Vec::new();
    for (row_index, row) in program.rows.iter().enumerate() {
        let lhs: i64 = row
            .entries
            .iter()
            .map(|&(var, coefficient)| rounded[var] * coefficient.round() as i64)
            .sum();
        let rhs = row.rhs.round() as i64;
        match &row.kind {
            RowKind::Balance { .. } => {
                let residual = lhs - rhs;
                balance_max = balance_max.max(residual.abs());
                if residual != 0 && first_violation.is_none() {
                    first_violation = Some(program.row_family(row_index));
                }
            }
            RowKind::Demand { i, j, t } => {
                let shortfall = (rhs - lhs).max(0);
                shortfall_max = shortfall_max.max(shortfall);
                if shortfall > 0 && first_violation.is_none() {
                    first_violation = Some(program.row_family(row_index));
                }
                coverage.push(CoverageRow {
                    origin: program.vertiports[*i].clone(),
                    destination: program.vertiports[*j].clone(),
                    t: *t,
                    required: rhs as u32,
                    served: lhs.max(0) as u32,
                });
            }
        }
    }
    let fleet_size: u64 = program
        .vars
        .iter()
        .zip(&rounded)
        .filter(|(var, _)| var.fleet_member)
        .map(|(_, &value)| value.max(0) as u64)
        .sum();
    ValidationReport {
        pass: balance_max == 0 && shortfall_max == 0,
        balance_max_abs_residual: balance_max,
        demand_max_shortfall: shortfall_max,
        first_violation,
        fleet_size,
        coverage,
    }
}

const FLIGHT_HEADER: &str = "t,i,j,soc_level,count";
const CHARGE_HEADER: &str = "t,i,from_level,to_level,count";

pub fn write_flight_schedule_csv<W: std::io::Write>(
    entries: &[FlightEntry],
    writer: W,
) -> Result<(), OptError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FLIGHT_HEADER.split(','))?;
    for entry in entries {
        w.write_record([
            entry.t.to_string(),
            entry.origin.clone(),
            entry.destination.clone(),
            entry.soc_level.to_string(),
            entry.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flight_schedule_csv<R: std::io::Read>(
    reader: R,
) -> Result<Vec<FlightEntry>, OptError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != FLIGHT_HEADER {
        return Err(OptError::Header { expected: FLIGHT_HEADER, found });
    }
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| OptError::Value { line, reason };
        if row.len() != 5 {
            return Err(bad("expected 5 fields".into()));
        }
        let parse_u32 = |field: &str, label: &str| -> Result<u32, OptError> {
            field.parse().map_err(|_| bad(format!("bad {label} `{field}`")))
        };
        entries.push(FlightEntry {
            t: parse_u32(&row[0], "t")?,
            origin: row[1].to_string(),
            destination: row[2].to_string(),
            soc_level: parse_u32(&row[3], "soc_level")?,
            count: parse_u32(&row[4], "count")?,
        });
    }
    Ok(entries)
}

pub fn write_charge_schedule_csv<W: std::io::Write>(
    entries: &[ChargeEntry],
    writer: W,
) -> Result<(), OptError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CHARGE_HEADER.split(','))?;
    for entry in entries {
        w.write_record([
            entry.t.to_string(),
            entry.vertiport.clone(),
            entry.from_level.to_string(),
            entry.to_level.to_string(),
            entry.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_charge_schedule_csv<R: std::io::Read>(
    reader: R,
) -> Result<Vec<ChargeEntry>, OptError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != CHARGE_HEADER {
        return Err(OptError::Header { expected: CHARGE_HEADER, found });
    }
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| OptError::Value { line, reason };
        if row.len() != 5 {
            return Err(bad("expected 5 fields".into()));
        }
        let parse_u32 = |field: &str, label: &str| -> Result<u32, OptError> {
            field.parse().map_err(|_| bad(format!("bad {label} `{field}`")))
        };
        let entry = ChargeEntry {
            t: parse_u32(&row[0], "t")?,
            vertiport: row[1].to_string(),
            from_level: parse_u32(&row[2], "from_level")?,
            to_level: parse_u32(&row[3], "to_level")?,
            count: parse_u32(&row[4], "count")?,
        };
        if entry.to_level <= entry.from_level {
            return Err(bad(format!(
                "charge must raise the level, found {} -> {}",
                entry.from_level, entry.to_level
            )));
        }
        entries.push(entry);
    }
    Ok(entries)
}

const FLEET_HEADER: &str = "i,soc_level,count";

pub fn write_fleet_csv<W: std::io::Write>(
    entries: &[IdleEntry],
    writer: W,
) -> Result<(), OptError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FLEET_HEADER.split(','))?;
    for entry in entries {
        w.write_record([
            entry.vertiport.clone(),
            entry.soc_level.to_string(),
            entry.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fleet_csv<R: std::io::Read>(reader: R) -> Result<Vec<IdleEntry>, OptError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != FLEET_HEADER {
        return Err(OptError::Header { expected: FLEET_HEADER, found });
    }
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| OptError::Value { line, reason };
        if row.len() != 3 {
            return Err(bad("expected 3 fields".into()));
        }
        let parse_u32 = |field: &str, label: &str| -> Result<u32, OptError> {
            field.parse().map_err(|_| bad(format!("bad {label} `{field}`")))
        };
        if row[0].is_empty() {
            return Err(bad("empty vertiport id".into()));
        }
        entries.push(IdleEntry {
            vertiport: row[0].to_string(),
            soc_level: parse_u32(&row[1], "soc_level")?,
            count: parse_u32(&row[2], "count")?,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charging::ChargerModel;
    use crate::soc::SocLadder;
    use crate::timegrid::TimeGrid;
    use approx::assert_relative_eq;

    fn two_port_names() -> Vec<String> {
        vec!["A".to_string(), "B".to_string()]
    }

    /// K=2 ladder over a coarse grid; every level takes one step.
    fn unit_timetable() -> ChargingTimetable {
        let grid = TimeGrid::new(1800, 6, 1).unwrap();
        let ladder = SocLadder::new(2).unwrap();
        // 64 kWh per level at a flat 320 kW lands under one 1800 s step.
        let model = ChargerModel {
            capacity_kwh: 160.0,
            power_initial_kw: 320.0,
            power_final_kw: 320.0,
            knee_fraction: 0.2,
        };
        let table = model.build_timetable(ladder, grid).unwrap();
        assert!(table.steps.iter().all(|&s| s == 1), "steps {:?}", table.steps);
        table
    }

    const DAY_STEPS: u32 = 6;

    fn empty_demand() -> FlightDemand {
        FlightDemand::default()
    }

    fn demand_of(entries: &[(&str, &str, u32, u32)]) -> FlightDemand {
        let mut demand = FlightDemand::default();
        for &(origin, destination, t, count) in entries {
            *demand
                .counts
                .entry((origin.to_string(), destination.to_string()))
                .or_default()
                .entry(t)
                .or_default() += count;
        }
        demand
    }

    fn both_pairs() -> Vec<(String, String)> {
        vec![
            ("A".to_string(), "B".to_string()),
            ("B".to_string(), "A".to_string()),
        ]
    }

    fn tiny_program(demand: &FlightDemand) -> IntegerProgram {
        let names = two_port_names();
        let tau = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let kappa = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        build_program(demand, &tau, &kappa, &unit_timetable(), 2, &names, 1e-5).unwrap()
    }

    #[test]
    fn zero_demand_builds_a_pure_conservation_program() {
        let program = tiny_program(&empty_demand());
        // T = 6 + 1 + 1.
        assert_eq!(program.horizon(), 8);
        assert!(program.rows().iter().all(|r| matches!(r.kind, RowKind::Balance { .. })));
        // Every variable appears in at least one row.
        let mut seen = vec![false; program.variables().len()];
        for row in program.rows() {
            for &(var, _) in &row.entries {
                seen[var] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "orphan variables exist");
    }

    #[test]
    fn kappa_above_the_ladder_is_an_infeasible_route() {
        let names = two_port_names();
        let tau = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let kappa = RouteTable::constant(DAY_STEPS, &both_pairs(), 3);
        let err =
            build_program(&empty_demand(), &tau, &kappa, &unit_timetable(), 2, &names, 1e-5)
                .unwrap_err();
        assert!(matches!(err, OptError::InfeasibleRoute { levels: 3, top: 2, .. }));
    }

    #[test]
    fn demand_outside_the_day_is_rejected() {
        let demand = demand_of(&[("A", "B", 7, 1)]);
        let names = two_port_names();
        let tau = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let kappa = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let err = build_program(&demand, &tau, &kappa, &unit_timetable(), 2, &names, 1e-5)
            .unwrap_err();
        assert!(matches!(err, OptError::DemandOffGrid { step: 7, .. }));
    }

    #[test]
    fn route_table_round_trips_and_wraps() {
        let pairs = vec![("A".to_string(), "B".to_string())];
        let mut table = RouteTable::constant(4, &pairs, 2);
        table.insert("B", "A", vec![1, 2, 3, 4]).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = RouteTable::read_csv(buf.as_slice(), 4).unwrap();
        assert_eq!(table, back);
        assert_eq!(back.get("B", "A", 6), Some(3)); // wraps to step 2
        assert_eq!(back.get("A", "C", 0), None);
    }

    #[test]
    fn route_table_rejects_gaps() {
        let csv = "i,j,t,value\nA,B,0,1\nA,B,2,1\nA,B,3,1\n";
        assert!(matches!(
            RouteTable::read_csv(csv.as_bytes(), 4),
            Err(OptError::TableShape(_))
        ));
    }

    #[test]
    fn balance_rows_tie_the_horizon_back_to_midnight() {
        let program = tiny_program(&empty_demand());
        let horizon = program.horizon();
        // The horizon row must reference the step-0 idle variable with
        // coefficient +1.
        let idle0 = program.variable_index(VarKey::Idle { i: 0, k: 0, t: 0 }).unwrap();
        let last_row = program
            .rows()
            .iter()
            .find(|r| matches!(r.kind, RowKind::Balance { i: 0, k: 0, t } if t == horizon))
            .unwrap();
        assert!(last_row.entries.iter().any(|&(var, c)| var == idle0 && c == 1.0));
    }

    #[test]
    fn schedules_expand_to_unit_entries() {
        let program = tiny_program(&empty_demand());
        let mut values = vec![0.0; program.variables().len()];
        let flight = program.variable_index(VarKey::Flight { i: 0, j: 1, k: 2, t: 2 }).unwrap();
        let charge = program.variable_index(VarKey::Charge { i: 0, x: 1, y: 2, t: 1 }).unwrap();
        values[flight] = 2.0;
        values[charge] = 1.0;
        let (flights, charges) = extract_schedules(&program, &values).unwrap();
        assert_eq!(flights.len(), 2);
        assert!(flights.iter().all(|f| f.count == 1 && f.t == 2 && f.soc_level == 2));
        assert_eq!(charges.len(), 1);
        assert_eq!(charges[0].from_level, 1);
        assert_eq!(charges[0].to_level, 2);
    }

    #[test]
    fn fractional_values_refuse_to_extract() {
        let program = tiny_program(&empty_demand());
        let mut values = vec![0.0; program.variables().len()];
        values[0] = 0.5;
        assert!(matches!(
            extract_schedules(&program, &values),
            Err(OptError::Fractional { .. })
        ));
    }

    #[test]
    fn zero_solution_on_zero_demand_passes_validation() {
        let program = tiny_program(&empty_demand());
        let values = vec![0.0; program.variables().len()];
        let report = validate(&program, &values);
        assert!(report.pass);
        assert_eq!(report.fleet_size, 0);
        assert_eq!(report.balance_max_abs_residual, 0);
    }

    #[test]
    fn schedule_csvs_round_trip() {
        let flights = vec![
            FlightEntry {
                t: 2,
                origin: "A".into(),
                destination: "B".into(),
                soc_level: 2,
                count: 1,
            },
            FlightEntry {
                t: 5,
                origin: "B".into(),
                destination: "A".into(),
                soc_level: 1,
                count: 1,
            },
        ];
        let mut buf = Vec::new();
        write_flight_schedule_csv(&flights, &mut buf).unwrap();
        assert_eq!(read_flight_schedule_csv(buf.as_slice()).unwrap(), flights);

        let charges = vec![ChargeEntry {
            t: 3,
            vertiport: "B".into(),
            from_level: 0,
            to_level: 2,
            count: 1,
        }];
        let mut buf = Vec::new();
        write_charge_schedule_csv(&charges, &mut buf).unwrap();
        assert_eq!(read_charge_schedule_csv(buf.as_slice()).unwrap(), charges);

        let downgrade = "t,i,from_level,to_level,count\n1,A,2,1,1\n";
        assert!(read_charge_schedule_csv(downgrade.as_bytes()).is_err());

        let fleet = vec![
            IdleEntry { vertiport: "A".into(), soc_level: 2, count: 3 },
            IdleEntry { vertiport: "B".into(), soc_level: 0, count: 1 },
        ];
        let mut buf = Vec::new();
        write_fleet_csv(&fleet, &mut buf).unwrap();
        assert_eq!(read_fleet_csv(buf.as_slice()).unwrap(), fleet);
    }

    #[test]
    fn alpha_guard_trips_on_oversized_alpha() {
        let demand = demand_of(&[("A", "B", 2, 1)]);
        let names = two_port_names();
        let tau = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let kappa = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let err = build_program(&demand, &tau, &kappa, &unit_timetable(), 2, &names, 0.5)
            .unwrap_err();
        assert!(matches!(err, OptError::AlphaTooLarge { .. }));
    }

    #[test]
    fn zero_demand_solves_to_an_empty_fleet() {
        let program = tiny_program(&empty_demand());
        let solution = solve(&program, &SolveLimits::default()).unwrap();
        assert_eq!(solution.fleet_size, 0);
        assert_relative_eq!(solution.objective, 0.0, epsilon = 1e-9);
        assert!(solution.values.iter().all(|&v| v == 0.0));
        // The LP relaxation is already integral at zero.
        assert_eq!(solution.stats.nodes, 0);
        assert!(solution.stats.proved_optimal);
        assert!(validate(&program, &solution.values).pass);
    }

    #[test]
    fn single_demanded_flight_forces_a_repositioning_return() {
        let demand = demand_of(&[("A", "B", 2, 1)]);
        let program = tiny_program(&demand);
        let solution = solve(&program, &SolveLimits::default()).unwrap();
        // Cyclic flow needs the aircraft back at A, so one extra empty
        // leg rides along.
        assert_eq!(solution.fleet_size, 1);
        assert_eq!(solution.flights.len(), 2);
        assert!(solution
            .flights
            .iter()
            .any(|f| f.origin == "A" && f.destination == "B" && f.t == 2));
        assert!(solution.flights.iter().any(|f| f.origin == "B" && f.destination == "A"));
        assert_relative_eq!(solution.objective, 1.0 + 2.0e-5, epsilon = 1e-9);
        let placed: u32 = solution.initial_idle.iter().map(|e| e.count).sum();
        let overnight: u32 = solution
            .charges
            .iter()
            .filter(|c| c.t == 0)
            .map(|c| c.count)
            .sum();
        assert_eq!(placed + overnight, solution.fleet_size);
        let report = validate(&program, &solution.values);
        assert!(report.pass, "first violation: {:?}", report.first_violation);
        assert_eq!(report.fleet_size, 1);
    }

    #[test]
    fn symmetric_spaced_demand_shares_one_aircraft() {
        let demand = demand_of(&[("A", "B", 2, 1), ("B", "A", 5, 1)]);
        let program = tiny_program(&demand);
        let solution = solve(&program, &SolveLimits::default()).unwrap();
        assert_eq!(solution.fleet_size, 1);
        assert_eq!(solution.flights.len(), 2);
        assert!(validate(&program, &solution.values).pass);
    }

    #[test]
    fn back_to_back_demand_needs_a_second_aircraft() {
        // The step-2 aircraft is still away at step 4, and adding
        // demand can never shrink the optimum.
        let single = solve(&tiny_program(&demand_of(&[("A", "B", 2, 1)])), &SolveLimits::default())
            .unwrap();
        let double = solve(
            &tiny_program(&demand_of(&[("A", "B", 2, 1), ("A", "B", 4, 1)])),
            &SolveLimits::default(),
        )
        .unwrap();
        assert!(double.fleet_size >= single.fleet_size);
        assert_eq!(double.fleet_size, 2);
        assert!(validate(
            &tiny_program(&demand_of(&[("A", "B", 2, 1), ("A", "B", 4, 1)])),
            &double.values
        )
        .pass);
    }

    #[test]
    fn doubled_alpha_keeps_the_fleet_size() {
        let demand = demand_of(&[("A", "B", 2, 1), ("B", "A", 5, 1)]);
        let names = two_port_names();
        let tau = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let kappa = RouteTable::constant(DAY_STEPS, &both_pairs(), 1);
        let base = build_program(&demand, &tau, &kappa, &unit_timetable(), 2, &names, 1e-5)
            .unwrap();
        let doubled = build_program(&demand, &tau, &kappa, &unit_timetable(), 2, &names, 2e-5)
            .unwrap();
        let a = solve(&base, &SolveLimits::default()).unwrap();
        let b = solve(&doubled, &SolveLimits::default()).unwrap();
        assert_eq!(a.fleet_size, b.fleet_size);
    }

    #[test]
    fn validation_flags_a_corrupted_solution() {
        let demand = demand_of(&[("A", "B", 2, 1)]);
        let program = tiny_program(&demand);
        let solution = solve(&program, &SolveLimits::default()).unwrap();
        let mut corrupted = solution.values.clone();
        let victim = program
            .variables()
            .iter()
            .position(|v| {
                matches!(v.key, VarKey::Flight { i: 0, j: 1, t: 2, .. })
                    && corrupted[program.variable_index(v.key).unwrap()] > 0.5
            })
            .unwrap();
        corrupted[victim] -= 1.0;
        // Dropping a departure unbalances the origin's flow first.
        let report = validate(&program, &corrupted);
        assert!(!report.pass);
        let violation = report.first_violation.unwrap();
        assert!(violation.contains("balance at (A") && violation.contains("step 2"), "{violation}");

        // Zeroing everything keeps every balance row happy but starves
        // the demand row, so that is what gets named.
        let zeroed = vec![0.0; program.variables().len()];
        let report = validate(&program, &zeroed);
        assert!(!report.pass);
        assert_eq!(report.demand_max_shortfall, 1);
        assert_eq!(
            report.first_violation.as_deref(),
            Some("demand at A->B step 2")
        );
    }

    #[test]
    fn lp_bound_never_exceeds_the_integer_optimum() {
        use super::simplex::{solve_lp, LpStatus};
        let demand = demand_of(&[("A", "B", 2, 1), ("A", "B", 4, 1)]);
        let program = tiny_program(&demand);
        let lp = program.to_linear_program();
        let relaxation = solve_lp(
            &lp,
            &vec![0.0; lp.cols.len()],
            &vec![f64::INFINITY; lp.cols.len()],
        );
        assert_eq!(relaxation.status, LpStatus::Optimal);
        let integer = solve(&program, &SolveLimits::default()).unwrap();
        assert!(relaxation.objective <= integer.objective + 1e-9);
    }

    #[test]
    fn lp_view_matches_program_shape() {
        let demand = demand_of(&[("A", "B", 2, 1)]);
        let program = tiny_program(&demand);
        let lp = program.to_linear_program();
        assert_eq!(lp.cols.len(), program.variables().len());
        assert_eq!(lp.num_rows, program.rows().len());
        let alpha_cols = lp.cols.iter().filter(|c| c.cost == 1e-5).count();
        let flight_vars = program
            .variables()
            .iter()
            .filter(|v| matches!(v.key, VarKey::Flight { .. }))
            .count();
        assert_eq!(alpha_cols, flight_vars);
        assert_relative_eq!(
            lp.rhs.iter().sum::<f64>(),
            1.0,
            epsilon = 1e-12
        );
    }
}

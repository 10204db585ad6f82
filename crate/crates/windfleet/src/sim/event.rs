//! Ordered simulation event log.
//!
//! Events carry integer-microsecond times plus a space-separated
//! `key=value` payload, so a log serializes byte-identically across
//! runs. Same-instant events order by a fixed per-kind class (ends
//! before starts, landings before departures), then by insertion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Board,
    Depart,
    PhaseChange,
    Land,
    Disembark,
    ChargeStart,
    ChargeEnd,
    HoldStart,
    HoldEnd,
    MatchingFailure,
    Truncated,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Board => "board",
            EventKind::Depart => "depart",
            EventKind::PhaseChange => "phase_change",
            EventKind::Land => "land",
            EventKind::Disembark => "disembark",
            EventKind::ChargeStart => "charge_start",
            EventKind::ChargeEnd => "charge_end",
            EventKind::HoldStart => "hold_start",
            EventKind::HoldEnd => "hold_end",
            EventKind::MatchingFailure => "matching_failure",
            EventKind::Truncated => "truncated",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        ALL_KINDS.iter().copied().find(|k| k.label() == label)
    }

    /// Tie-break class for same-instant events.
    fn class(self) -> u8 {
        match self {
            EventKind::Land => 0,
            EventKind::Disembark => 1,
            EventKind::ChargeEnd => 2,
            EventKind::HoldStart => 3,
            EventKind::HoldEnd => 4,
            EventKind::Arrival => 5,
            EventKind::Board => 6,
            EventKind::MatchingFailure => 7,
            EventKind::Depart => 8,
            EventKind::PhaseChange => 9,
            EventKind::ChargeStart => 10,
            EventKind::Truncated => 11,
        }
    }
}

const ALL_KINDS: [EventKind; 12] = [
    EventKind::Arrival,
    EventKind::Board,
    EventKind::Depart,
    EventKind::PhaseChange,
    EventKind::Land,
    EventKind::Disembark,
    EventKind::ChargeStart,
    EventKind::ChargeEnd,
    EventKind::HoldStart,
    EventKind::HoldEnd,
    EventKind::MatchingFailure,
    EventKind::Truncated,
];

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// Microseconds from the start of the simulated day.
    pub time_us: i64,
    pub entity: String,
    pub kind: EventKind,
    /// Space-separated `key=value` pairs.
    pub payload: String,
}

impl Event {
    pub fn time_s(&self) -> f64 {
        self.time_us as f64 / 1e6
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.payload
            .split(' ')
            .filter_map(|pair| pair.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    pub fn field_f64(&self, key: &str) -> Option<f64> {
        self.field(key)?.parse().ok()
    }

    pub fn field_i64(&self, key: &str) -> Option<i64> {
        self.field(key)?.parse().ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    /// Orders a raw event collection into a log. The sort is stable, so
    /// same-time same-class events keep their insertion order.
    pub fn from_unordered(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| (e.time_us, e.kind.class()));
        Self { events }
    }

    pub fn is_time_ordered(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time_us <= w[1].time_us)
    }

    pub fn iter_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Structural invariants: nondecreasing time, legal per-aircraft
    /// depart/land alternation with every departure closed by a landing
    /// or a truncation marker, and no overlapping occupancy intervals
    /// on any FATO.
    pub fn verify(&self) -> Result<(), String> {
        if !self.is_time_ordered() {
            return Err("event times decrease".into());
        }
        let mut airborne: BTreeMap<&str, i64> = BTreeMap::new();
        for event in &self.events {
            match event.kind {
                EventKind::Depart => {
                    if airborne.insert(&event.entity, event.time_us).is_some() {
                        return Err(format!("{} departed while airborne", event.entity));
                    }
                }
                EventKind::Land | EventKind::Truncated => {
                    if airborne.remove(event.entity.as_str()).is_none() {
                        return Err(format!(
                            "{} for {} without a departure",
                            event.kind, event.entity
                        ));
                    }
                }
                _ => {}
            }
        }
        if let Some((entity, _)) = airborne.into_iter().next() {
            return Err(format!("{entity} still airborne with no truncation marker"));
        }
        self.verify_fato_exclusive()
    }

    /// Checks that FATO occupancy intervals on each pad never overlap.
    /// Depart and Land events carry their interval as `fato_from_us`
    /// and `fato_until_us`.
    pub fn verify_fato_exclusive(&self) -> Result<(), String> {
        let mut by_fato: BTreeMap<(String, String), Vec<(i64, i64)>> = BTreeMap::new();
        for event in &self.events {
            if !matches!(event.kind, EventKind::Depart | EventKind::Land) {
                continue;
            }
            let fato = event
                .field("fato")
                .ok_or_else(|| format!("{} event lacks fato field", event.kind))?;
            let vertiport = event
                .field(if event.kind == EventKind::Depart { "origin" } else { "destination" })
                .ok_or_else(|| format!("{} event lacks its vertiport field", event.kind))?;
            let from = event
                .field_i64("fato_from_us")
                .ok_or_else(|| format!("{} event lacks fato_from_us", event.kind))?;
            let until = event
                .field_i64("fato_until_us")
                .ok_or_else(|| format!("{} event lacks fato_until_us", event.kind))?;
            by_fato
                .entry((vertiport.to_string(), fato.to_string()))
                .or_default()
                .push((from, until));
        }
        for ((vertiport, fato), mut intervals) in by_fato {
            intervals.sort_unstable();
            for pair in intervals.windows(2) {
                if pair[1].0 < pair[0].1 {
                    return Err(format!(
                        "FATO {vertiport}/{fato} overlaps: [{}, {}) and [{}, {})",
                        pair[0].0, pair[0].1, pair[1].0, pair[1].1
                    ));
                }
            }
        }
        Ok(())
    }

    /// CSV rows `time_us,entity,kind,payload` in log order.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_us", "entity", "kind", "payload"])?;
        for event in &self.events {
            w.write_record([
                event.time_us.to_string(),
                event.entity.clone(),
                event.kind.label().to_string(),
                event.payload.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if found != "time_us,entity,kind,payload" {
            return Err(SimError::BadConfig(format!("event log header `{found}`")));
        }
        let mut events = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 4 {
                return Err(SimError::BadConfig(format!("event log line {line}: 4 fields needed")));
            }
            let time_us: i64 = row[0]
                .parse()
                .map_err(|_| SimError::BadConfig(format!("line {line}: bad time `{}`", &row[0])))?;
            let kind = EventKind::from_label(&row[2])
                .ok_or_else(|| SimError::BadConfig(format!("line {line}: bad kind `{}`", &row[2])))?;
            events.push(Event {
                time_us,
                entity: row[1].to_string(),
                kind,
                payload: row[3].to_string(),
            });
        }
        Ok(Self { events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time_us: i64, entity: &str, kind: EventKind, payload: &str) -> Event {
        Event { time_us, entity: entity.into(), kind, payload: payload.into() }
    }

    #[test]
    fn ordering_is_by_time_then_kind_class() {
        let log = EventLog::from_unordered(vec![
            ev(100, "AC001", EventKind::HoldStart, ""),
            ev(100, "AC001", EventKind::ChargeEnd, ""),
            ev(50, "pax:A:B:1", EventKind::Arrival, ""),
        ]);
        let kinds: Vec<EventKind> = log.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EventKind::Arrival, EventKind::ChargeEnd, EventKind::HoldStart]
        );
        assert!(log.is_time_ordered());
    }

    #[test]
    fn payload_fields_parse() {
        let event = ev(0, "AC001", EventKind::Depart, "origin=A pax=3 soc=0.95");
        assert_eq!(event.field("origin"), Some("A"));
        assert_eq!(event.field_f64("soc"), Some(0.95));
        assert_eq!(event.field("missing"), None);
    }

    #[test]
    fn unmatched_departure_fails_verification() {
        let base = "origin=A destination=B fato=F1 fato_from_us=0 fato_until_us=10";
        let open = EventLog::from_unordered(vec![ev(0, "AC001", EventKind::Depart, base)]);
        assert!(open.verify().is_err());

        let landed = EventLog::from_unordered(vec![
            ev(0, "AC001", EventKind::Depart, base),
            ev(
                900,
                "AC001",
                EventKind::Land,
                "origin=A destination=B fato=F1 fato_from_us=890 fato_until_us=900",
            ),
        ]);
        landed.verify().unwrap();

        let truncated = EventLog::from_unordered(vec![
            ev(0, "AC001", EventKind::Depart, base),
            ev(900, "AC001", EventKind::Truncated, "origin=A destination=B"),
        ]);
        truncated.verify().unwrap();
    }

    #[test]
    fn fato_overlap_is_caught() {
        let log = EventLog::from_unordered(vec![
            ev(
                0,
                "AC001",
                EventKind::Depart,
                "origin=A destination=B fato=F1 fato_from_us=0 fato_until_us=10000000",
            ),
            ev(
                5_000_000,
                "AC002",
                EventKind::Depart,
                "origin=A destination=B fato=F1 fato_from_us=5000000 fato_until_us=15000000",
            ),
            ev(
                30_000_000,
                "AC001",
                EventKind::Land,
                "origin=A destination=B fato=F1 fato_from_us=20000000 fato_until_us=30000000",
            ),
            ev(
                40_000_000,
                "AC002",
                EventKind::Land,
                "origin=A destination=B fato=F1 fato_from_us=31000000 fato_until_us=40000000",
            ),
        ]);
        let err = log.verify().unwrap_err();
        assert!(err.contains("overlaps"), "{err}");
    }

    #[test]
    fn touching_fato_intervals_do_not_overlap() {
        let log = EventLog::from_unordered(vec![
            ev(
                10,
                "AC001",
                EventKind::Depart,
                "origin=A destination=B fato=F1 fato_from_us=0 fato_until_us=10",
            ),
            ev(
                20,
                "AC002",
                EventKind::Depart,
                "origin=A destination=B fato=F1 fato_from_us=10 fato_until_us=20",
            ),
            ev(100, "AC001", EventKind::Truncated, ""),
            ev(100, "AC002", EventKind::Truncated, ""),
        ]);
        log.verify().unwrap();
    }

    #[test]
    fn csv_round_trips() {
        let log = EventLog::from_unordered(vec![
            ev(0, "pax:A:B:1", EventKind::Arrival, "origin=A destination=B"),
            ev(100, "AC001", EventKind::ChargeStart, "vertiport=A from_soc=0.2 to_soc=1"),
        ]);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let back = EventLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(log, back);
    }

    #[test]
    fn bad_csv_kind_is_rejected() {
        let text = "time_us,entity,kind,payload\n0,AC001,teleport,\n";
        assert!(EventLog::read_csv(text.as_bytes()).is_err());
    }
}

//! CSV ingest and export for wind fields.
//!
//! Schema (exact header, one row per grid point and hour):
//! `timestamp_utc,grid_id,lat_deg,lon_deg,wind_speed_mph,wind_dir_from_deg`
//!
//! Speeds are statute mph and directions are meteorological "from"
//! bearings; both are converted on ingest. Export writes shortest
//! round-trip decimal so serialize -> ingest reproduces the field
//! bit-for-bit.

use std::io;

use chrono::{DateTime, Utc};

use super::{WindError, WindField, WindRecord};
use crate::geo::LatLon;

const HEADER: [&str; 6] = [
    "timestamp_utc",
    "grid_id",
    "lat_deg",
    "lon_deg",
    "wind_speed_mph",
    "wind_dir_from_deg",
];

fn parse_f64(
    raw: &str,
    line: u64,
    field: &'static str,
    min: f64,
    max: f64,
) -> Result<f64, WindError> {
    let v: f64 = raw.trim().parse().map_err(|_| WindError::Value {
        line,
        field,
        reason: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() || v < min || v > max {
        return Err(WindError::Value {
            line,
            field,
            reason: format!("{v} outside [{min}, {max}]"),
        });
    }
    Ok(v)
}

/// Reads and validates a wind CSV into a gap-free field.
pub fn ingest_wind_csv<R: io::Read>(reader: R) -> Result<WindField, WindError> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    {
        let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        let expected = HEADER.join(",");
        if found != expected {
            return Err(WindError::Header { expected, found });
        }
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != HEADER.len() {
            return Err(WindError::Value {
                line,
                field: "row",
                reason: format!("expected {} columns, found {}", HEADER.len(), row.len()),
            });
        }
        let timestamp = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| WindError::Value {
                line,
                field: "timestamp_utc",
                reason: e.to_string(),
            })?
            .with_timezone(&Utc);
        if timestamp.timestamp() % 3600 != 0 || timestamp.timestamp_subsec_nanos() != 0 {
            return Err(WindError::NotOnHour { line });
        }
        let grid_id = row[1].to_string();
        if grid_id.is_empty() {
            return Err(WindError::Value {
                line,
                field: "grid_id",
                reason: "empty".into(),
            });
        }
        let lat = parse_f64(&row[2], line, "lat_deg", -90.0, 90.0)?;
        let lon = parse_f64(&row[3], line, "lon_deg", -180.0, 180.0)?;
        let mph = parse_f64(&row[4], line, "wind_speed_mph", 0.0, 500.0)?;
        let dir = parse_f64(&row[5], line, "wind_dir_from_deg", -360.0, 720.0)?.rem_euclid(360.0);
        let dir = if dir >= 360.0 { 0.0 } else { dir };
        records.push(WindRecord {
            timestamp,
            grid_id,
            position: LatLon::new(lat, lon),
            speed_mph: mph,
            dir_from_deg: dir,
        });
    }
    WindField::from_records(records)
}

/// Writes the field back in schema order: hours outer, grid points inner.
pub fn write_wind_csv<W: io::Write>(field: &WindField, writer: W) -> Result<(), WindError> {
    let mut w = ::csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for h in 0..field.hours() as usize {
        for (p, point) in field.points().iter().enumerate() {
            let (mph, dir) = field.met_at(p, h);
            let ts = super::hour_to_time(field.start_hour() + h as i64);
            w.write_record([
                ts.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                point.id.clone(),
                format!("{}", point.position.lat_deg),
                format!("{}", point.position.lon_deg),
                format!("{mph}"),
                format!("{dir}"),
            ])?;
        }
    }
    w.flush().map_err(WindError::Io)?;
    Ok(())
}

impl WindField {
    pub fn ingest_csv<R: io::Read>(reader: R) -> Result<Self, WindError> {
        ingest_wind_csv(reader)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), WindError> {
        write_wind_csv(self, writer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ms_to_mph;
    use crate::wind::{SynthSpec, WindVector};

    #[test]
    fn ingest_serialize_ingest_is_idempotent() {
        let field = WindField::synthesize(&SynthSpec::default_desk(48), 7).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let again = WindField::ingest_csv(buf.as_slice()).unwrap();
        assert_eq!(field, again);
        let mut buf2 = Vec::new();
        again.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let text = "time,grid_id,lat_deg,lon_deg,wind_speed_mph,wind_dir_from_deg\n";
        assert!(matches!(
            ingest_wind_csv(text.as_bytes()),
            Err(WindError::Header { .. })
        ));
    }

    #[test]
    fn negative_speed_is_rejected_with_line() {
        let text = "timestamp_utc,grid_id,lat_deg,lon_deg,wind_speed_mph,wind_dir_from_deg\n\
                    2025-01-01T00:00:00Z,a,36.0,-121.0,-3.0,90.0\n";
        match ingest_wind_csv(text.as_bytes()) {
            Err(WindError::Value { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "wind_speed_mph");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn off_hour_timestamp_is_rejected() {
        let text = "timestamp_utc,grid_id,lat_deg,lon_deg,wind_speed_mph,wind_dir_from_deg\n\
                    2025-01-01T00:30:00Z,a,36.0,-121.0,3.0,90.0\n";
        assert!(matches!(
            ingest_wind_csv(text.as_bytes()),
            Err(WindError::NotOnHour { line: 2 })
        ));
    }

    #[test]
    fn speed_conversion_applies_on_ingest() {
        let text = "timestamp_utc,grid_id,lat_deg,lon_deg,wind_speed_mph,wind_dir_from_deg\n\
                    2025-01-01T00:00:00Z,a,36.0,-121.0,25.5,270.0\n";
        let f = ingest_wind_csv(text.as_bytes()).unwrap();
        let v: WindVector = f
            .sample(
                crate::geo::LatLon::new(36.0, -121.0),
                DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
                    .unwrap()
                    .with_timezone(&Utc),
            )
            .unwrap();
        assert!((ms_to_mph(v.speed_ms()) - 25.5).abs() < 1e-9);
        assert!((v.east_ms - 11.39952).abs() < 1e-9, "east {}", v.east_ms);
        assert!(v.north_ms.abs() < 1e-9);
    }
}

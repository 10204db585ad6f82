//! Physical constants and unit conversions used across the toolkit.
//!
//! All internal computation is SI (meters, seconds, kilograms, watts).
//! Statute miles, feet and miles-per-hour appear only at I/O boundaries
//! and in configuration files, and are converted on entry.

/// Standard gravitational acceleration, m/s^2.
pub const GRAVITY_MS2: f64 = 9.80665;

/// Sea-level air density, kg/m^3.
pub const AIR_DENSITY_KGM3: f64 = 1.225;

/// One statute mile per hour in meters per second.
pub const MPH_TO_MS: f64 = 0.44704;

/// One international foot in meters.
pub const FT_TO_M: f64 = 0.3048;

/// One statute mile in meters.
pub const MILE_TO_M: f64 = 1609.344;

/// One foot per minute in meters per second.
pub const FT_PER_MIN_TO_MS: f64 = FT_TO_M / 60.0;

/// One kilowatt-hour in joules.
pub const KWH_TO_J: f64 = 3.6e6;

pub fn mph_to_ms(mph: f64) -> f64 {
    mph * MPH_TO_MS
}

pub fn ms_to_mph(ms: f64) -> f64 {
    ms / MPH_TO_MS
}

pub fn ft_to_m(ft: f64) -> f64 {
    ft * FT_TO_M
}

pub fn miles_to_m(mi: f64) -> f64 {
    mi * MILE_TO_M
}

pub fn m_to_miles(m: f64) -> f64 {
    m / MILE_TO_M
}

pub fn joules_to_kwh(j: f64) -> f64 {
    j / KWH_TO_J
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mph_round_trip() {
        let v = 25.5;
        assert!((ms_to_mph(mph_to_ms(v)) - v).abs() < 1e-12);
        assert!((mph_to_ms(25.5) - 11.39952).abs() < 1e-9);
    }

    #[test]
    fn mile_and_foot_scale() {
        assert_eq!(miles_to_m(1.0), 1609.344);
        assert_eq!(ft_to_m(1.0), 0.3048);
        assert!((ft_to_m(300.0) / 60.0 - 1.524).abs() < 1e-12);
    }
}

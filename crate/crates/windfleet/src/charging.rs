//! Nonlinear battery charging: constant power up to a knee, then power
//! tapering linearly to a final value at full charge.
//!
//! ```text
//! P(s) = p_const                                  s <= knee
//! P(s) = p_const + (s - knee) * (p_end - p_const) / (1 - knee)
//! ```
//!
//! Charge time between fractions has a closed form. Over the constant
//! regime it is `C * ds / p_const`; over the taper, with `P(s) = a - b*s`,
//!
//! ```text
//! t = (C / b) * ln((a - b*s1) / (a - b*s2))
//! ```
//!
//! At the defaults (160 kWh, 320 kW to 20%, tapering to 32 kW at 100%)
//! a full 20% -> 100% charge takes (160/360) * ln(10) hours, about
//! 61.4 minutes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::soc::SocLadder;
use crate::timegrid::TimeGrid;

#[derive(Debug, Error, PartialEq)]
pub enum ChargeError {
    #[error("charger model invalid: {0}")]
    BadModel(String),
    #[error("state of charge {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("charge interval reversed: from {from} to {to}")]
    ReversedInterval { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChargerModel {
    pub capacity_kwh: f64,
    /// Power held constant below the knee, kW.
    pub power_initial_kw: f64,
    /// Power at 100% state of charge, kW.
    pub power_final_kw: f64,
    /// State-of-charge fraction where the taper begins.
    pub knee_fraction: f64,
}

impl Default for ChargerModel {
    fn default() -> Self {
        Self {
            capacity_kwh: 160.0,
            power_initial_kw: 320.0,
            power_final_kw: 32.0,
            knee_fraction: 0.2,
        }
    }
}

/// Per-level charge durations for the optimizer: entry k-1 holds the
/// time to climb from level k-1 to level k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingTimetable {
    pub ladder: SocLadder,
    pub seconds: Vec<f64>,
    pub steps: Vec<u32>,
}

impl ChargerModel {
    pub fn validate(&self) -> Result<(), ChargeError> {
        let bad = |m: &str| Err(ChargeError::BadModel(m.to_string()));
        if !(self.capacity_kwh > 0.0 && self.capacity_kwh.is_finite()) {
            return bad("capacity_kwh must be positive");
        }
        if !(self.power_initial_kw > 0.0 && self.power_initial_kw.is_finite()) {
            return bad("power_initial_kw must be positive");
        }
        if !(self.power_final_kw > 0.0 && self.power_final_kw <= self.power_initial_kw) {
            return bad("power_final_kw must be in (0, power_initial_kw]");
        }
        if !(0.0..1.0).contains(&self.knee_fraction) {
            return bad("knee_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Charging power at a state-of-charge fraction, kW.
    pub fn charge_power_kw(&self, soc: f64) -> Result<f64, ChargeError> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(ChargeError::FractionOutOfRange(soc));
        }
        if soc <= self.knee_fraction {
            Ok(self.power_initial_kw)
        } else {
            let slope =
                (self.power_final_kw - self.power_initial_kw) / (1.0 - self.knee_fraction);
            Ok(self.power_initial_kw + (soc - self.knee_fraction) * slope)
        }
    }

    /// Closed-form charge time from one fraction to another, seconds.
    pub fn charge_time_s(&self, from: f64, to: f64) -> Result<f64, ChargeError> {
        self.validate()?;
        for s in [from, to] {
            if !(0.0..=1.0).contains(&s) {
                return Err(ChargeError::FractionOutOfRange(s));
            }
        }
        if to < from {
            return Err(ChargeError::ReversedInterval { from, to });
        }
        let mut hours = 0.0;
        let knee = self.knee_fraction;
        if from < knee {
            let upper = to.min(knee);
            hours += self.capacity_kwh * (upper - from) / self.power_initial_kw;
        }
        if to > knee {
            let lower = from.max(knee);
            // Taper P(s) = a - b*s.
            let b = (self.power_initial_kw - self.power_final_kw) / (1.0 - knee);
            if b == 0.0 {
                hours += self.capacity_kwh * (to - lower) / self.power_initial_kw;
            } else {
                let a = self.power_initial_kw + knee * b;
                hours += self.capacity_kwh / b * ((a - b * lower) / (a - b * to)).ln();
            }
        }
        Ok(hours * 3600.0)
    }

    /// Durations to climb each single level of the ladder, both exact
    /// seconds and grid steps rounded up (exact multiples stay exact).
    pub fn build_timetable(
        &self,
        ladder: SocLadder,
        grid: TimeGrid,
    ) -> Result<ChargingTimetable, ChargeError> {
        let mut seconds = Vec::with_capacity(ladder.top() as usize);
        let mut steps = Vec::with_capacity(ladder.top() as usize);
        for k in 1..=ladder.top() {
            let from = ladder.fraction(k - 1).expect("level within ladder");
            let to = ladder.fraction(k).expect("level within ladder");
            let t = self.charge_time_s(from, to)?;
            seconds.push(t);
            steps.push(grid.steps_for_duration(t));
        }
        Ok(ChargingTimetable {
            ladder,
            seconds,
            steps,
        })
    }
}

impl ChargingTimetable {
    /// Steps needed to charge from level x up to level y.
    pub fn steps_between(&self, x: u32, y: u32) -> u32 {
        self.steps[x as usize..y as usize].iter().sum()
    }

    /// Exact seconds to charge from level x up to level y.
    pub fn seconds_between(&self, x: u32, y: u32) -> f64 {
        self.seconds[x as usize..y as usize].iter().sum()
    }

    /// CSV rows `k,gamma_seconds,gamma_steps` for levels 1..=K.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), std::io::Error> {
        let mut w = ::csv::Writer::from_writer(writer);
        w.write_record(["k", "gamma_seconds", "gamma_steps"])
            .map_err(io_of_csv)?;
        for (i, (s, n)) in self.seconds.iter().zip(&self.steps).enumerate() {
            w.write_record([format!("{}", i + 1), format!("{s}"), format!("{n}")])
                .map_err(io_of_csv)?;
        }
        w.flush()
    }

    /// Parses rows written by [`Self::write_csv`]; levels must be the
    /// contiguous sequence 1..=K.
    pub fn read_csv<R: std::io::Read>(
        reader: R,
        ladder: SocLadder,
    ) -> Result<ChargingTimetable, ChargeError> {
        let mut rdr = ::csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(::csv::Trim::All)
            .from_reader(reader);
        let bad = |m: String| ChargeError::BadModel(m);
        let headers = rdr
            .headers()
            .map_err(|e| bad(format!("timetable header: {e}")))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["k", "gamma_seconds", "gamma_steps"] {
            return Err(bad("timetable header must be `k,gamma_seconds,gamma_steps`".into()));
        }
        let mut seconds = Vec::new();
        let mut steps = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| bad(format!("timetable row: {e}")))?;
            if row.len() != 3 {
                return Err(bad(format!("timetable row {} must have 3 fields", i + 1)));
            }
            let k: u32 = row[0].parse().map_err(|_| bad(format!("bad level `{}`", &row[0])))?;
            if k as usize != i + 1 {
                return Err(bad(format!("levels must be contiguous; expected {}, found {k}", i + 1)));
            }
            let s: f64 = row[1]
                .parse()
                .map_err(|_| bad(format!("bad gamma_seconds `{}`", &row[1])))?;
            let n: u32 = row[2]
                .parse()
                .map_err(|_| bad(format!("bad gamma_steps `{}`", &row[2])))?;
            if !(s.is_finite() && s >= 0.0) {
                return Err(bad(format!("gamma_seconds must be nonnegative, found {s}")));
            }
            seconds.push(s);
            steps.push(n);
        }
        if seconds.len() != ladder.top() as usize {
            return Err(bad(format!(
                "timetable has {} levels, ladder has {}",
                seconds.len(),
                ladder.top()
            )));
        }
        Ok(ChargingTimetable {
            ladder,
            seconds,
            steps,
        })
    }
}

fn io_of_csv(e: ::csv::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive-step numeric integration of dt = C/P(s) ds, independent
    /// of the closed form.
    fn numeric_charge_time_s(m: &ChargerModel, from: f64, to: f64) -> f64 {
        let n = 200_000;
        let ds = (to - from) / n as f64;
        let mut hours = 0.0;
        for i in 0..n {
            let s0 = from + ds * i as f64;
            let s1 = s0 + ds;
            let sm = 0.5 * (s0 + s1);
            // Simpson's rule on 1/P.
            let f = |s: f64| m.capacity_kwh / m.charge_power_kw(s).unwrap();
            hours += ds / 6.0 * (f(s0) + 4.0 * f(sm) + f(s1));
        }
        hours * 3600.0
    }

    #[test]
    fn full_recharge_matches_logarithmic_form() {
        let m = ChargerModel::default();
        let t = m.charge_time_s(0.2, 1.0).unwrap();
        let want = 160.0 / 360.0 * 10f64.ln() * 3600.0;
        assert!((t - want).abs() < 1e-6, "t {t} want {want}");
        assert!((t / 60.0 - 61.4).abs() < 0.05);
    }

    #[test]
    fn constant_regime_is_linear() {
        let m = ChargerModel::default();
        let t = m.charge_time_s(0.0, 0.2).unwrap();
        assert!((t - 0.1 * 3600.0).abs() < 1e-9);
    }

    #[test]
    fn zero_width_interval_is_zero() {
        let m = ChargerModel::default();
        assert_eq!(m.charge_time_s(0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn reversed_interval_is_rejected() {
        let m = ChargerModel::default();
        assert_eq!(
            m.charge_time_s(0.9, 0.2),
            Err(ChargeError::ReversedInterval { from: 0.9, to: 0.2 })
        );
    }

    #[test]
    fn flat_taper_degenerates_to_constant_power() {
        let m = ChargerModel {
            power_final_kw: 320.0,
            ..ChargerModel::default()
        };
        let t = m.charge_time_s(0.2, 1.0).unwrap();
        assert!((t - 160.0 * 0.8 / 320.0 * 3600.0).abs() < 1e-9);
    }

    #[test]
    fn timetable_is_nondecreasing_and_rounds_up() {
        let ladder = SocLadder::new(8).unwrap();
        let grid = TimeGrid::new(300, 288, 14).unwrap();
        let tt = ChargerModel::default().build_timetable(ladder, grid).unwrap();
        for w in tt.seconds.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "timetable must be nondecreasing");
        }
        for (s, n) in tt.seconds.iter().zip(&tt.steps) {
            assert_eq!(*n, grid.steps_for_duration(*s));
            assert!(f64::from(*n) * 300.0 >= *s - 1e-6);
        }
        let total: f64 = tt.seconds.iter().sum();
        let want = 160.0 / 360.0 * 10f64.ln() * 3600.0;
        assert!((total - want).abs() < 1e-6);
    }

    #[test]
    fn timetable_csv_round_trip() {
        let ladder = SocLadder::new(8).unwrap();
        let grid = TimeGrid::new(300, 288, 14).unwrap();
        let tt = ChargerModel::default().build_timetable(ladder, grid).unwrap();
        let mut buf = Vec::new();
        tt.write_csv(&mut buf).unwrap();
        let back = ChargingTimetable::read_csv(buf.as_slice(), ladder).unwrap();
        assert_eq!(tt, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn closed_form_matches_numeric(from in 0.0..0.99f64, width in 0.001..0.5f64) {
            let m = ChargerModel::default();
            let to = (from + width).min(1.0);
            let closed = m.charge_time_s(from, to).unwrap();
            let numeric = numeric_charge_time_s(&m, from, to);
            prop_assert!((closed - numeric).abs() < 1e-3, "closed {closed} numeric {numeric}");
        }

        #[test]
        fn time_is_monotone_in_interval(from in 0.0..0.5f64, w1 in 0.01..0.25f64, w2 in 0.26..0.5f64) {
            let m = ChargerModel::default();
            let t1 = m.charge_time_s(from, from + w1).unwrap();
            let t2 = m.charge_time_s(from, from + w2).unwrap();
            prop_assert!(t2 > t1);
        }
    }
}

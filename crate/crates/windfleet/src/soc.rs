//! Discrete state-of-charge ladder.
//!
//! Level 0 is the operational reserve (20% of nominal capacity) and the
//! top level K is a full battery; levels map linearly across the usable
//! band, so each level spans `0.8 * capacity / K` of energy. Flights and
//! charges in the fleet optimizer move aircraft whole levels at a time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of nominal capacity held back as the operational reserve.
pub const RESERVE_FRACTION: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum SocError {
    #[error("state-of-charge ladder needs at least one level")]
    NoLevels,
    #[error("level {level} exceeds ladder top {top}")]
    LevelOutOfRange { level: u32, top: u32 },
}

/// The ladder of discrete charge levels 0..=K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SocLadder {
    levels: u32,
}

impl SocLadder {
    pub fn new(levels: u32) -> Result<Self, SocError> {
        if levels == 0 {
            return Err(SocError::NoLevels);
        }
        Ok(Self { levels })
    }

    /// The top level K.
    pub fn top(self) -> u32 {
        self.levels
    }

    /// State-of-charge fraction for a level: `0.2 + 0.8 * level / K`.
    pub fn fraction(self, level: u32) -> Result<f64, SocError> {
        if level > self.levels {
            return Err(SocError::LevelOutOfRange {
                level,
                top: self.levels,
            });
        }
        Ok(RESERVE_FRACTION + (1.0 - RESERVE_FRACTION) * f64::from(level) / f64::from(self.levels))
    }

    /// Usable energy spanned by one level, kWh.
    pub fn level_span_kwh(self, capacity_kwh: f64) -> f64 {
        (1.0 - RESERVE_FRACTION) * capacity_kwh / f64::from(self.levels)
    }

    /// Reserve energy below level 0, kWh.
    pub fn reserve_kwh(self, capacity_kwh: f64) -> f64 {
        RESERVE_FRACTION * capacity_kwh
    }

    /// Highest level whose fraction does not exceed `fraction` (within a
    /// small tolerance for accumulated float drift), clamped to [0, K].
    pub fn level_floor(self, fraction: f64) -> u32 {
        let k = f64::from(self.levels);
        let raw = ((fraction - RESERVE_FRACTION) / (1.0 - RESERVE_FRACTION) * k + 1e-9).floor();
        if raw < 0.0 {
            0
        } else if raw > k {
            self.levels
        } else {
            raw as u32
        }
    }

    /// Whole levels consumed by an energy draw: `ceil(energy / span)`,
    /// at least 1 for any positive draw. Exact multiples do not bump up.
    pub fn levels_for_energy(self, energy_kwh: f64, capacity_kwh: f64) -> u32 {
        if energy_kwh <= 0.0 {
            return 0;
        }
        let span = self.level_span_kwh(capacity_kwh);
        let k = (energy_kwh / span - 1e-9).ceil();
        (k.max(1.0)) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder_fractions() {
        let ladder = SocLadder::new(8).unwrap();
        assert_eq!(ladder.fraction(0).unwrap(), 0.2);
        assert_eq!(ladder.fraction(8).unwrap(), 1.0);
        assert!((ladder.fraction(4).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(
            ladder.fraction(9),
            Err(SocError::LevelOutOfRange { level: 9, top: 8 })
        );
    }

    #[test]
    fn level_span_and_reserve() {
        let ladder = SocLadder::new(8).unwrap();
        assert!((ladder.level_span_kwh(160.0) - 16.0).abs() < 1e-12);
        assert!((ladder.reserve_kwh(160.0) - 32.0).abs() < 1e-12);
    }

    #[test]
    fn energy_to_levels_rounds_up_without_bumping_exact() {
        let ladder = SocLadder::new(8).unwrap();
        assert_eq!(ladder.levels_for_energy(16.0, 160.0), 1);
        assert_eq!(ladder.levels_for_energy(16.01, 160.0), 2);
        assert_eq!(ladder.levels_for_energy(0.5, 160.0), 1);
        assert_eq!(ladder.levels_for_energy(0.0, 160.0), 0);
        assert_eq!(ladder.levels_for_energy(128.0, 160.0), 8);
    }

    #[test]
    fn level_floor_inverts_fraction() {
        let ladder = SocLadder::new(8).unwrap();
        for k in 0..=8 {
            assert_eq!(ladder.level_floor(ladder.fraction(k).unwrap()), k);
        }
        assert_eq!(ladder.level_floor(0.75), 5);
        assert_eq!(ladder.level_floor(0.1), 0);
        assert_eq!(ladder.level_floor(1.5), 8);
    }
}

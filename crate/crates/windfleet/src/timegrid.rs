//! Uniform decision grid over a cyclic operating day.
//!
//! The optimizer and simulator share one grid: `day_steps` decision
//! steps of `step_s` seconds cover the operating day, and the horizon
//! extends by the longest flight plus one step so every departure made
//! during the day can land and every charge can finish inside the model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TimeGridError {
    #[error("step duration must be positive")]
    ZeroStep,
    #[error("operating day must contain at least one step")]
    ZeroDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    step_s: u32,
    day_steps: u32,
    horizon: u32,
}

impl TimeGrid {
    /// `max_flight_steps` is the longest flight duration on the grid, in
    /// steps; the horizon becomes `day_steps + max_flight_steps + 1`.
    pub fn new(step_s: u32, day_steps: u32, max_flight_steps: u32) -> Result<Self, TimeGridError> {
        if step_s == 0 {
            return Err(TimeGridError::ZeroStep);
        }
        if day_steps == 0 {
            return Err(TimeGridError::ZeroDay);
        }
        Ok(Self {
            step_s,
            day_steps,
            horizon: day_steps + max_flight_steps + 1,
        })
    }

    pub fn step_s(self) -> u32 {
        self.step_s
    }

    pub fn day_steps(self) -> u32 {
        self.day_steps
    }

    /// The final grid index T; decision epochs are 0..=T.
    pub fn horizon(self) -> u32 {
        self.horizon
    }

    /// Seconds at the start of step `t`.
    pub fn instant_s(self, t: u32) -> f64 {
        f64::from(t) * f64::from(self.step_s)
    }

    /// Step index for a request instant: rounds up to the next boundary,
    /// an instant exactly on a boundary lands on that boundary, and
    /// instants past the operating day spill into its final step.
    pub fn step_of_instant(self, instant_s: f64) -> u32 {
        if instant_s <= 0.0 {
            return 0;
        }
        let raw = (instant_s / f64::from(self.step_s) - 1e-9).ceil();
        let raw = if raw < 0.0 { 0.0 } else { raw };
        (raw as u32).min(self.day_steps)
    }

    /// Whole steps covering a duration (ceiling, minimum 1); exact
    /// multiples do not bump up.
    pub fn steps_for_duration(self, duration_s: f64) -> u32 {
        let raw = (duration_s / f64::from(self.step_s) - 1e-9).ceil();
        if raw < 1.0 {
            1
        } else {
            raw as u32
        }
    }

    /// Hour of day (0..24) at the start of step `t`, wrapping past
    /// midnight so the horizon extension reuses the daily pattern.
    pub fn hour_of_step(self, t: u32) -> u32 {
        (u64::from(t) * u64::from(self.step_s) / 3600 % 24) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(300, 288, 14).unwrap()
    }

    #[test]
    fn horizon_extends_past_day() {
        assert_eq!(grid().horizon(), 303);
    }

    #[test]
    fn instant_rounds_up_and_boundary_sticks() {
        let g = grid();
        assert_eq!(g.step_of_instant(600.0), 2);
        assert_eq!(g.step_of_instant(600.0001), 3);
        assert_eq!(g.step_of_instant(599.9), 2);
        assert_eq!(g.step_of_instant(0.0), 0);
    }

    #[test]
    fn late_instants_spill_into_final_step() {
        let g = grid();
        assert_eq!(g.step_of_instant(86_400.0), 288);
        assert_eq!(g.step_of_instant(90_000.0), 288);
    }

    #[test]
    fn duration_steps_round_up_with_floor_one() {
        let g = grid();
        assert_eq!(g.steps_for_duration(300.0), 1);
        assert_eq!(g.steps_for_duration(300.1), 2);
        assert_eq!(g.steps_for_duration(1.0), 1);
        assert_eq!(g.steps_for_duration(0.0), 1);
        assert_eq!(g.steps_for_duration(3600.0), 12);
    }

    #[test]
    fn hour_wraps_past_midnight() {
        let g = grid();
        assert_eq!(g.hour_of_step(0), 0);
        assert_eq!(g.hour_of_step(12), 1);
        assert_eq!(g.hour_of_step(288), 0);
        assert_eq!(g.hour_of_step(300), 1);
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::TouPeriod;

/// Uniform discrete time axis shared by both networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Wall-clock hour of step 0 (5 = 05:00).
    pub start_clock: u32,
    pub step_minutes: u32,
    pub num_steps: u32,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { start_clock: 5, step_minutes: 5, num_steps: 288 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("step {t} is outside the horizon 0..{num_steps}")]
pub struct TimeGridError {
    pub t: usize,
    pub num_steps: u32,
}

/// Wall-clock position of a step, `Day<d> HH:MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockLabel {
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
}

impl fmt::Display for ClockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Day{} {:02}:{:02}", self.day, self.hour, self.minute)
    }
}

impl TimeGrid {
    pub fn len(&self) -> usize {
        self.num_steps as usize
    }

    pub fn is_empty(&self) -> bool {
        self.num_steps == 0
    }

    pub fn step_hours(&self) -> f64 {
        f64::from(self.step_minutes) / 60.0
    }

    pub fn check(&self, t: usize) -> Result<(), TimeGridError> {
        if t < self.len() {
            Ok(())
        } else {
            Err(TimeGridError { t, num_steps: self.num_steps })
        }
    }

    /// Minutes since midnight of day 0 at the start of step `t`.
    fn absolute_minutes(&self, t: usize) -> u64 {
        u64::from(self.start_clock) * 60 + t as u64 * u64::from(self.step_minutes)
    }

    pub fn clock(&self, t: usize) -> Result<ClockLabel, TimeGridError> {
        self.check(t)?;
        let minutes = self.absolute_minutes(t);
        let day = (minutes / 1440) as u32;
        let of_day = (minutes % 1440) as u32;
        Ok(ClockLabel { day, hour: of_day / 60, minute: of_day % 60 })
    }

    pub fn minute_of_day(&self, t: usize) -> Result<u32, TimeGridError> {
        self.check(t)?;
        Ok((self.absolute_minutes(t) % 1440) as u32)
    }

    /// TOU period implied by the wall clock at step `t`.
    pub fn tou_period(&self, t: usize) -> Result<TouPeriod, TimeGridError> {
        self.minute_of_day(t).map(TouPeriod::for_minute_of_day)
    }
}

/// Wall-clock label for step `t`, e.g. `Day0 05:00`.
pub fn timestep_clock(t: usize, grid: &TimeGrid) -> Result<String, TimeGridError> {
    grid.clock(t).map(|c| c.to_string())
}

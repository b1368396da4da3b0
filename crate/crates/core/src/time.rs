//! Simulation clock with integer nanosecond resolution.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Absolute simulated time or a duration, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimTime((ms * 1e6).round().max(0.0) as u64)
    }

    pub fn from_micros_f64(us: f64) -> Self {
        SimTime((us * 1e3).round().max(0.0) as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 * 1e-3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Smallest time `>= self` of the form `offset + k * period`.
    pub fn next_on_grid(self, offset: SimTime, period: SimTime) -> SimTime {
        if self <= offset {
            return offset;
        }
        let k = (self.0 - offset.0).div_ceil(period.0);
        SimTime(offset.0 + k * period.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_alignment() {
        let period = SimTime::from_millis_f64(100.0);
        let offset = SimTime::from_millis_f64(17.0);
        assert_eq!(SimTime::ZERO.next_on_grid(offset, period), offset);
        assert_eq!(offset.next_on_grid(offset, period), offset);
        assert_eq!(
            SimTime::from_millis_f64(18.0).next_on_grid(offset, period),
            SimTime::from_millis_f64(117.0)
        );
        assert_eq!(
            SimTime::from_millis_f64(217.0).next_on_grid(offset, period),
            SimTime::from_millis_f64(217.0)
        );
    }

    #[test]
    fn conversions() {
        assert_eq!(SimTime::from_secs_f64(1.5).as_nanos(), 1_500_000_000);
        assert_eq!(SimTime::from_micros_f64(58.0).as_nanos(), 58_000);
        assert!((SimTime::from_millis_f64(2.5).as_secs_f64() - 0.0025).abs() < 1e-15);
    }
}

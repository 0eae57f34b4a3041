//! Exact cost arithmetic. Costs are carried as integer micro-units so that
//! ledgers and budget comparisons never accumulate rounding error.

use core::fmt;
use core::iter::Sum;
use core::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-point scale: one cost unit is `SCALE` ticks.
pub const SCALE: u64 = 1_000_000;

/// A non-negative spatio-temporal cost in exact micro-units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cost(u64);

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub const fn from_ticks(ticks: u64) -> Self {
        Cost(ticks)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    /// Converts a real-valued cost, rounding to the nearest micro-unit.
    pub fn from_units(units: f64) -> Result<Self> {
        if !units.is_finite() || units < 0.0 {
            return Err(Error::Range(alloc::format!("cost must be finite and >= 0, got {units}")));
        }
        let ticks = libm::round(units * SCALE as f64);
        if ticks > u64::MAX as f64 {
            return Err(Error::Range(alloc::format!("cost {units} overflows")));
        }
        Ok(Cost(ticks as u64))
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn checked_sub(self, rhs: Cost) -> Option<Cost> {
        self.0.checked_sub(rhs.0).map(Cost)
    }

    /// Exact ratio of two costs, or of a cost and a count, as f64.
    pub fn per(self, count: u64) -> f64 {
        self.units() / count as f64
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0.checked_add(rhs.0).expect("cost overflow"))
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl Sub for Cost {
    type Output = Cost;
    fn sub(self, rhs: Cost) -> Cost {
        Cost(self.0.checked_sub(rhs.0).expect("cost underflow"))
    }
}

impl Mul<u64> for Cost {
    type Output = Cost;
    fn mul(self, rhs: u64) -> Cost {
        Cost(self.0.checked_mul(rhs).expect("cost overflow"))
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / SCALE;
        let frac = self.0 % SCALE;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let s = alloc::format!("{frac:06}");
            write!(f, "{whole}.{}", s.trim_end_matches('0'))
        }
    }
}

//! Fixed-point simulation clock.
//!
//! Times are counted in ticks of 2^-32 time units in a `u128`. Sums of
//! waiting times are exact, and multiplying every ISI by an integer factor
//! multiplies every derived time by exactly that factor.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub const FRACTION_BITS: u32 = 32;
const TICKS_PER_UNIT: f64 = (1u64 << FRACTION_BITS) as f64;
/// Largest representable value, in time units.
pub const MAX_UNITS: f64 = (1u128 << 95) as f64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ticks(pub u128);

impl Ticks {
    pub const ZERO: Ticks = Ticks(0);

    /// Rounds a nonnegative time to the nearest tick.
    pub fn from_units(x: f64) -> Result<Self> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("time must be nonnegative, got {x}")));
        }
        if x >= MAX_UNITS {
            return Err(Error::TimeOverflow(x));
        }
        Ok(Ticks((x * TICKS_PER_UNIT).round() as u128))
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT
    }

    pub fn checked_add(self, rhs: Ticks) -> Option<Ticks> {
        self.0.checked_add(rhs.0).map(Ticks)
    }

    pub fn checked_mul(self, factor: u64) -> Option<Ticks> {
        self.0.checked_mul(u128::from(factor)).map(Ticks)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Ticks {
    type Output = Ticks;
    fn add(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 + rhs.0)
    }
}

impl AddAssign for Ticks {
    fn add_assign(&mut self, rhs: Ticks) {
        self.0 += rhs.0;
    }
}

impl Sub for Ticks {
    type Output = Ticks;
    fn sub(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 - rhs.0)
    }
}

impl Sum for Ticks {
    fn sum<I: Iterator<Item = Ticks>>(iter: I) -> Ticks {
        iter.fold(Ticks::ZERO, Add::add)
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_units())
    }
}

impl Serialize for Ticks {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_units())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_units() {
        for x in [0.0, 1.0, 0.5, 1234.25, 1e20] {
            assert_eq!(Ticks::from_units(x).unwrap().as_units(), x);
        }
        assert!(Ticks::from_units(-1.0).is_err());
        assert!(matches!(Ticks::from_units(1e30), Err(Error::TimeOverflow(_))));
        assert!(Ticks::from_units(f64::NAN).is_err());
    }

    #[test]
    fn integer_scaling_is_exact() {
        let xs = [0.1, 0.2, 0.7, 3.3];
        let ticks: Vec<Ticks> = xs.iter().map(|&x| Ticks::from_units(x).unwrap()).collect();
        let sum: Ticks = ticks.iter().copied().sum();
        let scaled: Ticks = ticks.iter().map(|t| t.checked_mul(3).unwrap()).sum();
        assert_eq!(scaled, sum.checked_mul(3).unwrap());
    }
}

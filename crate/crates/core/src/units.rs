//! Integer fixed-point quantities used throughout the simulator.
//!
//! Time is counted in microseconds, power in microwatts and energy in
//! picojoules, so that `power × time` is an exact integer product
//! (1 µW sustained for 1 µs is 1 pJ). Nothing in the accounting path touches
//! floating point.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const MICROS_PER_SEC: i64 = 1_000_000;
pub const PJ_PER_MJ: i128 = 1_000_000_000;
pub const UW_PER_MW: i64 = 1_000;

/// Identifier of a client registered with the Hotspot server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point in (or span of) simulated time, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Micros(pub i64);

impl Micros {
    pub const ZERO: Micros = Micros(0);

    pub const fn from_secs(s: i64) -> Self {
        Micros(s * MICROS_PER_SEC)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Micros(ms * 1_000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl Sum for Micros {
    fn sum<I: Iterator<Item = Micros>>(iter: I) -> Micros {
        Micros(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Electrical power in microwatts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Power(pub i64);

impl Power {
    pub const fn from_mw(mw: i64) -> Self {
        Power(mw * UW_PER_MW)
    }

    /// Rounds to the nearest microwatt.
    pub fn from_mw_f64(mw: f64) -> Self {
        Power((mw * UW_PER_MW as f64).round() as i64)
    }

    pub fn as_mw_f64(self) -> f64 {
        self.0 as f64 / UW_PER_MW as f64
    }

    /// Energy drawn at this power level for `duration`.
    pub fn over(self, duration: Micros) -> Energy {
        Energy(self.0 as i128 * duration.0 as i128)
    }
}

/// Energy in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(pub i128);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    pub const fn from_mj(mj: i64) -> Self {
        Energy(mj as i128 * PJ_PER_MJ)
    }

    /// Rounds to the nearest picojoule.
    pub fn from_mj_f64(mj: f64) -> Self {
        Energy((mj * PJ_PER_MJ as f64).round() as i128)
    }

    pub fn as_mj_f64(self) -> f64 {
        self.0 as f64 / PJ_PER_MJ as f64
    }

    /// Exact decimal rendering in millijoules (nine fractional digits).
    pub fn mj_fixed(self) -> String {
        fixed_decimal(self.0, 9)
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        Energy(iter.map(|e| e.0).sum())
    }
}

/// Mean power over a window, kept as the exact pair (energy, window) so that
/// `average × window == energy` holds without rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AveragePower {
    pub energy: Energy,
    pub window: Micros,
}

impl AveragePower {
    pub fn new(energy: Energy, window: Micros) -> Self {
        AveragePower { energy, window }
    }

    /// Milliwatts rounded half away from zero to `decimals` digits. Zero window
    /// yields zero.
    pub fn mw_fixed(&self, decimals: u32) -> String {
        if self.window.0 == 0 {
            return fixed_decimal(0, decimals);
        }
        // pJ / us = uW; scale to mW * 10^decimals.
        let scale = 10i128.pow(decimals);
        let num = self.energy.0 * scale;
        let den = self.window.0 as i128 * UW_PER_MW as i128;
        fixed_decimal(div_round(num, den), decimals)
    }

    pub fn as_mw_f64(&self) -> f64 {
        if self.window.0 == 0 {
            0.0
        } else {
            self.energy.0 as f64 / self.window.0 as f64 / UW_PER_MW as f64
        }
    }
}

/// Renders `value / 10^decimals` as a plain decimal string.
pub fn fixed_decimal(value: i128, decimals: u32) -> String {
    let scale = 10i128.pow(decimals);
    let sign = if value < 0 { "-" } else { "" };
    let abs = value.unsigned_abs();
    let whole = abs / scale as u128;
    let frac = abs % scale as u128;
    if decimals == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{frac:0width$}", width = decimals as usize)
    }
}

/// Integer division rounding half away from zero. `den` must be positive.
pub fn div_round(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den {
        q + num.signum()
    } else {
        q
    }
}

/// `ceil(a / b)` for non-negative `a` and positive `b`.
pub fn div_ceil(a: i128, b: i128) -> i128 {
    debug_assert!(a >= 0 && b > 0);
    (a + b - 1) / b
}

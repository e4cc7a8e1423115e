//! Measurement algebra: converter quantization, the zener input clamp and
//! the affine volts to engineering units calibration maps.
//!
//! The converter spans 0 to 5 V in 1023 steps, so one code is
//! `5 / 1023` V (about 4.888 mV). The divisor is 1023, not 1024: code 1023
//! reads exactly 5.0 V.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{RawCounts, FULL_SCALE};

/// ADC reference voltage.
pub const V_REF: f64 = 5.0;
/// Breakdown voltage of the protection zener on every input.
pub const ZENER_V: f64 = 5.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConversionError {
    #[error("count {0} exceeds the 10-bit full scale of {FULL_SCALE}")]
    CountOutOfRange(u32),
    #[error("value {value} is outside the map range [{lo}, {hi}]")]
    ValueOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
}

/// Electrical potential in volts.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Voltage(pub f64);

impl Voltage {
    #[inline]
    pub const fn volts(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Voltage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} V", self.0)
    }
}

/// Classification attached to every converted value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityFlag {
    Ok,
    UnderRange,
    OverRange,
    /// The converter returned its full-scale code, so the true input may be
    /// anywhere at or above the reference.
    Saturated,
}

impl QualityFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityFlag::Ok => "ok",
            QualityFlag::UnderRange => "under-range",
            QualityFlag::OverRange => "over-range",
            QualityFlag::Saturated => "saturated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => QualityFlag::Ok,
            "under-range" => QualityFlag::UnderRange,
            "over-range" => QualityFlag::OverRange,
            "saturated" => QualityFlag::Saturated,
            _ => return None,
        })
    }
}

impl fmt::Display for QualityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Converts a code to the voltage at the converter input: `c * 5 / 1023`.
pub fn counts_to_volts(c: RawCounts) -> Voltage {
    Voltage(f64::from(c.get()) * V_REF / f64::from(FULL_SCALE))
}

/// Checked variant of [`counts_to_volts`] for unvalidated integers.
pub fn try_counts_to_volts(c: u32) -> Result<Voltage, ConversionError> {
    let c = u16::try_from(c)
        .ok()
        .and_then(|c| RawCounts::new(c).ok())
        .ok_or(ConversionError::CountOutOfRange(c))?;
    Ok(counts_to_volts(c))
}

/// Quantizes a voltage: clamp to `[0, 5]`, scale to codes, round half away
/// from zero. Non-finite input clamps (NaN reads as 0).
pub fn volts_to_counts(v: Voltage) -> RawCounts {
    let v = if v.0.is_nan() { 0.0 } else { v.0.clamp(0.0, V_REF) };
    let code = (v * f64::from(FULL_SCALE) / V_REF).round();
    // `round` is half-away-from-zero; the clamp keeps the code in range.
    RawCounts::new(code as u16).unwrap_or(RawCounts::MAX)
}

/// Zener protection: saturates at 5.1 V, negative inputs read as 0 V.
pub fn zener_clamp(v: Voltage) -> Voltage {
    Voltage(v.0.max(0.0).min(ZENER_V))
}

/// Size of one converter code in volts.
pub fn lsb_volts() -> Voltage {
    Voltage(V_REF / f64::from(FULL_SCALE))
}

/// Worst-case quantization error, half a code.
pub fn half_lsb_volts() -> Voltage {
    Voltage(lsb_volts().0 / 2.0)
}

/// One code expressed as a fraction of full scale, in percent.
pub fn lsb_percent_of_full_scale() -> f64 {
    100.0 / f64::from(FULL_SCALE)
}

/// Affine calibration from conditioned volts to engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinearMap", into = "RawLinearMap")]
pub struct LinearMap {
    v_lo: f64,
    v_hi: f64,
    q_lo: f64,
    q_hi: f64,
    unit: String,
}

#[derive(Serialize, Deserialize)]
struct RawLinearMap {
    v_lo: f64,
    v_hi: f64,
    q_lo: f64,
    q_hi: f64,
    unit: String,
}

impl TryFrom<RawLinearMap> for LinearMap {
    type Error = ConversionError;

    fn try_from(r: RawLinearMap) -> Result<Self, Self::Error> {
        LinearMap::new(r.v_lo, r.v_hi, r.q_lo, r.q_hi, r.unit)
    }
}

impl From<LinearMap> for RawLinearMap {
    fn from(m: LinearMap) -> Self {
        RawLinearMap {
            v_lo: m.v_lo,
            v_hi: m.v_hi,
            q_lo: m.q_lo,
            q_hi: m.q_hi,
            unit: m.unit,
        }
    }
}

impl LinearMap {
    pub fn new(
        v_lo: f64,
        v_hi: f64,
        q_lo: f64,
        q_hi: f64,
        unit: impl Into<String>,
    ) -> Result<Self, ConversionError> {
        let unit = unit.into();
        if ![v_lo, v_hi, q_lo, q_hi].iter().all(|x| x.is_finite()) {
            return Err(ConversionError::InvalidMap("bounds must be finite".into()));
        }
        if v_lo >= v_hi {
            return Err(ConversionError::InvalidMap(format!(
                "v_lo ({v_lo}) must be below v_hi ({v_hi})"
            )));
        }
        if q_lo == q_hi {
            return Err(ConversionError::InvalidMap(
                "q_lo and q_hi must differ".into(),
            ));
        }
        // Units end up in CSV headers and JSON keys.
        if unit.chars().any(|c| matches!(c, ',' | '"' | '[' | ']' | '\r' | '\n')) {
            return Err(ConversionError::InvalidMap(format!(
                "unit {unit:?} contains a reserved character"
            )));
        }
        Ok(LinearMap {
            v_lo,
            v_hi,
            q_lo,
            q_hi,
            unit,
        })
    }

    /// Temperature channel: 0..5 V spans 0..50 °C.
    pub fn temperature() -> Self {
        LinearMap::new(0.0, 5.0, 0.0, 50.0, "°C").expect("valid preset")
    }

    /// Humidity channel: 1..5 V spans 10..90 %RH.
    pub fn humidity() -> Self {
        LinearMap::new(1.0, 5.0, 10.0, 90.0, "%RH").expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "temperature" => Some(Self::temperature()),
            "humidity" => Some(Self::humidity()),
            _ => None,
        }
    }

    pub fn v_lo(&self) -> f64 {
        self.v_lo
    }
    pub fn v_hi(&self) -> f64 {
        self.v_hi
    }
    pub fn q_lo(&self) -> f64 {
        self.q_lo
    }
    pub fn q_hi(&self) -> f64 {
        self.q_hi
    }
    pub fn unit(&self) -> &str {
        &self.unit
    }

    /// Engineering units per volt.
    pub fn slope(&self) -> f64 {
        (self.q_hi - self.q_lo) / (self.v_hi - self.v_lo)
    }

    fn q_bounds(&self) -> (f64, f64) {
        (self.q_lo.min(self.q_hi), self.q_lo.max(self.q_hi))
    }

    /// Evaluates the map with clamp-and-flag out-of-range handling.
    pub fn apply(&self, v: Voltage) -> (f64, QualityFlag) {
        let v = v.0;
        if v < self.v_lo {
            (self.q_lo, QualityFlag::UnderRange)
        } else if v > self.v_hi {
            (self.q_hi, QualityFlag::OverRange)
        } else if v == self.v_hi {
            (self.q_hi, QualityFlag::Ok)
        } else {
            (self.q_lo + (v - self.v_lo) * self.slope(), QualityFlag::Ok)
        }
    }

    /// Affine inverse: the voltage that maps to `q`.
    pub fn invert(&self, q: f64) -> Result<Voltage, ConversionError> {
        let (lo, hi) = self.q_bounds();
        if !(lo..=hi).contains(&q) {
            return Err(ConversionError::ValueOutOfRange { value: q, lo, hi });
        }
        Ok(Voltage(self.unclamped_volts(q)))
    }

    /// Affine inverse extended beyond the calibrated range. The simulator
    /// uses this so over-range truth values drive the input past the rails.
    pub fn unclamped_volts(&self, q: f64) -> f64 {
        if q == self.q_hi {
            return self.v_hi;
        }
        self.v_lo + (q - self.q_lo) / self.slope()
    }

    /// One converter code expressed in engineering units.
    pub fn lsb_in_units(&self) -> f64 {
        lsb_volts().0 * self.slope().abs()
    }
}

/// Free-function form of [`LinearMap::apply`].
pub fn apply_map(m: &LinearMap, v: Voltage) -> (f64, QualityFlag) {
    m.apply(v)
}

/// Free-function form of [`LinearMap::invert`].
pub fn invert_map(m: &LinearMap, q: f64) -> Result<Voltage, ConversionError> {
    m.invert(q)
}

pub fn lsb_in_units(m: &LinearMap) -> f64 {
    m.lsb_in_units()
}

/// Converts a code straight to engineering units. Full-scale codes carry the
/// `Saturated` flag unless the map already reports the value out of range.
pub fn convert_counts(m: &LinearMap, c: RawCounts) -> (f64, QualityFlag) {
    let (value, flag) = m.apply(counts_to_volts(c));
    if c == RawCounts::MAX && flag == QualityFlag::Ok {
        (value, QualityFlag::Saturated)
    } else {
        (value, flag)
    }
}

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::codec::CHANNELS;
use crate::conversion::LinearMap;
use crate::persistence::MIN_VALUE_PRECISION;

/// Calibration for one channel as it appears in config files and the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelMapConfig {
    pub channel: u8,
    pub v_lo: f64,
    pub v_hi: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub unit: String,
}

impl ChannelMapConfig {
    pub fn from_map(channel: u8, m: &LinearMap) -> Self {
        ChannelMapConfig {
            channel,
            v_lo: m.v_lo(),
            v_hi: m.v_hi(),
            q_lo: m.q_lo(),
            q_hi: m.q_hi(),
            unit: m.unit().to_owned(),
        }
    }

    pub fn to_map(&self) -> Result<LinearMap, crate::conversion::ConversionError> {
        LinearMap::new(self.v_lo, self.v_hi, self.q_lo, self.q_hi, self.unit.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogConfig {
    pub directory: PathBuf,
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_precision() -> usize {
    MIN_VALUE_PRECISION
}

/// Source of host timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostClock {
    /// Wall clock, polls paced at `poll_period_ms`.
    #[default]
    System,
    /// Polls run back to back; record `k` is stamped `VIRTUAL_EPOCH + k * poll_period_ms`.
    Virtual,
}

/// 2026-01-01T00:00:00Z, the origin of virtual host timestamps.
pub const VIRTUAL_EPOCH_MS: i64 = 1_767_225_600_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    #[serde(default = "default_poll_period")]
    pub poll_period_ms: u64,
    #[serde(default = "default_timeout")]
    pub response_timeout_ms: u64,
    #[serde(default = "default_enabled")]
    pub enabled_channels: Vec<u8>,
    #[serde(default)]
    pub channel_maps: Vec<ChannelMapConfig>,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<LogConfig>,
    #[serde(default)]
    pub clock: HostClock,
}

fn default_poll_period() -> u64 {
    1000
}
fn default_timeout() -> u64 {
    250
}
fn default_enabled() -> Vec<u8> {
    (0..CHANNELS as u8).collect()
}
fn default_capacity() -> usize {
    65_536
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            poll_period_ms: default_poll_period(),
            response_timeout_ms: default_timeout(),
            enabled_channels: default_enabled(),
            channel_maps: Vec::new(),
            buffer_capacity: default_capacity(),
            log: None,
            clock: HostClock::System,
        }
    }
}

/// A config invariant violation, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid acquisition config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ConfigErrors(pub Vec<FieldError>);

impl AcquisitionConfig {
    pub fn with_map(mut self, channel: u8, map: &LinearMap) -> Self {
        self.channel_maps.retain(|m| m.channel != channel);
        self.channel_maps.push(ChannelMapConfig::from_map(channel, map));
        self
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.to_owned(),
                message,
            })
        };
        if self.poll_period_ms == 0 {
            err("poll_period_ms", "must be > 0".into());
        }
        if self.response_timeout_ms == 0 {
            err("response_timeout_ms", "must be > 0".into());
        } else if self.response_timeout_ms >= self.poll_period_ms {
            err(
                "response_timeout_ms",
                format!(
                    "must be below poll_period_ms ({} >= {})",
                    self.response_timeout_ms, self.poll_period_ms
                ),
            );
        }
        if let Err(m) = check_channels(&self.enabled_channels) {
            err("enabled_channels", m);
        }
        if self.buffer_capacity == 0 {
            err("buffer_capacity", "must be > 0".into());
        }
        let mut seen = BTreeSet::new();
        for (i, m) in self.channel_maps.iter().enumerate() {
            let field = format!("channel_maps[{i}]");
            if usize::from(m.channel) >= CHANNELS {
                err(&field, format!("channel {} is not in 0..=7", m.channel));
            } else if !seen.insert(m.channel) {
                err(&field, format!("channel {} mapped twice", m.channel));
            }
            if let Err(e) = m.to_map() {
                err(&field, e.to_string());
            }
        }
        if let Some(log) = &self.log {
            if log.precision < MIN_VALUE_PRECISION {
                err(
                    "log.precision",
                    format!("must be >= {MIN_VALUE_PRECISION} to keep one code distinguishable"),
                );
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    /// Calibration maps indexed by channel. Assumes a validated config.
    pub fn maps(&self) -> [Option<LinearMap>; CHANNELS] {
        let mut out: [Option<LinearMap>; CHANNELS] = Default::default();
        for m in &self.channel_maps {
            if let (Some(slot), Ok(map)) = (out.get_mut(usize::from(m.channel)), m.to_map()) {
                *slot = Some(map);
            }
        }
        out
    }

    /// True if `other` differs from `self` only in `enabled_channels`.
    pub fn differs_only_in_selection(&self, other: &AcquisitionConfig) -> bool {
        let mut a = self.clone();
        a.enabled_channels = other.enabled_channels.clone();
        &a == other
    }
}

/// Validates a channel selection: non-empty, in range, no duplicates.
pub fn check_channels(channels: &[u8]) -> Result<(), String> {
    if channels.is_empty() {
        return Err("at least one channel must be enabled".into());
    }
    let mut seen = BTreeSet::new();
    for &c in channels {
        if usize::from(c) >= CHANNELS {
            return Err(format!("channel {c} is not in 0..=7"));
        }
        if !seen.insert(c) {
            return Err(format!("channel {c} listed twice"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = AcquisitionConfig::default();
        assert_eq!(cfg.poll_period_ms, 1000);
        assert_eq!(cfg.response_timeout_ms, 250);
        assert_eq!(cfg.buffer_capacity, 65_536);
        cfg.validate().unwrap();
        let parsed: AcquisitionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn invariant_violations_name_fields() {
        let mut cfg = AcquisitionConfig {
            response_timeout_ms: 1000,
            enabled_channels: vec![],
            ..AcquisitionConfig::default()
        };
        cfg.channel_maps.push(ChannelMapConfig {
            channel: 0,
            v_lo: 1.0,
            v_hi: 1.0,
            q_lo: 0.0,
            q_hi: 1.0,
            unit: "x".into(),
        });
        let errs = cfg.validate().unwrap_err().0;
        let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(
            fields,
            ["response_timeout_ms", "enabled_channels", "channel_maps[0]"]
        );
    }

    #[test]
    fn map_round_trip_through_json() {
        let cfg = AcquisitionConfig::default().with_map(0, &LinearMap::temperature());
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""channel_maps":[{"channel":0,"v_lo":0.0,"v_hi":5.0,"q_lo":0.0,"q_hi":50.0,"unit":"°C"}]"#), "{json}");
        let back: AcquisitionConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.maps()[0], Some(LinearMap::temperature()));
        assert_eq!(back.maps()[1], None);
    }

    #[test]
    fn selection_only_difference() {
        let a = AcquisitionConfig::default();
        let b = AcquisitionConfig {
            enabled_channels: vec![0, 1],
            ..a.clone()
        };
        assert!(a.differs_only_in_selection(&b));
        let c = AcquisitionConfig {
            poll_period_ms: 500,
            ..b.clone()
        };
        assert!(!a.differs_only_in_selection(&c));
    }
}

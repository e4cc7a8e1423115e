//! Per-channel analog signal generators.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::codec::RawCounts;
use crate::conversion::{volts_to_counts, zener_clamp, LinearMap, Voltage};

/// Ground-truth signal shape, in engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Waveform {
    Constant {
        level: f64,
    },
    Sine {
        offset: f64,
        amplitude: f64,
        period_s: f64,
    },
    /// Linear from `start` to `end` over `duration_s`, then holds `end`.
    Ramp {
        start: f64,
        end: f64,
        duration_s: f64,
    },
    /// Piecewise-linear playback of `(time_s, value)` points, holding the
    /// first and last values outside the recorded span. A config may name a
    /// CSV log instead; [`Waveform::resolve`] loads it into `points`.
    Replay {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        points: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channel: Option<u8>,
    },
}

impl Waveform {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidSource(msg.to_owned()));
        match self {
            Waveform::Constant { level } if !level.is_finite() => bad("level must be finite"),
            Waveform::Sine { period_s, .. } if !(*period_s > 0.0 && period_s.is_finite()) => {
                bad("sine period_s must be > 0")
            }
            Waveform::Ramp { duration_s, .. } if !(*duration_s > 0.0 && duration_s.is_finite()) => {
                bad("ramp duration_s must be > 0")
            }
            Waveform::Replay { points, log, .. } => {
                if log.is_some() {
                    return Ok(());
                }
                if points.is_empty() {
                    return bad("replay needs points or a log file");
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("replay times must be strictly increasing");
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return bad("replay points must be finite");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Loads a referenced replay log into inline points. Other kinds are
    /// returned unchanged.
    pub fn resolve(self) -> Result<Self, SimError> {
        match self {
            Waveform::Replay {
                log: Some(path),
                channel,
                ..
            } => {
                let channel = channel.unwrap_or(0);
                let series = crate::analysis::Series::from_log_file(&path, channel)
                    .map_err(|e| SimError::InvalidSource(format!("replay {}: {e}", path.display())))?;
                let w = Waveform::Replay {
                    points: series.points().to_vec(),
                    log: None,
                    channel: None,
                };
                w.validate()?;
                Ok(w)
            }
            other => Ok(other),
        }
    }

    /// Noise-free value at time `t` seconds.
    pub fn value_at(&self, t: f64) -> f64 {
        match *self {
            Waveform::Constant { level } => level,
            Waveform::Sine {
                offset,
                amplitude,
                period_s,
            } => offset + amplitude * (TAU * t / period_s).sin(),
            Waveform::Ramp {
                start,
                end,
                duration_s,
            } => {
                if t >= duration_s {
                    end
                } else {
                    start + (end - start) * (t / duration_s)
                }
            }
            Waveform::Replay { ref points, .. } => interpolate(points, t),
        }
    }
}

fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [(_, v)] => *v,
        _ => {
            let i = points.partition_point(|&(pt, _)| pt <= t);
            if i == 0 {
                return points[0].1;
            }
            if i == points.len() {
                return points[i - 1].1;
            }
            let (t0, v0) = points[i - 1];
            let (t1, v1) = points[i];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

/// Map reference in config files: a preset name or an explicit map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Preset(String),
    Custom(LinearMap),
}

impl MapSpec {
    pub fn resolve(&self) -> Result<LinearMap, SimError> {
        match self {
            MapSpec::Preset(name) => LinearMap::preset(name)
                .ok_or_else(|| SimError::InvalidSource(format!("unknown map preset {name:?}"))),
            MapSpec::Custom(m) => Ok(m.clone()),
        }
    }
}

/// A simulated sensor: signal shape, additive Gaussian noise and the
/// conditioning map that turns engineering units into volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSource", into = "RawSource")]
pub struct ChannelSource {
    waveform: Waveform,
    noise_sigma: f64,
    map: LinearMap,
}

#[derive(Serialize, Deserialize)]
struct RawSource {
    #[serde(flatten)]
    waveform: Waveform,
    #[serde(default)]
    noise_sigma: f64,
    map: MapSpec,
}

impl TryFrom<RawSource> for ChannelSource {
    type Error = SimError;

    fn try_from(r: RawSource) -> Result<Self, SimError> {
        ChannelSource::new(r.waveform, r.noise_sigma, r.map.resolve()?)
    }
}

impl From<ChannelSource> for RawSource {
    fn from(s: ChannelSource) -> Self {
        RawSource {
            waveform: s.waveform,
            noise_sigma: s.noise_sigma,
            map: MapSpec::Custom(s.map),
        }
    }
}

/// One evaluation of a source: the pre-noise truth and the resulting code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub truth: f64,
    pub counts: RawCounts,
}

impl ChannelSource {
    pub fn new(waveform: Waveform, noise_sigma: f64, map: LinearMap) -> Result<Self, SimError> {
        waveform.validate()?;
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(SimError::InvalidSource("noise_sigma must be >= 0".into()));
        }
        Ok(ChannelSource {
            waveform,
            noise_sigma,
            map,
        })
    }

    pub fn constant(level: f64, map: LinearMap) -> Self {
        ChannelSource::new(Waveform::Constant { level }, 0.0, map).expect("finite level")
    }

    pub fn with_noise(mut self, sigma: f64) -> Result<Self, SimError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(SimError::InvalidSource("noise_sigma must be >= 0".into()));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    pub fn waveform(&self) -> &Waveform {
        &self.waveform
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub(crate) fn resolve(self) -> Result<Self, SimError> {
        Ok(ChannelSource {
            waveform: self.waveform.resolve()?,
            ..self
        })
    }

    /// Runs the conditioning chain at time `t`: truth, plus noise, through
    /// the map into volts, zener clamp, then quantization. Zero-noise sources
    /// draw nothing from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Sample {
        let truth = self.waveform.value_at(t);
        let noisy = if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
            truth + normal.sample(rng)
        } else {
            truth
        };
        let volts = zener_clamp(Voltage(self.map.unclamped_volts(noisy)));
        Sample {
            truth,
            counts: volts_to_counts(volts),
        }
    }
}

/// Samples `src` at time `t`, returning only the converter code.
pub fn sample_channel<R: Rng + ?Sized>(src: &ChannelSource, t: f64, rng: &mut R) -> RawCounts {
    src.sample(t, rng).counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn constant_sources_quantize_through_the_chain() {
        let t = ChannelSource::constant(25.0, LinearMap::temperature());
        assert_eq!(sample_channel(&t, 0.0, &mut rng()).get(), 512);
        let h = ChannelSource::constant(90.0, LinearMap::humidity());
        assert_eq!(sample_channel(&h, 3.0, &mut rng()).get(), 1023);
        let hot = ChannelSource::constant(120.0, LinearMap::temperature());
        assert_eq!(sample_channel(&hot, 0.0, &mut rng()).get(), 1023);
        let cold = ChannelSource::constant(-40.0, LinearMap::temperature());
        assert_eq!(sample_channel(&cold, 0.0, &mut rng()).get(), 0);
    }

    #[test]
    fn waveform_values() {
        let ramp = Waveform::Ramp {
            start: 0.0,
            end: 50.0,
            duration_s: 100.0,
        };
        assert_eq!(ramp.value_at(0.0), 0.0);
        assert_eq!(ramp.value_at(50.0), 25.0);
        assert_eq!(ramp.value_at(150.0), 50.0);

        let sine = Waveform::Sine {
            offset: 50.0,
            amplitude: 20.0,
            period_s: 4.0,
        };
        assert!((sine.value_at(1.0) - 70.0).abs() < 1e-12);
        assert!((sine.value_at(3.0) - 30.0).abs() < 1e-12);

        let replay = Waveform::Replay {
            points: vec![(0.0, 1.0), (10.0, 3.0)],
            log: None,
            channel: None,
        };
        assert_eq!(replay.value_at(-5.0), 1.0);
        assert_eq!(replay.value_at(5.0), 2.0);
        assert_eq!(replay.value_at(20.0), 3.0);
    }

    #[test]
    fn invalid_sources_are_rejected() {
        let m = LinearMap::temperature();
        let sine = Waveform::Sine {
            offset: 0.0,
            amplitude: 1.0,
            period_s: 0.0,
        };
        assert!(ChannelSource::new(sine, 0.0, m.clone()).is_err());
        let ramp = Waveform::Ramp {
            start: 0.0,
            end: 1.0,
            duration_s: -1.0,
        };
        assert!(ChannelSource::new(ramp, 0.0, m.clone()).is_err());
        let replay = Waveform::Replay {
            points: vec![(1.0, 0.0), (0.5, 1.0)],
            log: None,
            channel: None,
        };
        assert!(ChannelSource::new(replay, 0.0, m.clone()).is_err());
        let c = Waveform::Constant { level: 1.0 };
        assert!(ChannelSource::new(c, -0.1, m).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let src = ChannelSource::constant(50.0, LinearMap::humidity())
            .with_noise(2.0)
            .unwrap();
        let a: Vec<u16> = {
            let mut r = rng();
            (0..50).map(|i| sample_channel(&src, i as f64, &mut r).get()).collect()
        };
        let b: Vec<u16> = {
            let mut r = rng();
            (0..50).map(|i| sample_channel(&src, i as f64, &mut r).get()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().any(|&c| c != a[0]));
    }

    #[test]
    fn config_form() {
        let json = r#"{"kind":"sine","offset":50,"amplitude":20,"period_s":3600,"noise_sigma":0.5,"map":"humidity"}"#;
        let src: ChannelSource = serde_json::from_str(json).unwrap();
        assert_eq!(src.map(), &LinearMap::humidity());
        assert_eq!(src.noise_sigma(), 0.5);

        let json = r#"{"kind":"constant","level":1,"map":{"v_lo":0,"v_hi":5,"q_lo":0,"q_hi":100,"unit":"lux"}}"#;
        let src: ChannelSource = serde_json::from_str(json).unwrap();
        assert_eq!(src.map().unit(), "lux");

        let json = r#"{"kind":"constant","level":1,"map":"pressure"}"#;
        assert!(serde_json::from_str::<ChannelSource>(json).is_err());
    }
}

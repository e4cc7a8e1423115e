use std::fs;
use std::io::{self, Read, Write};
use std::net::TcpListener;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clock::{ClockMode, DeviceClock};
use super::source::ChannelSource;
use super::SimError;
use crate::codec::{self, RawCounts, RawFrame, CHANNELS, FRAME_LEN, POLL_REQUEST};
use crate::persistence::TruthLedger;

/// A source bound to one analog input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAssignment {
    pub channel: u8,
    #[serde(flatten)]
    pub source: ChannelSource,
}

/// Response faults for exercising the host's loss handling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Swallow every Nth response (1-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_every: Option<u64>,
    /// Swallow each response independently with this probability.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub drop_probability: f64,
    /// Send every Nth response with a corrupted digit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_every: Option<u64>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Declarative device configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub sources: Vec<ChannelAssignment>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub faults: FaultConfig,
}

impl SimConfig {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = serde_json::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file, resolving replay logs relative to
    /// the working directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)?.resolve()
    }

    /// Loads replay logs referenced by any source into inline points.
    pub fn resolve(mut self) -> Result<Self, SimError> {
        for a in &mut self.sources {
            a.source = a.source.clone().resolve()?;
        }
        Ok(self)
    }

    pub fn with_source(mut self, channel: u8, source: ChannelSource) -> Self {
        self.sources.push(ChannelAssignment { channel, source });
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut seen = [false; CHANNELS];
        for a in &self.sources {
            let ch = usize::from(a.channel);
            if ch >= CHANNELS {
                return Err(SimError::Config(format!("channel {ch} is not in 0..=7")));
            }
            if std::mem::replace(&mut seen[ch], true) {
                return Err(SimError::Config(format!("channel {ch} assigned twice")));
            }
        }
        if let ClockMode::Virtual { poll_period_s } = self.clock {
            if !(poll_period_s >= 0.0 && poll_period_s.is_finite()) {
                return Err(SimError::Config("poll_period_s must be >= 0".into()));
            }
        }
        let p = self.faults.drop_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::Config("drop_probability must be in [0, 1]".into()));
        }
        if self.faults.drop_every == Some(0) || self.faults.corrupt_every == Some(0) {
            return Err(SimError::Config("fault intervals must be >= 1".into()));
        }
        Ok(())
    }
}

/// Running totals kept by a device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStats {
    pub polls: u64,
    pub frames_generated: u64,
    pub frames_sent: u64,
    pub dropped: u64,
    pub corrupted: u64,
}

/// Firmware model: waits for polls, samples every input at the current
/// clock instant and answers with one frame per poll.
pub struct Device {
    sources: [Option<ChannelSource>; CHANNELS],
    faults: FaultConfig,
    noise_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    clock: DeviceClock,
    seq: u8,
    stats: DeviceStats,
    truth: TruthLedger,
}

impl Device {
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut sources: [Option<ChannelSource>; CHANNELS] = Default::default();
        for a in &cfg.sources {
            sources[usize::from(a.channel)] = Some(a.source.clone());
        }
        let truth = TruthLedger::new(
            cfg.sources
                .iter()
                .map(|a| (a.channel, a.source.map().unit().to_owned()))
                .collect(),
        );
        Ok(Device {
            sources,
            faults: cfg.faults.clone(),
            noise_rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            // Separate stream so enabling faults never perturbs the noise.
            fault_rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x9E37_79B9_7F4A_7C15),
            clock: DeviceClock::new(cfg.clock),
            seq: 0,
            stats: DeviceStats::default(),
            truth,
        })
    }

    pub fn stats(&self) -> DeviceStats {
        self.stats
    }

    /// Exact pre-noise, pre-quantization values behind every generated frame.
    pub fn truth(&self) -> &TruthLedger {
        &self.truth
    }

    pub fn now_s(&self) -> f64 {
        self.clock.now_s()
    }

    /// Samples all inputs and builds the next frame, advancing the sequence
    /// counter and the virtual clock.
    pub fn next_frame(&mut self) -> RawFrame {
        let t = self.clock.now_s();
        let mut counts = [RawCounts::ZERO; CHANNELS];
        let mut truth = Vec::with_capacity(self.truth.channels().len());
        for (slot, src) in counts.iter_mut().zip(&self.sources) {
            if let Some(src) = src {
                let s = src.sample(t, &mut self.noise_rng);
                *slot = s.counts;
                truth.push(s.truth);
            }
        }
        let frame = RawFrame::new(self.seq, counts);
        self.truth.push(self.seq, t, truth);
        self.seq = self.seq.wrapping_add(1);
        self.stats.frames_generated += 1;
        self.clock.tick();
        frame
    }

    /// Handles one recognized poll, returning the bytes to send, if any.
    pub fn respond(&mut self) -> Option<[u8; FRAME_LEN]> {
        self.stats.polls += 1;
        let frame = self.next_frame();
        let n = self.stats.frames_generated;
        let mut drop = self.faults.drop_every.is_some_and(|k| n.is_multiple_of(k));
        if self.faults.drop_probability > 0.0 {
            drop |= self.fault_rng.random::<f64>() < self.faults.drop_probability;
        }
        if drop {
            self.stats.dropped += 1;
            return None;
        }
        let mut bytes = codec::encode_frame(&frame);
        if self.faults.corrupt_every.is_some_and(|k| n.is_multiple_of(k)) {
            // Bump one digit of channel 0; the checksum no longer matches.
            bytes[6] = if bytes[6] == b'9' { b'0' } else { bytes[6] + 1 };
            self.stats.corrupted += 1;
        }
        self.stats.frames_sent += 1;
        Some(bytes)
    }

    /// Serves one transport until the peer closes it. Bytes that do not end
    /// a poll request are skipped without a response.
    pub fn serve<T: Read + Write>(&mut self, transport: &mut T) -> Result<DeviceStats, SimError> {
        let mut window = [0u8; 3];
        let mut filled = 0usize;
        let mut buf = [0u8; 256];
        loop {
            let n = match transport.read(&mut buf) {
                Ok(0) => return Ok(self.stats),
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) if is_disconnect(&e) => return Ok(self.stats),
                Err(e) => return Err(SimError::Transport(e)),
            };
            for &b in &buf[..n] {
                window = [window[1], window[2], b];
                filled = (filled + 1).min(3);
                if filled == 3 && window == POLL_REQUEST {
                    filled = 0;
                    if let Some(frame) = self.respond() {
                        match transport.write_all(&frame).and_then(|_| transport.flush()) {
                            Ok(()) => {}
                            Err(e) if is_disconnect(&e) => return Ok(self.stats),
                            Err(e) => return Err(SimError::Transport(e)),
                        }
                    }
                }
            }
        }
    }
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::BrokenPipe
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::UnexpectedEof
    )
}

/// Runs a fresh device over `transport` until the transport closes.
pub fn run_device<T: Read + Write>(cfg: &SimConfig, transport: &mut T) -> Result<Device, SimError> {
    let mut device = Device::new(cfg)?;
    device.serve(transport)?;
    Ok(device)
}

/// Serves TCP connections one at a time with a single persistent device, as
/// if the same unit were unplugged and replugged. Returns after
/// `max_connections` connections, or never when `None`. `on_close` runs
/// after each connection ends.
pub fn serve_tcp(
    listener: &TcpListener,
    device: &mut Device,
    max_connections: Option<usize>,
    mut on_close: impl FnMut(&Device),
) -> Result<(), SimError> {
    let mut served = 0usize;
    while max_connections.is_none_or(|m| served < m) {
        let (mut stream, peer) = listener.accept().map_err(SimError::Transport)?;
        log::info!("device connection from {peer}");
        stream.set_nodelay(true).ok();
        if let Err(e) = device.serve(&mut stream) {
            log::warn!("device connection from {peer} failed: {e}");
        }
        on_close(device);
        served += 1;
    }
    Ok(())
}

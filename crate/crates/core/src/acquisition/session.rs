use std::io;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{check_channels, AcquisitionConfig, ConfigErrors, HostClock, VIRTUAL_EPOCH_MS};
use super::record::{GapReport, SampleRecord, Sink};
use crate::codec::{self, DecodeError, RawFrame, CHANNELS};
use crate::conversion::LinearMap;
use crate::time::Timestamp;
use crate::transport::{is_timeout, Transport};

// Longest run of bytes without a line feed before the poller gives up on it.
const MAX_LINE: usize = 4096;

#[derive(Debug, Error)]
pub enum PollError {
    #[error("no frame within {0:?}")]
    Timeout(Duration),
    #[error("bad frame: {0}")]
    Decode(#[from] DecodeError),
    #[error("transport closed by device")]
    Closed,
    #[error("transport failure: {0}")]
    Transport(#[source] io::Error),
}

/// Host side of one device connection: writes polls, reassembles and
/// decodes frames, converts them into records.
pub struct Poller<T> {
    transport: T,
    pending: Vec<u8>,
    timeout: Duration,
    maps: [Option<LinearMap>; CHANNELS],
}

impl<T: Transport> Poller<T> {
    pub fn new(transport: T, cfg: &AcquisitionConfig) -> Self {
        Poller {
            transport,
            pending: Vec::with_capacity(codec::FRAME_LEN * 2),
            timeout: Duration::from_millis(cfg.response_timeout_ms),
            maps: cfg.maps(),
        }
    }

    pub fn into_inner(self) -> T {
        self.transport
    }

    /// Sends one poll and waits for the next complete line. Leftovers from
    /// an earlier timed-out poll are discarded first.
    pub fn poll_frame(&mut self) -> Result<RawFrame, PollError> {
        self.pending.clear();
        self.transport
            .write_all(&codec::encode_poll())
            .and_then(|_| self.transport.flush())
            .map_err(map_io)?;
        let deadline = Instant::now() + self.timeout;
        let mut chunk = [0u8; 256];
        loop {
            if let Some(pos) = self.pending.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.pending.drain(..=pos).collect();
                return Ok(codec::decode_frame(&line)?);
            }
            if self.pending.len() > MAX_LINE {
                let len = self.pending.len();
                self.pending.clear();
                return Err(DecodeError::WrongLength { len }.into());
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(PollError::Timeout(self.timeout));
            }
            self.transport
                .set_read_timeout(Some(remaining))
                .map_err(PollError::Transport)?;
            match self.transport.read(&mut chunk) {
                Ok(0) => return Err(PollError::Closed),
                Ok(n) => self.pending.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) if is_timeout(&e) => return Err(PollError::Timeout(self.timeout)),
                Err(e) => return Err(map_io(e)),
            }
        }
    }

    /// Polls once and converts the frame, stamping it when it completes.
    pub fn poll_record(
        &mut self,
        enabled_channels: &[u8],
        stamp: impl FnOnce() -> Timestamp,
    ) -> Result<SampleRecord, PollError> {
        let frame = self.poll_frame()?;
        Ok(SampleRecord::from_frame(
            &frame,
            stamp(),
            &self.maps,
            enabled_channels,
        ))
    }
}

fn map_io(e: io::Error) -> PollError {
    match e.kind() {
        io::ErrorKind::BrokenPipe
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::UnexpectedEof => PollError::Closed,
        _ => PollError::Transport(e),
    }
}

/// One poll against `transport`, timestamped with the wall clock.
pub fn poll_once<T: Transport>(
    transport: &mut T,
    cfg: &AcquisitionConfig,
) -> Result<SampleRecord, PollError> {
    Poller::new(transport, cfg).poll_record(&cfg.enabled_channels, Timestamp::now)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum EndReason {
    Completed,
    Stopped,
    TransportLost(String),
    SinkFailed(String),
}

/// Session counters. `polls == records + timeouts + decode_errors` holds at
/// every observation point.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub polls: u64,
    pub records: u64,
    pub timeouts: u64,
    pub decode_errors: u64,
    /// Number of gap reports.
    pub gaps: u64,
    /// Sum of `missed_count` over all gap reports.
    pub missed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<EndReason>,
}

impl SessionSummary {
    pub fn is_conserved(&self) -> bool {
        self.polls == self.records + self.timeouts + self.decode_errors
    }
}

/// Shared handle for steering a running session from other threads.
pub struct SessionControl {
    stop: Mutex<bool>,
    wake: Condvar,
    selection: Mutex<Vec<u8>>,
    summary: Mutex<SessionSummary>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionControl {
    pub fn new(enabled_channels: Vec<u8>) -> Arc<Self> {
        Arc::new(SessionControl {
            stop: Mutex::new(false),
            wake: Condvar::new(),
            selection: Mutex::new(enabled_channels),
            summary: Mutex::new(SessionSummary::default()),
        })
    }

    /// Requests a clean stop; takes effect between polls.
    pub fn stop(&self) {
        *lock(&self.stop) = true;
        self.wake.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *lock(&self.stop)
    }

    /// Changes the logged and displayed channels from the next record on.
    pub fn set_enabled_channels(&self, channels: Vec<u8>) -> Result<(), String> {
        check_channels(&channels)?;
        *lock(&self.selection) = channels;
        Ok(())
    }

    pub fn enabled_channels(&self) -> Vec<u8> {
        lock(&self.selection).clone()
    }

    /// Snapshot of the live counters.
    pub fn summary(&self) -> SessionSummary {
        lock(&self.summary).clone()
    }

    fn update(&self, f: impl FnOnce(&mut SessionSummary)) {
        f(&mut lock(&self.summary));
    }

    /// Sleeps until `deadline`, returning early with `true` on stop.
    fn sleep_until(&self, deadline: Instant) -> bool {
        let mut stopped = lock(&self.stop);
        loop {
            if *stopped {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            stopped = self
                .wake
                .wait_timeout(stopped, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

/// Runs a polling session until `max_polls` polls were issued, the control
/// handle asks for a stop, or the transport is lost.
///
/// With the system clock, poll `k` is issued at `start + k * poll_period`.
/// With the virtual clock polls run back to back and are stamped
/// `VIRTUAL_EPOCH_MS + k * poll_period_ms`.
pub fn run_session<T: Transport, S: Sink>(
    transport: T,
    cfg: &AcquisitionConfig,
    sink: &mut S,
    control: &SessionControl,
    max_polls: Option<u64>,
) -> Result<SessionSummary, ConfigErrors> {
    cfg.validate()?;
    let mut poller = Poller::new(transport, cfg);
    let period = Duration::from_millis(cfg.poll_period_ms);
    let start = Instant::now();
    let mut last_seq: Option<u8> = None;
    let mut last_time = Timestamp(i64::MIN);
    let mut k: u64 = 0;

    let end = loop {
        if max_polls.is_some_and(|m| k >= m) {
            break EndReason::Completed;
        }
        let stopped = match cfg.clock {
            HostClock::System => control.sleep_until(start + period * k as u32),
            HostClock::Virtual => control.is_stopped(),
        };
        if stopped {
            break EndReason::Stopped;
        }

        let enabled = control.enabled_channels();
        let stamp = || match cfg.clock {
            HostClock::System => Timestamp::now().max(last_time),
            HostClock::Virtual => Timestamp(VIRTUAL_EPOCH_MS + (k * cfg.poll_period_ms) as i64),
        };
        let outcome = poller.poll_record(&enabled, stamp);
        k += 1;

        match outcome {
            Ok(record) => {
                last_time = record.host_time;
                let gap = last_seq.and_then(|s| GapReport::detect(s, record.seq, record.host_time));
                last_seq = Some(record.seq);
                let delivered = match &gap {
                    Some(g) => sink.gap(g).and_then(|_| sink.record(&record)),
                    None => sink.record(&record),
                };
                control.update(|s| {
                    s.polls += 1;
                    s.records += 1;
                    if let Some(g) = &gap {
                        s.gaps += 1;
                        s.missed += u64::from(g.missed_count);
                    }
                });
                if let Err(e) = delivered {
                    break EndReason::SinkFailed(e.to_string());
                }
            }
            Err(PollError::Timeout(_)) => control.update(|s| {
                s.polls += 1;
                s.timeouts += 1;
            }),
            Err(PollError::Decode(e)) => {
                log::debug!("poll {k}: {e}");
                control.update(|s| {
                    s.polls += 1;
                    s.decode_errors += 1;
                });
            }
            // A poll whose transport failed has no outcome and is not counted.
            Err(e @ (PollError::Closed | PollError::Transport(_))) => {
                break EndReason::TransportLost(e.to_string());
            }
        }
    };

    let end = match (sink.finish(), end) {
        (Err(e), EndReason::Completed | EndReason::Stopped) => EndReason::SinkFailed(e.to_string()),
        (_, end) => end,
    };
    control.update(|s| s.end = Some(end));
    Ok(control.summary())
}

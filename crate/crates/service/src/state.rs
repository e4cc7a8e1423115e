use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use daq_core::acquisition::{
    run_session, AcquisitionConfig, EndReason, FieldError, RecordBuffer, SessionControl,
    SessionSummary, Subscription,
};
use daq_core::persistence::{CsvLogger, LogPolicy};
use daq_core::sim::run_device;
use daq_core::transport::{duplex_pipe, Transport};
use serde::{Deserialize, Serialize};

use crate::config::{DeviceEndpoint, ServiceConfig};
use crate::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Acquiring,
    Error,
}

/// Body of `GET /status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub phase: Phase,
    pub polls: u64,
    pub records: u64,
    pub timeouts: u64,
    pub decode_errors: u64,
    pub gaps: u64,
    pub missed: u64,
    /// Seconds since the service started.
    pub uptime_s: f64,
    pub device: String,
    pub enabled_channels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Body of a successful start or stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub phase: Phase,
    pub summary: SessionSummary,
}

struct Running {
    control: Arc<SessionControl>,
    thread: JoinHandle<()>,
}

struct Inner {
    phase: Phase,
    config: AcquisitionConfig,
    summary: SessionSummary,
    error: Option<String>,
    running: Option<Running>,
    log: Option<PathBuf>,
}

/// The acquisition service: one device, at most one session at a time.
pub struct Service {
    // Serializes start, stop and config changes.
    ops: Mutex<()>,
    inner: Arc<Mutex<Inner>>,
    buffer: Arc<RecordBuffer>,
    device: DeviceEndpoint,
    connect_timeout: Duration,
    started: Instant,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Service {
    pub fn new(cfg: ServiceConfig) -> Arc<Self> {
        Arc::new(Service {
            ops: Mutex::new(()),
            buffer: RecordBuffer::new(cfg.acquisition.buffer_capacity.max(1)),
            inner: Arc::new(Mutex::new(Inner {
                phase: Phase::Idle,
                config: cfg.acquisition,
                summary: SessionSummary::default(),
                error: None,
                running: None,
                log: None,
            })),
            device: cfg.device,
            connect_timeout: Duration::from_millis(cfg.connect_timeout_ms),
            started: Instant::now(),
        })
    }

    pub fn phase(&self) -> Phase {
        lock(&self.inner).phase
    }

    pub fn status(&self) -> Status {
        let inner = lock(&self.inner);
        let s = match &inner.running {
            Some(r) => r.control.summary(),
            None => inner.summary.clone(),
        };
        Status {
            phase: inner.phase,
            polls: s.polls,
            records: s.records,
            timeouts: s.timeouts,
            decode_errors: s.decode_errors,
            gaps: s.gaps,
            missed: s.missed,
            uptime_s: self.started.elapsed().as_secs_f64(),
            device: self.device.describe(),
            enabled_channels: inner.config.enabled_channels.clone(),
            error: inner.error.clone(),
        }
    }

    pub fn config(&self) -> AcquisitionConfig {
        lock(&self.inner).config.clone()
    }

    /// Replaces the configuration. While acquiring only the channel
    /// selection may change; it takes effect from the next record.
    pub fn put_config(&self, cfg: AcquisitionConfig) -> Result<AcquisitionConfig, ApiError> {
        let _ops = lock(&self.ops);
        let mut inner = lock(&self.inner);
        match inner.phase {
            Phase::Idle => {
                cfg.validate().map_err(|e| ApiError::Invalid(e.0))?;
                inner.config = cfg.clone();
                Ok(cfg)
            }
            Phase::Acquiring if inner.config.differs_only_in_selection(&cfg) => {
                let running = inner.running.as_ref().expect("acquiring without a session");
                running.control.set_enabled_channels(cfg.enabled_channels.clone()).map_err(|m| {
                    ApiError::Invalid(vec![FieldError {
                        field: "enabled_channels".into(),
                        message: m,
                    }])
                })?;
                inner.config.enabled_channels = cfg.enabled_channels;
                Ok(inner.config.clone())
            }
            Phase::Acquiring => Err(ApiError::Conflict(
                "only enabled_channels can change while acquiring".into(),
            )),
            Phase::Error => Err(ApiError::Conflict(
                "service is in the error phase; stop to reset it first".into(),
            )),
        }
    }

    fn connect(&self) -> Result<Box<dyn Transport>, ApiError> {
        match &self.device {
            DeviceEndpoint::Tcp { address } => {
                let addrs: Vec<_> = address
                    .to_socket_addrs()
                    .map_err(|e| ApiError::BadGateway(format!("{address}: {e}")))?
                    .collect();
                let mut last = None;
                for a in addrs {
                    match TcpStream::connect_timeout(&a, self.connect_timeout) {
                        Ok(s) => {
                            s.set_nodelay(true).ok();
                            return Ok(Box::new(s));
                        }
                        Err(e) => last = Some(e),
                    }
                }
                Err(ApiError::BadGateway(match last {
                    Some(e) => format!("{address}: {e}"),
                    None => format!("{address}: no addresses"),
                }))
            }
            DeviceEndpoint::Simulated { sim } => {
                let (host, mut dev) = duplex_pipe();
                let sim = sim.clone();
                thread::Builder::new()
                    .name("daq-sim".into())
                    .spawn(move || {
                        if let Err(e) = run_device(&sim, &mut dev) {
                            log::warn!("simulated device failed: {e}");
                        }
                    })
                    .map_err(|e| ApiError::Internal(e.to_string()))?;
                Ok(Box::new(host))
            }
        }
    }

    /// Opens the device and starts a session. Blocks for at most the
    /// connect timeout.
    pub fn start(&self) -> Result<Ack, ApiError> {
        let _ops = lock(&self.ops);
        let cfg = {
            let inner = lock(&self.inner);
            if inner.phase != Phase::Idle {
                return Err(ApiError::Conflict(format!(
                    "cannot start while {}",
                    phase_name(inner.phase)
                )));
            }
            inner.config.clone()
        };
        cfg.validate().map_err(|e| ApiError::Invalid(e.0))?;
        let transport = self.connect()?;
        let logger = match &cfg.log {
            Some(l) => Some(
                CsvLogger::create(LogPolicy::from(l), cfg.maps(), &cfg.enabled_channels, chrono::Utc::now())
                    .map_err(|e| ApiError::Internal(format!("log: {e}")))?,
            ),
            None => None,
        };
        let first_log = logger.as_ref().and_then(|l| l.files().first().cloned());

        let control = SessionControl::new(cfg.enabled_channels.clone());
        // Hold the state lock across the spawn so a session that dies at
        // once cannot record its error before it is marked as running.
        let mut inner = lock(&self.inner);
        let thread = {
            let control = Arc::clone(&control);
            let shared = Arc::clone(&self.inner);
            let buffer = Arc::clone(&self.buffer);
            thread::Builder::new()
                .name("daq-session".into())
                .spawn(move || session_thread(transport, cfg, buffer, logger, control, shared))
                .map_err(|e| ApiError::Internal(e.to_string()))?
        };
        inner.phase = Phase::Acquiring;
        inner.error = None;
        inner.summary = SessionSummary::default();
        if first_log.is_some() {
            inner.log = first_log;
        }
        inner.running = Some(Running {
            control: Arc::clone(&control),
            thread,
        });
        Ok(Ack {
            phase: Phase::Acquiring,
            summary: control.summary(),
        })
    }

    /// Stops the session, waits for it to drain and close its log, and
    /// returns to idle. Also clears the error phase.
    pub fn stop(&self) -> Result<Ack, ApiError> {
        let _ops = lock(&self.ops);
        let running = {
            let mut inner = lock(&self.inner);
            match inner.phase {
                Phase::Idle => return Err(ApiError::Conflict("not acquiring".into())),
                Phase::Error => {
                    inner.phase = Phase::Idle;
                    inner.error = None;
                    return Ok(Ack {
                        phase: Phase::Idle,
                        summary: inner.summary.clone(),
                    });
                }
                Phase::Acquiring => inner.running.take(),
            }
        };
        if let Some(r) = running {
            r.control.stop();
            if r.thread.join().is_err() {
                log::error!("session thread panicked");
            }
            let mut inner = lock(&self.inner);
            // The thread already stored the final summary; keep the
            // summary in sync even if it ended on its own meanwhile.
            inner.summary = r.control.summary();
        }
        let mut inner = lock(&self.inner);
        inner.phase = Phase::Idle;
        inner.error = None;
        Ok(Ack {
            phase: Phase::Idle,
            summary: inner.summary.clone(),
        })
    }

    /// Records published from now on.
    pub fn subscribe(&self) -> Subscription {
        self.buffer.subscribe()
    }

    /// Most recently written log file, if any session logged.
    pub fn latest_log(&self) -> Option<PathBuf> {
        lock(&self.inner).log.clone()
    }

    /// Stops any session and closes the record stream.
    pub fn shutdown(&self) {
        if self.phase() == Phase::Acquiring {
            let _ = self.stop();
        }
        self.buffer.close();
    }
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Idle => "idle",
        Phase::Acquiring => "acquiring",
        Phase::Error => "in the error phase",
    }
}

fn session_thread(
    transport: Box<dyn Transport>,
    cfg: AcquisitionConfig,
    buffer: Arc<RecordBuffer>,
    mut logger: Option<CsvLogger>,
    control: Arc<SessionControl>,
    inner: Arc<Mutex<Inner>>,
) {
    let mut sink = (Arc::clone(&buffer), logger.as_mut());
    let summary = match run_session(transport, &cfg, &mut sink, &control, None) {
        Ok(s) => s,
        Err(e) => SessionSummary {
            end: Some(EndReason::SinkFailed(e.to_string())),
            ..control.summary()
        },
    };
    let last_log = logger.as_ref().and_then(|l| l.files().last().cloned());
    let mut inner = lock(&inner);
    if last_log.is_some() {
        inner.log = last_log;
    }
    inner.summary = summary.clone();
    if !control.is_stopped() {
        // Ended on its own: the device went away or the log failed.
        let why = match summary.end {
            Some(EndReason::TransportLost(m)) => format!("device lost: {m}"),
            Some(EndReason::SinkFailed(m)) => format!("logging failed: {m}"),
            other => format!("session ended: {other:?}"),
        };
        log::warn!("{why}");
        inner.phase = Phase::Error;
        inner.error = Some(why);
        inner.running = None;
    }
}

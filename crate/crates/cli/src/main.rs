//! `daq`: run a simulated device, acquire from one, serve the HTTP API,
//! convert counts and compare series.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure. Results go to
//! stdout as JSON, diagnostics to stderr.

use std::fs;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use daq_core::acquisition::{
    run_session, AcquisitionConfig, EndReason, HostClock, SessionControl, SessionSummary,
};
use daq_core::analysis::{align, write_plot_csv, AgreementStats, Report, Series};
use daq_core::codec::{RawCounts, FULL_SCALE};
use daq_core::conversion::{convert_counts, counts_to_volts, LinearMap};
use daq_core::persistence::{CsvLogger, LogPolicy, MIN_VALUE_PRECISION};
use daq_core::sim::{run_device, serve_tcp, ClockMode, Device, SimConfig};
use daq_core::transport::{duplex_pipe, Transport};
use daq_service::{DeviceEndpoint, ServiceConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "daq", version, about = "Polled 8-channel 10-bit data acquisition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated device on TCP or stdin/stdout.
    Simulate(SimulateArgs),
    /// Run one acquisition session and log it to CSV.
    Acquire(AcquireArgs),
    /// Run the HTTP control and streaming service.
    Serve(ServeArgs),
    /// Convert a raw count to volts and, optionally, engineering units.
    Convert(ConvertArgs),
    /// Compare two series (record logs or ground-truth exports).
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulator config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// TCP address to listen on.
    #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
    listen: Option<String>,
    /// Speak the protocol on stdin/stdout.
    #[arg(long)]
    stdio: bool,
    /// Advance time by the configured poll period per poll instead of the wall clock.
    #[arg(long)]
    virtual_clock: bool,
    /// Write the ground-truth series here whenever a connection ends.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Exit after this many TCP connections.
    #[arg(long)]
    max_connections: Option<usize>,
}

#[derive(Args)]
struct AcquireArgs {
    /// Device TCP address.
    #[arg(long, required_unless_present = "sim", conflicts_with = "sim")]
    device: Option<String>,
    /// Run this simulator config in-process instead of connecting.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Base acquisition config (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Poll period in milliseconds.
    #[arg(long)]
    period: Option<u64>,
    /// Response timeout in milliseconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Number of polls to issue.
    #[arg(long)]
    duration: u64,
    /// CSV log file to write.
    #[arg(long)]
    out: PathBuf,
    /// Channels to log, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<u8>>,
    /// Calibration preset per channel, e.g. `0=temperature`.
    #[arg(long = "map", value_parser = parse_map_arg)]
    maps: Vec<(u8, LinearMap)>,
    /// Decimal places for engineering values.
    #[arg(long, default_value_t = MIN_VALUE_PRECISION)]
    precision: usize,
    /// Poll back to back and stamp records on a virtual 1-per-period clock.
    #[arg(long)]
    virtual_clock: bool,
    /// Also write the simulator's ground truth (with --sim only).
    #[arg(long, requires = "sim")]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Service config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `listen`.
    #[arg(long)]
    listen: Option<String>,
    /// Overrides `device` with a TCP address.
    #[arg(long)]
    device: Option<String>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Raw ADC count.
    #[arg(long, value_parser = clap::value_parser!(u16).range(0..=i64::from(FULL_SCALE)))]
    counts: u16,
    /// Calibration preset.
    #[arg(long, value_parser = ["temperature", "humidity"])]
    map: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Channel to read from `a` (and from `b` unless --channel-b is given).
    #[arg(long, default_value_t = 0)]
    channel: u8,
    #[arg(long)]
    channel_b: Option<u8>,
    /// Also write `t,a,b,diff` rows here.
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn parse_map_arg(s: &str) -> Result<(u8, LinearMap), String> {
    let (ch, name) = s
        .split_once('=')
        .ok_or_else(|| format!("expected CHANNEL=PRESET, got {s:?}"))?;
    let ch: u8 = ch.parse().map_err(|_| format!("bad channel {ch:?}"))?;
    let map = LinearMap::preset(name).ok_or_else(|| format!("unknown preset {name:?}"))?;
    Ok((ch, map))
}

/// A runtime failure, reported on stderr with exit code 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn print_json<T: Serialize>(v: &T) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Acquire(a) => acquire(a),
        Command::Serve(a) => serve(a),
        Command::Convert(a) => convert(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("daq: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_sim(path: &Path, virtual_clock: bool) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::load(path)?;
    if virtual_clock && !matches!(cfg.clock, ClockMode::Virtual { .. }) {
        cfg.clock = ClockMode::Virtual { poll_period_s: 1.0 };
    }
    Ok(cfg)
}

fn write_truth(device: &Device, path: &Path) {
    if let Err(e) = device.truth().write_csv_file(path) {
        log::error!("writing truth to {}: {e}", path.display());
    }
}

struct StdioTransport;

impl Read for StdioTransport {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        io::stdin().lock().read(buf)
    }
}

impl Write for StdioTransport {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stdout().lock().write(buf)
    }
    fn flush(&mut self) -> io::Result<()> {
        io::stdout().lock().flush()
    }
}

fn simulate(a: SimulateArgs) -> Outcome {
    let cfg = load_sim(&a.config, a.virtual_clock)?;
    let mut device = Device::new(&cfg)?;
    if a.stdio {
        device.serve(&mut StdioTransport)?;
        if let Some(p) = &a.truth {
            write_truth(&device, p);
        }
        return Ok(());
    }
    let addr = a.listen.expect("clap requires --listen without --stdio");
    let listener = TcpListener::bind(&addr).map_err(|e| Failure(format!("{addr}: {e}")))?;
    eprintln!("daq: simulated device listening on {}", listener.local_addr()?);
    serve_tcp(&listener, &mut device, a.max_connections, |d| {
        if let Some(p) = &a.truth {
            write_truth(d, p);
        }
    })?;
    Ok(())
}

fn acquire(a: AcquireArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())))?)?,
        None => AcquisitionConfig::default(),
    };
    if let Some(p) = a.period {
        cfg.poll_period_ms = p;
        if a.timeout.is_none() && cfg.response_timeout_ms >= p {
            cfg.response_timeout_ms = (p * 4 / 5).max(1);
        }
    }
    if let Some(t) = a.timeout {
        cfg.response_timeout_ms = t;
    }
    if let Some(ch) = a.channels {
        cfg.enabled_channels = ch;
    }
    for (ch, m) in &a.maps {
        cfg = cfg.with_map(*ch, m);
    }
    if a.virtual_clock {
        cfg.clock = HostClock::Virtual;
    }
    cfg.validate()?;

    let mut sim_thread = None;
    let transport: Box<dyn Transport> = match (&a.device, &a.sim) {
        (Some(addr), _) => {
            let s = TcpStream::connect(addr).map_err(|e| Failure(format!("device {addr}: {e}")))?;
            s.set_nodelay(true).ok();
            Box::new(s)
        }
        (None, Some(path)) => {
            let sim = load_sim(path, a.virtual_clock)?;
            let (host, mut dev) = duplex_pipe();
            sim_thread = Some(thread::spawn(move || run_device(&sim, &mut dev)));
            Box::new(host)
        }
        (None, None) => unreachable!("clap requires --device or --sim"),
    };

    let dir = match a.out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_owned(),
        _ => PathBuf::from("."),
    };
    let name = a
        .out
        .file_name()
        .ok_or_else(|| Failure(format!("{}: not a file path", a.out.display())))?
        .to_string_lossy()
        .replace('%', "%%");
    match fs::remove_file(&a.out) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e.into()),
        _ => {}
    }
    let policy = LogPolicy {
        file_pattern: name,
        value_precision: a.precision,
        ..LogPolicy::new(dir)
    };
    let mut logger = CsvLogger::create(policy, cfg.maps(), &cfg.enabled_channels, chrono::Utc::now())?;
    let control = SessionControl::new(cfg.enabled_channels.clone());
    let summary: SessionSummary = run_session(transport, &cfg, &mut logger, &control, Some(a.duration))?;

    if let Some(t) = sim_thread {
        let device = t.join().map_err(|_| Failure("simulator panicked".into()))??;
        if let Some(p) = &a.truth {
            device.truth().write_csv_file(p)?;
        }
    }
    print_json(&summary)?;
    match &summary.end {
        Some(EndReason::TransportLost(m)) => Err(Failure(format!("device lost: {m}"))),
        Some(EndReason::SinkFailed(m)) => Err(Failure(format!("logging failed: {m}"))),
        _ => Ok(()),
    }
}

fn serve(a: ServeArgs) -> Outcome {
    let mut cfg = ServiceConfig::load(&a.config)?;
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    if let Some(d) = a.device {
        cfg.device = DeviceEndpoint::Tcp { address: d };
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .map_err(|e| Failure(format!("{}: {e}", cfg.listen)))?;
        eprintln!("daq: service listening on {}", listener.local_addr()?);
        let service = daq_service::Service::new(cfg);
        daq_service::serve_on(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

#[derive(Serialize)]
struct Conversion {
    counts: u16,
    volts: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flag: Option<&'static str>,
}

fn convert(a: ConvertArgs) -> Outcome {
    let c = RawCounts::new(a.counts)?;
    let mut out = Conversion {
        counts: a.counts,
        volts: counts_to_volts(c).0,
        value: None,
        unit: None,
        flag: None,
    };
    if let Some(m) = a.map.as_deref().and_then(LinearMap::preset) {
        let (v, flag) = convert_counts(&m, c);
        out.value = Some(v);
        out.unit = Some(m.unit().to_owned());
        out.flag = Some(flag.as_str());
    }
    print_json(&out)
}

fn compare(a: CompareArgs) -> Outcome {
    let sa = Series::from_file(&a.a, a.channel).map_err(|e| Failure(format!("{}: {e}", a.a.display())))?;
    let ch_b = a.channel_b.unwrap_or(a.channel);
    let sb = Series::from_file(&a.b, ch_b).map_err(|e| Failure(format!("{}: {e}", a.b.display())))?;
    let pairs = align(&sa, &sb)?;
    if let Some(p) = &a.plot {
        write_plot_csv(io::BufWriter::new(fs::File::create(p)?), &pairs)?;
    }
    print_json(&Report {
        unit: sa.unit().to_owned(),
        stats: AgreementStats::from_pairs(&pairs),
    })
}

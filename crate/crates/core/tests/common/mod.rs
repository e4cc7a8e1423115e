#![allow(dead_code)]

use std::thread;

use daq_core::acquisition::{
    run_session, AcquisitionConfig, Collector, HostClock, SessionControl, SessionSummary, Sink,
};
use daq_core::conversion::LinearMap;
use daq_core::sim::{run_device, ChannelSource, Device, SimConfig};
use daq_core::transport::duplex_pipe;

pub fn virtual_host() -> AcquisitionConfig {
    AcquisitionConfig {
        clock: HostClock::Virtual,
        response_timeout_ms: 500,
        ..AcquisitionConfig::default()
    }
    .with_map(0, &LinearMap::temperature())
    .with_map(1, &LinearMap::humidity())
}

pub fn constant_sim(celsius: f64) -> SimConfig {
    SimConfig::default().with_source(0, ChannelSource::constant(celsius, LinearMap::temperature()))
}

/// Runs a simulated device against a host session over an in-process pipe.
pub fn run_with_sink<S: Sink>(
    sim: &SimConfig,
    host: &AcquisitionConfig,
    sink: &mut S,
    max_polls: u64,
) -> (SessionSummary, Device) {
    let (host_end, mut dev_end) = duplex_pipe();
    let sim = sim.clone();
    let dev = thread::spawn(move || run_device(&sim, &mut dev_end).unwrap());
    let control = SessionControl::new(host.enabled_channels.clone());
    let summary = run_session(host_end, host, sink, &control, Some(max_polls)).unwrap();
    (summary, dev.join().unwrap())
}

pub fn run(sim: &SimConfig, host: &AcquisitionConfig, max_polls: u64) -> (SessionSummary, Collector, Device) {
    let mut c = Collector::new();
    let (s, d) = run_with_sink(sim, host, &mut c, max_polls);
    (s, c, d)
}

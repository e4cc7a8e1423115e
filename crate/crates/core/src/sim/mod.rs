//! Deterministic model of the acquisition device firmware.

mod clock;
mod device;
mod source;

use thiserror::Error;

pub use clock::{advance_clock, ClockMode, VirtualClock};
pub use device::{
    run_device, serve_tcp, ChannelAssignment, Device, DeviceStats, FaultConfig, SimConfig,
};
pub use source::{sample_channel, ChannelSource, MapSpec, Sample, Waveform};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("time step {0} must be finite and >= 0")]
    NegativeTimeStep(f64),
    #[error("transport failure: {0}")]
    Transport(#[source] std::io::Error),
}

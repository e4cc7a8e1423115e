//! Host-side polling engine: issues polls, decodes and converts frames,
//! accounts for losses and fans records out to consumers.

mod buffer;
mod config;
mod record;
mod session;

pub use buffer::{subscribe, Next, RecordBuffer, Subscription};
pub use config::{
    check_channels, AcquisitionConfig, ChannelMapConfig, ConfigErrors, FieldError, HostClock,
    LogConfig, VIRTUAL_EPOCH_MS,
};
pub use record::{ChannelValue, Collector, GapReport, SampleRecord, Sink, SinkError};
pub use session::{
    poll_once, run_session, EndReason, PollError, Poller, SessionControl, SessionSummary,
};

//! Polled 8-channel, 10-bit data acquisition.
//!
//! A host writes a poll request; the device answers with one ASCII frame
//! carrying a sequence number and eight 0..=1023 counts. This crate holds
//! the frame codec, count/voltage/engineering-unit conversion, a
//! deterministic device simulator, the host polling engine, CSV logging and
//! series comparison.

pub mod acquisition;
pub mod analysis;
pub mod batch;
pub mod codec;
pub mod conversion;
pub mod persistence;
pub mod sim;
pub mod time;
pub mod transport;

use serde::{Deserialize, Serialize};

use crate::codec::{RawCounts, RawFrame, CHANNELS};
use crate::conversion::{convert_counts, counts_to_volts, LinearMap, QualityFlag, Voltage};
use crate::time::Timestamp;

/// Engineering-unit reading for one mapped channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelValue {
    pub channel: u8,
    pub value: f64,
    pub unit: String,
    pub flag: QualityFlag,
}

/// A timestamped, fully converted frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seq: u8,
    pub host_time: Timestamp,
    pub counts: [RawCounts; CHANNELS],
    pub volts: [Voltage; CHANNELS],
    /// Readings for channels that have a calibration map, ascending by channel.
    pub values: Vec<ChannelValue>,
    /// Channel selection in force when the record was taken.
    pub enabled_channels: Vec<u8>,
}

impl SampleRecord {
    pub fn from_frame(
        frame: &RawFrame,
        host_time: Timestamp,
        maps: &[Option<LinearMap>; CHANNELS],
        enabled_channels: &[u8],
    ) -> Self {
        let volts = frame.counts.map(counts_to_volts);
        let values = maps
            .iter()
            .enumerate()
            .filter_map(|(ch, m)| {
                let m = m.as_ref()?;
                let (value, flag) = convert_counts(m, frame.counts[ch]);
                Some(ChannelValue {
                    channel: ch as u8,
                    value,
                    unit: m.unit().to_owned(),
                    flag,
                })
            })
            .collect();
        SampleRecord {
            seq: frame.seq,
            host_time,
            counts: frame.counts,
            volts,
            values,
            enabled_channels: enabled_channels.to_vec(),
        }
    }

    pub fn value(&self, channel: u8) -> Option<&ChannelValue> {
        self.values.iter().find(|v| v.channel == channel)
    }
}

/// A jump in the device sequence counter: frames generated but never received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub expected_seq: u8,
    pub received_seq: u8,
    pub missed_count: u32,
    pub timestamp: Timestamp,
}

impl GapReport {
    /// Compares a received sequence number with the one that should follow
    /// `last`. Returns `None` when they agree.
    pub fn detect(last: u8, received: u8, timestamp: Timestamp) -> Option<Self> {
        let expected = last.wrapping_add(1);
        (received != expected).then(|| GapReport {
            expected_seq: expected,
            received_seq: received,
            missed_count: u32::from(received.wrapping_sub(expected)),
            timestamp,
        })
    }
}

pub type SinkError = Box<dyn std::error::Error + Send + Sync>;

/// Consumer of a session's output. Gap reports are delivered before the
/// record that revealed them.
pub trait Sink {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError>;

    fn gap(&mut self, _gap: &GapReport) -> Result<(), SinkError> {
        Ok(())
    }

    /// Called once when the session ends.
    fn finish(&mut self) -> Result<(), SinkError> {
        Ok(())
    }
}

impl<S: Sink + ?Sized> Sink for &mut S {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        (**self).record(record)
    }
    fn gap(&mut self, gap: &GapReport) -> Result<(), SinkError> {
        (**self).gap(gap)
    }
    fn finish(&mut self) -> Result<(), SinkError> {
        (**self).finish()
    }
}

impl<S: Sink + ?Sized> Sink for Box<S> {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        (**self).record(record)
    }
    fn gap(&mut self, gap: &GapReport) -> Result<(), SinkError> {
        (**self).gap(gap)
    }
    fn finish(&mut self) -> Result<(), SinkError> {
        (**self).finish()
    }
}

impl<A: Sink, B: Sink> Sink for (A, B) {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        self.0.record(record)?;
        self.1.record(record)
    }
    fn gap(&mut self, gap: &GapReport) -> Result<(), SinkError> {
        self.0.gap(gap)?;
        self.1.gap(gap)
    }
    fn finish(&mut self) -> Result<(), SinkError> {
        self.0.finish()?;
        self.1.finish()
    }
}

impl<S: Sink> Sink for Option<S> {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        self.as_mut().map_or(Ok(()), |s| s.record(record))
    }
    fn gap(&mut self, gap: &GapReport) -> Result<(), SinkError> {
        self.as_mut().map_or(Ok(()), |s| s.gap(gap))
    }
    fn finish(&mut self) -> Result<(), SinkError> {
        self.as_mut().map_or(Ok(()), |s| s.finish())
    }
}

/// Keeps everything in memory, in delivery order.
#[derive(Debug, Default, Clone)]
pub struct Collector {
    pub records: Vec<SampleRecord>,
    pub gaps: Vec<GapReport>,
}

impl Collector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn missed_total(&self) -> u64 {
        self.gaps.iter().map(|g| u64::from(g.missed_count)).sum()
    }
}

impl Sink for Collector {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        self.records.push(record.clone());
        Ok(())
    }

    fn gap(&mut self, gap: &GapReport) -> Result<(), SinkError> {
        self.gaps.push(*gap);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_conversion() {
        let frame = RawFrame::from_raw(4, &[512, 0, 0, 1023, 0, 0, 0, 0]).unwrap();
        let mut maps: [Option<LinearMap>; CHANNELS] = Default::default();
        maps[0] = Some(LinearMap::temperature());
        maps[3] = Some(LinearMap::humidity());
        let r = SampleRecord::from_frame(&frame, Timestamp(0), &maps, &[0, 3]);
        assert_eq!(r.volts[0], counts_to_volts(frame.counts[0]));
        assert_eq!(r.values.len(), 2);
        let t = r.value(0).unwrap();
        assert!((t.value - 25.0).abs() <= LinearMap::temperature().lsb_in_units() / 2.0);
        assert_eq!(t.unit, "°C");
        assert_eq!(r.value(3).unwrap().flag, QualityFlag::Saturated);
        assert!(r.value(1).is_none());
    }

    #[test]
    fn gap_arithmetic_wraps() {
        assert_eq!(GapReport::detect(5, 6, Timestamp(0)), None);
        assert_eq!(GapReport::detect(255, 0, Timestamp(0)), None);
        let g = GapReport::detect(254, 1, Timestamp(0)).unwrap();
        assert_eq!((g.expected_seq, g.received_seq, g.missed_count), (255, 1, 2));
        assert_eq!(GapReport::detect(10, 10, Timestamp(0)).unwrap().missed_count, 255);
    }

    #[test]
    fn stream_json_shape() {
        let frame = RawFrame::from_raw(1, &[512, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let mut maps: [Option<LinearMap>; CHANNELS] = Default::default();
        maps[0] = Some(LinearMap::temperature());
        let r = SampleRecord::from_frame(&frame, Timestamp(0), &maps, &[0]);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["seq"], 1);
        assert_eq!(v["host_time"], "1970-01-01T00:00:00.000Z");
        assert_eq!(v["counts"].as_array().unwrap().len(), 8);
        assert_eq!(v["volts"].as_array().unwrap().len(), 8);
        assert_eq!(v["values"][0]["channel"], 0);
        assert_eq!(v["values"][0]["flag"], "ok");
        let back: SampleRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
